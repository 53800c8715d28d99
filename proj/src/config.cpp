#include "patchlab/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "patchlab/rng.hpp"
#include "patchlab/strfmt.hpp"

namespace patchlab {

void ExperimentConfig::validate() const {
  data.validate();
  if (model.m < 1) throw std::invalid_argument("model: m must be at least 1");
  if (!(model.act.beta > 0.0 && model.act.beta <= 1.0))
    throw std::invalid_argument("model: beta must be in (0, 1]");
  if (!(model.act.r > 0.0)) throw std::invalid_argument("model: r must be positive");
  if (!(model.init.sigma0 > 0.0))
    throw std::invalid_argument("model: sigma0 must be positive");
  if (runs.empty()) throw std::invalid_argument("at least one [train] section required");
  std::set<std::string> labels;
  for (const TrainSpec& spec : runs) {
    if (!labels.insert(spec.label).second)
      throw std::invalid_argument("duplicate train label '" + spec.label + "'");
    spec.train.validate(data.P);
  }
  if (eval.n_test < 1) throw std::invalid_argument("eval: n_test must be at least 1");
  if (output.dir.empty()) throw std::invalid_argument("output: dir must be nonempty");
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.m == b.m && a.act.beta == b.act.beta && a.act.r == b.act.r &&
         a.init.sigma0 == b.init.sigma0 && a.init.seed == b.init.seed;
}

bool operator==(const EvalConfig& a, const EvalConfig& b) {
  return a.n_test == b.n_test && a.seed == b.seed;
}

bool operator==(const OutputConfig& a, const OutputConfig& b) {
  return a.dir == b.dir && a.plots == b.plots;
}

bool operator==(const TrainSpec& a, const TrainSpec& b) {
  const TrainConfig &x = a.train, &y = b.train;
  return a.label == b.label && x.method == y.method && x.eta == y.eta && x.T == y.T &&
         x.C == y.C && x.log_every == y.log_every && x.grad_tol == y.grad_tol &&
         x.threads == y.threads;
}

static bool data_equal(const DataConfig& a, const DataConfig& b) {
  return a.d == b.d && a.n == b.n && a.P == b.P && a.rho == b.rho &&
         std::equal(a.tiers, a.tiers + 3, b.tiers) && a.sigma_d == b.sigma_d &&
         a.sigma_b == b.sigma_b && a.alpha == b.alpha && a.seed == b.seed;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return data_equal(a.data, b.data) && a.model == b.model && a.runs == b.runs &&
         a.eval == b.eval && a.output == b.output;
}

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool valid_label(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
      return false;
  return true;
}

// Parser state; every error names the origin and one-based line number.
struct Parser {
  const std::string& origin;
  int line = 0;

  // line 0 marks whole-file problems found after the last line
  [[noreturn]] void fail(const std::string& msg) const {
    if (line <= 0) throw std::runtime_error(origin + ": " + msg);
    throw std::runtime_error(origin + ":" + std::to_string(line) + ": " + msg);
  }

  double to_double(const std::string& v) const {
    double out = 0.0;
    const char* b = v.data();
    const char* e = b + v.size();
    auto res = std::from_chars(b, e, out);
    if (res.ec != std::errc() || res.ptr != e) fail("expected a number, got '" + v + "'");
    return out;
  }

  long long to_int(const std::string& v) const {
    long long out = 0;
    const char* b = v.data();
    const char* e = b + v.size();
    auto res = std::from_chars(b, e, out);
    if (res.ec != std::errc() || res.ptr != e)
      fail("expected an integer, got '" + v + "'");
    return out;
  }

  std::uint64_t to_seed(const std::string& v) const {
    std::uint64_t out = 0;
    const char* b = v.data();
    const char* e = b + v.size();
    auto res = std::from_chars(b, e, out);
    if (res.ec != std::errc() || res.ptr != e)
      fail("expected an unsigned integer, got '" + v + "'");
    return out;
  }

  bool to_bool(const std::string& v) const {
    if (v == "true") return true;
    if (v == "false") return false;
    fail("expected true or false, got '" + v + "'");
  }

  std::vector<double> to_list(const std::string& v) const {
    std::vector<double> out;
    size_t pos = 0;
    while (pos <= v.size()) {
      const size_t comma = std::min(v.find(',', pos), v.size());
      out.push_back(to_double(trim(v.substr(pos, comma - pos))));
      pos = comma + 1;
    }
    return out;
  }
};

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
  ExperimentConfig cfg;
  Parser ps{origin};

  enum class Section { NONE, DATA, MODEL, TRAIN, EVAL, OUTPUT };
  Section section = Section::NONE;
  TrainSpec* run = nullptr;
  std::vector<bool> method_seen;        // parallel to cfg.runs
  std::set<std::string> seen_sections;  // one instance of each singleton section
  std::set<std::string> seen_keys;      // reset per section
  std::set<std::string> data_keys;      // required-key audit for [data]

  std::istringstream in(text);
  std::string raw;
  while (std::getline(in, raw)) {
    ++ps.line;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;

    if (line.front() == '[') {
      if (line.back() != ']') ps.fail("section header missing ']'");
      const std::string inner = trim(line.substr(1, line.size() - 2));
      const size_t sp = inner.find(' ');
      const std::string name = inner.substr(0, sp);
      const std::string label =
          sp == std::string::npos ? std::string() : trim(inner.substr(sp + 1));
      seen_keys.clear();
      run = nullptr;
      if (name == "train") {
        if (!valid_label(label))
          ps.fail("train section needs a label of [A-Za-z0-9_-], got '" + label + "'");
        for (const TrainSpec& spec : cfg.runs)
          if (spec.label == label) ps.fail("duplicate section [train " + label + "]");
        section = Section::TRAIN;
        cfg.runs.push_back(TrainSpec{label, TrainConfig{}});
        method_seen.push_back(false);
        run = &cfg.runs.back();
        continue;
      }
      if (!label.empty()) ps.fail("only [train] sections take a label");
      if (!seen_sections.insert(name).second) ps.fail("duplicate section [" + name + "]");
      if (name == "data") section = Section::DATA;
      else if (name == "model") section = Section::MODEL;
      else if (name == "eval") section = Section::EVAL;
      else if (name == "output") section = Section::OUTPUT;
      else ps.fail("unknown section [" + name + "]");
      continue;
    }

    const size_t eq = line.find('=');
    if (eq == std::string::npos) ps.fail("expected 'key = value' or a section header");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) ps.fail("empty key");
    if (val.empty()) ps.fail("empty value for '" + key + "'");
    if (section == Section::NONE) ps.fail("'" + key + "' appears before any section");
    if (!seen_keys.insert(key).second) ps.fail("duplicate key '" + key + "'");

    switch (section) {
      case Section::DATA: {
        data_keys.insert(key);
        if (key == "d") cfg.data.d = int(ps.to_int(val));
        else if (key == "n") cfg.data.n = int(ps.to_int(val));
        else if (key == "P") cfg.data.P = int(ps.to_int(val));
        else if (key == "rho") cfg.data.rho = ps.to_list(val);
        else if (key == "tiers") {
          const std::vector<double> t = ps.to_list(val);
          if (t.size() != 3) ps.fail("tiers needs exactly three counts");
          for (int i = 0; i < 3; ++i) cfg.data.tiers[i] = int(t[size_t(i)]);
        } else if (key == "sigma_d") cfg.data.sigma_d = ps.to_double(val);
        else if (key == "sigma_b") cfg.data.sigma_b = ps.to_double(val);
        else if (key == "alpha") cfg.data.alpha = ps.to_double(val);
        else if (key == "seed") cfg.data.seed = ps.to_seed(val);
        else ps.fail("unknown key '" + key + "' in [data]");
        break;
      }
      case Section::MODEL: {
        if (key == "m") cfg.model.m = int(ps.to_int(val));
        else if (key == "beta") cfg.model.act.beta = ps.to_double(val);
        else if (key == "r") cfg.model.act.r = ps.to_double(val);
        else if (key == "sigma0") cfg.model.init.sigma0 = ps.to_double(val);
        else if (key == "seed") cfg.model.init.seed = ps.to_seed(val);
        else ps.fail("unknown key '" + key + "' in [model]");
        break;
      }
      case Section::TRAIN: {
        TrainConfig& tc = run->train;
        if (key == "method") {
          const std::optional<Method> m = method_from_name(val);
          if (!m) ps.fail("unknown method '" + val + "'");
          tc.method = *m;
          method_seen.back() = true;
        } else if (key == "eta") tc.eta = ps.to_double(val);
        else if (key == "T") tc.T = int(ps.to_int(val));
        else if (key == "C") tc.C = int(ps.to_int(val));
        else if (key == "log_every") tc.log_every = int(ps.to_int(val));
        else if (key == "grad_tol") tc.grad_tol = ps.to_double(val);
        else ps.fail("unknown key '" + key + "' in [train]");
        break;
      }
      case Section::EVAL: {
        if (key == "n_test") cfg.eval.n_test = long(ps.to_int(val));
        else if (key == "seed") cfg.eval.seed = ps.to_seed(val);
        else ps.fail("unknown key '" + key + "' in [eval]");
        break;
      }
      case Section::OUTPUT: {
        if (key == "dir") cfg.output.dir = val;
        else if (key == "plots") cfg.output.plots = ps.to_bool(val);
        else ps.fail("unknown key '" + key + "' in [output]");
        break;
      }
      case Section::NONE: break;
    }
  }

  ps.line = 0;
  if (!seen_sections.count("data")) ps.fail("missing [data] section");
  for (const char* req : {"d", "n", "P", "rho", "tiers", "sigma_d", "sigma_b", "alpha",
                          "seed"})
    if (!data_keys.count(req)) ps.fail(std::string("missing [data] key '") + req + "'");
  if (cfg.runs.empty()) ps.fail("missing [train <label>] section");
  for (size_t i = 0; i < cfg.runs.size(); ++i)
    if (!method_seen[i])
      ps.fail("[train " + cfg.runs[i].label + "] is missing the 'method' key");
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path,
                                   std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  ExperimentConfig cfg = parse_config_text(buf.str(), path);
  if (seed_override) {
    cfg.data.seed = *seed_override;
    cfg.model.init.seed = derive_seed(*seed_override, 1);
    cfg.eval.seed = derive_seed(*seed_override, 2);
  }
  cfg.validate();
  return cfg;
}

static std::string fmt_u64(std::uint64_t v) {
  char buf[24];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  auto kv = [&out](const char* key, const std::string& val) {
    out += key;
    out += " = ";
    out += val;
    out += '\n';
  };

  out += "[data]\n";
  kv("d", fmt_int(cfg.data.d));
  kv("n", fmt_int(cfg.data.n));
  kv("P", fmt_int(cfg.data.P));
  std::string rho;
  for (size_t i = 0; i < cfg.data.rho.size(); ++i) {
    if (i) rho += ',';
    rho += fmt_double(cfg.data.rho[i]);
  }
  kv("rho", rho);
  kv("tiers", fmt_int(cfg.data.tiers[0]) + "," + fmt_int(cfg.data.tiers[1]) + "," +
                  fmt_int(cfg.data.tiers[2]));
  kv("sigma_d", fmt_double(cfg.data.sigma_d));
  kv("sigma_b", fmt_double(cfg.data.sigma_b));
  kv("alpha", fmt_double(cfg.data.alpha));
  kv("seed", fmt_u64(cfg.data.seed));

  out += "\n[model]\n";
  kv("m", fmt_int(cfg.model.m));
  kv("beta", fmt_double(cfg.model.act.beta));
  kv("r", fmt_double(cfg.model.act.r));
  kv("sigma0", fmt_double(cfg.model.init.sigma0));
  kv("seed", fmt_u64(cfg.model.init.seed));

  for (const TrainSpec& spec : cfg.runs) {
    out += "\n[train " + spec.label + "]\n";
    kv("method", method_name(spec.train.method));
    kv("eta", fmt_double(spec.train.eta));
    kv("T", fmt_int(spec.train.T));
    kv("C", fmt_int(spec.train.C));
    kv("log_every", fmt_int(spec.train.log_every));
    kv("grad_tol", fmt_double(spec.train.grad_tol));
  }

  out += "\n[eval]\n";
  kv("n_test", fmt_int(cfg.eval.n_test));
  kv("seed", fmt_u64(cfg.eval.seed));

  out += "\n[output]\n";
  kv("dir", cfg.output.dir);
  kv("plots", cfg.output.plots ? "true" : "false");
  return out;
}

}  // namespace patchlab
