#include "patchlab/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "patchlab/decompose.hpp"
#include "patchlab/eval.hpp"
#include "patchlab/model.hpp"
#include "patchlab/strfmt.hpp"
#include "patchlab/svgplot.hpp"
#include "patchlab/theory.hpp"
#include "patchlab/train.hpp"

namespace fs = std::filesystem;

namespace patchlab {

namespace {

// Bands for the measured-vs-claimed comparisons; the test-accuracy widths are
// a little above the Monte-Carlo noise at the default n_test.
constexpr double kPlainAccBand = 0.03;
constexpr double kMaskAccBand = 0.02;
constexpr double kMixAccFloor = 0.99;
constexpr double kCoinBand = 0.04;
constexpr double kMonotoneTol = 1e-12;
constexpr double kDecreaseTol = 1e-10;
constexpr double kStationarityBand = 1e-3;  // used when no grad_tol is configured
constexpr double kUniformBand = 0.1;        // of the smaller per-class optimum

const char* kTierNames[3] = {"common", "rare", "extreme"};

long long binom_ll(int n, int k) {
  if (k < 0 || k > n) return 0;
  long long out = 1;
  for (int i = 0; i < k; ++i) out = out * (n - i) / (i + 1);
  return out;
}

std::string fmt_short(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 6);
  return std::string(buf, res.ptr);
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string e_init_json(const EInitReport& rep) {
  nlohmann::ordered_json j;
  j["all_pass"] = rep.all_pass;
  j["min_singular"] = rep.min_singular;
  nlohmann::ordered_json clauses = nlohmann::ordered_json::array();
  for (const EInitClause& cl : rep.clauses) {
    nlohmann::ordered_json row;
    row["name"] = cl.name;
    row["inequality"] = cl.inequality;
    row["pass"] = cl.pass;
    row["margin"] = cl.margin;
    clauses.push_back(row);
  }
  j["clauses"] = clauses;
  return j.dump(2) + "\n";
}

// Per-step coefficient summary. delta_min / delta_max range over every gamma
// and rho entry against the previous logged table, so a non-negative
// delta_min column certifies that no coefficient ever decreased between logs.
std::string coeff_summary_csv(const std::vector<std::pair<int, CoeffTable>>& steps,
                              const Dataset& ds) {
  const int K = ds.config.K();
  const int n = ds.n();
  std::string out = "t";
  for (int k = 0; k < K; ++k) out += ",gamma_plus_self_" + fmt_int(k);
  for (int k = 0; k < K; ++k) out += ",gamma_plus_opp_" + fmt_int(k);
  for (int k = 0; k < K; ++k) out += ",gamma_minus_self_" + fmt_int(k);
  for (int k = 0; k < K; ++k) out += ",gamma_minus_opp_" + fmt_int(k);
  out += ",rho_self_min,rho_self_max,rho_opp_min,rho_opp_max,delta_min,delta_max\n";

  const CoeffTable* prev = nullptr;
  for (const auto& [t, tab] : steps) {
    out += fmt_int(t);
    // side +1: self coefficients sit in gamma row 0, side -1: in row 1
    for (int k = 0; k < K; ++k) out += ',' + fmt_double(tab.gamma[0](0, k));
    for (int k = 0; k < K; ++k) out += ',' + fmt_double(tab.gamma[0](1, k));
    for (int k = 0; k < K; ++k) out += ',' + fmt_double(tab.gamma[1](1, k));
    for (int k = 0; k < K; ++k) out += ',' + fmt_double(tab.gamma[1](0, k));

    double self_min = 0.0, self_max = 0.0, opp_min = 0.0, opp_max = 0.0;
    bool first_self = true, first_opp = true;
    for (int si = 0; si < 2; ++si) {
      const int s = si == 0 ? 1 : -1;
      for (int i = 0; i < n; ++i) {
        const bool self = ds.samples[size_t(i)].y == s;
        for (int p = 0; p < ds.config.P; ++p) {
          if (p == ds.samples[size_t(i)].p_star) continue;
          const double v = tab.rho[si](i, p);
          if (self) {
            if (first_self) self_min = self_max = v, first_self = false;
            self_min = std::min(self_min, v);
            self_max = std::max(self_max, v);
          } else {
            if (first_opp) opp_min = opp_max = v, first_opp = false;
            opp_min = std::min(opp_min, v);
            opp_max = std::max(opp_max, v);
          }
        }
      }
    }
    out += ',' + fmt_double(self_min) + ',' + fmt_double(self_max);
    out += ',' + fmt_double(opp_min) + ',' + fmt_double(opp_max);

    double dmin = 0.0, dmax = 0.0;
    if (prev != nullptr) {
      dmin = std::numeric_limits<double>::infinity();
      dmax = -dmin;
      for (int si = 0; si < 2; ++si) {
        const Eigen::MatrixXd dg = tab.gamma[si] - prev->gamma[si];
        const Eigen::MatrixXd dr = tab.rho[si] - prev->rho[si];
        dmin = std::min({dmin, dg.minCoeff(), dr.minCoeff()});
        dmax = std::max({dmax, dg.maxCoeff(), dr.maxCoeff()});
      }
    }
    out += ',' + fmt_double(dmin) + ',' + fmt_double(dmax) + '\n';
    prev = &tab;
  }
  return out;
}

// Full final table in long form; feature rows leave sample/patch empty and
// noise rows leave fclass/k empty.
std::string coeff_final_csv(const CoeffTable& tab, const Dataset& ds) {
  const int K = ds.config.K();
  std::string out = "kind,side,fclass,k,sample,patch,value\n";
  for (int si = 0; si < 2; ++si) {
    const int s = si == 0 ? 1 : -1;
    for (int row = 0; row < 2; ++row) {
      const int sprime = row == 0 ? 1 : -1;
      for (int k = 0; k < K; ++k)
        out += "gamma," + fmt_int(s) + ',' + fmt_int(sprime) + ',' + fmt_int(k) +
               ",,," + fmt_double(tab.gamma[si](row, k)) + '\n';
    }
  }
  for (int si = 0; si < 2; ++si) {
    const int s = si == 0 ? 1 : -1;
    for (int i = 0; i < ds.n(); ++i)
      for (int p = 0; p < ds.config.P; ++p) {
        if (p == ds.samples[size_t(i)].p_star) continue;
        out += "rho," + fmt_int(s) + ",,," + fmt_int(i) + ',' + fmt_int(p) + ',' +
               fmt_double(tab.rho[si](i, p)) + '\n';
      }
  }
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int col(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return int(i);
    return -1;
  }
};

CsvTable read_csv(const fs::path& path) {
  const std::string text = read_text_file(path);
  CsvTable tab;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    size_t pos = 0;
    while (pos <= line.size()) {
      const size_t comma = std::min(line.find(',', pos), line.size());
      fields.push_back(line.substr(pos, comma - pos));
      pos = comma + 1;
    }
    if (first) {
      tab.header = fields;
      first = false;
      continue;
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const std::string& f : fields) {
      double v = std::numeric_limits<double>::quiet_NaN();
      std::from_chars(f.data(), f.data() + f.size(), v);
      row.push_back(v);
    }
    tab.rows.push_back(std::move(row));
  }
  return tab;
}

void dry_run_report(const ExperimentConfig& cfg, std::ostream& log) {
  const DataConfig& dc = cfg.data;
  log << "config ok: d=" << dc.d << " n=" << dc.n << " P=" << dc.P << " K=" << dc.K()
      << " (tiers " << dc.tiers[0] << "/" << dc.tiers[1] << "/" << dc.tiers[2]
      << "), m=" << cfg.model.m << "\n";
  const double L = smoothness_constant(dc, cfg.model.act.r);
  log << "smoothness bound L = " << fmt_short(L) << ", safe step 1/L = "
      << fmt_short(1.0 / L) << "\n";
  for (const TrainSpec& spec : cfg.runs) {
    log << "[" << spec.label << "] method=" << method_name(spec.train.method)
        << " eta=" << fmt_short(spec.train.eta) << " T=" << spec.train.T;
    if (spec.train.method == Method::CUTOUT)
      log << ", " << binom_ll(dc.P, spec.train.C) << " masked copies per sample"
          << " (C=" << spec.train.C << ")";
    if (spec.train.method == Method::CUTMIX)
      log << ", " << (1LL << dc.P) << " patch subsets, "
          << (long long)(dc.n) * dc.n << " ordered pairs";
    log << "; predicted test accuracy "
        << fmt_short(predicted_test_accuracy(dc, spec.train.method)) << "\n";
  }
  log << "eval: n_test=" << cfg.eval.n_test << "\n";
  log << "output: " << cfg.output.dir << " (plots "
      << (cfg.output.plots ? "on" : "off") << ")\n";
  log << "dry run: nothing written\n";
}

void write_figure_panels(const fs::path& out, const ExperimentConfig& cfg,
                         std::ostream& log) {
  const fs::path plots = out / "plots";
  fs::create_directories(plots);
  int k0 = 0;
  for (int tier = 0; tier < 3; ++tier) {
    const int count = cfg.data.tiers[tier];
    if (count == 0) continue;
    const std::string ycol = "out_pos_" + fmt_int(k0 + 1);
    std::vector<Series> series;
    for (const TrainSpec& spec : cfg.runs) {
      const fs::path trace = out / spec.label / "trace.csv";
      if (!fs::exists(trace)) continue;
      const CsvTable tab = read_csv(trace);
      const int tc = tab.col("t"), yc = tab.col(ycol);
      if (tc < 0 || yc < 0) continue;
      Series s;
      s.label = spec.label;
      for (const auto& row : tab.rows) {
        s.x.push_back(row[size_t(tc)]);
        s.y.push_back(row[size_t(yc)]);
      }
      series.push_back(std::move(s));
    }
    ChartSpec spec;
    spec.title = std::string(kTierNames[tier]) + " feature output";
    spec.x_label = "step";
    spec.y_label = "readout gap";
    const fs::path file = plots / ("figure1_" + std::string(kTierNames[tier]) + ".svg");
    write_line_chart(file.string(), spec, series);
    log << "wrote " << file.string() << "\n";
    k0 += count;
  }
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg_in, const RunOptions& opt,
                   std::ostream& log) {
  using clock = std::chrono::steady_clock;
  auto seconds_since = [](clock::time_point t0) {
    return std::chrono::duration<double>(clock::now() - t0).count();
  };

  ExperimentConfig cfg = cfg_in;
  if (opt.out_dir) cfg.output.dir = *opt.out_dir;
  if (opt.no_plots) cfg.output.plots = false;
  cfg.validate();
  if (opt.threads < 1) throw std::invalid_argument("thread count must be positive");

  if (opt.dry_run) {
    dry_run_report(cfg, log);
    return kExitOk;
  }

  const fs::path out(cfg.output.dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) {
    log << "cannot create output directory '" << out.string() << "': " << ec.message()
        << "\n";
    return kExitUsage;
  }
  write_text_file(out / "config.cfg", serialize_config(cfg));

  nlohmann::ordered_json meta;
  meta["d"] = cfg.data.d;
  meta["n"] = cfg.data.n;
  meta["P"] = cfg.data.P;
  meta["K"] = cfg.data.K();
  meta["m"] = cfg.model.m;
  meta["threads"] = opt.threads;
  const double L = smoothness_constant(cfg.data, cfg.model.act.r);
  meta["smoothness_L"] = L;
  meta["safe_step"] = 1.0 / L;

  const auto t_data = clock::now();
  const Dataset ds = generate_dataset(cfg.data);
  const Weights W0 =
      init_weights(cfg.data.d, cfg.model.m, cfg.model.init, cfg.model.act);
  const EInitReport einit = check_e_init(ds, W0, cfg.model.init.sigma0);
  write_text_file(out / "e_init.json", e_init_json(einit));
  meta["elapsed_data"] = seconds_since(t_data);
  meta["e_init_all_pass"] = einit.all_pass;
  log << "dataset: n=" << ds.n() << " d=" << cfg.data.d
      << "; initialization event " << (einit.all_pass ? "holds" : "FAILS")
      << " (min basis singular value " << fmt_short(einit.min_singular) << ")\n";
  if (!einit.all_pass)
    for (const EInitClause& cl : einit.clauses)
      if (!cl.pass) log << "  failed clause: " << cl.name << "\n";

  bool any_diverged = false;
  nlohmann::ordered_json run_rows = nlohmann::ordered_json::array();
  for (const TrainSpec& spec : cfg.runs) {
    const fs::path dir = out / spec.label;
    fs::create_directories(dir);
    TrainConfig tc = spec.train;
    tc.threads = opt.threads;

    const auto t_run = clock::now();
    const RunResult res = run_training(W0, ds, tc);
    const double train_secs = seconds_since(t_run);

    write_trace_csv(res.trace, cfg.data.K(), (dir / "trace.csv").string());
    if (!res.coeff_steps.empty()) {
      write_text_file(dir / "coeffs.csv", coeff_summary_csv(res.coeff_steps, ds));
      write_text_file(dir / "coeffs_final.csv",
                      coeff_final_csv(res.coeff_steps.back().second, ds));
    }
    save_weights((dir / "weights.bin").string(), res.W, res.W0, cfg.model.init);

    nlohmann::ordered_json row;
    row["label"] = spec.label;
    row["method"] = method_name(tc.method);
    row["steps_run"] = res.steps_run;
    row["tol_fired"] = res.tol_fired;
    row["diverged"] = res.diverged;
    row["descent_violations"] = res.descent_violations;
    row["elapsed_train"] = train_secs;

    if (res.diverged) {
      any_diverged = true;
      log << "[" << spec.label << "] non-finite loss after step " << res.steps_run
          << "; last finite checkpoint: " << (dir / "weights.bin").string() << "\n";
      run_rows.push_back(row);
      continue;
    }

    AccuracyReport rep = test_accuracy(res.W, ds.bank, cfg.data, cfg.eval.n_test,
                                       cfg.eval.seed, opt.threads);
    rep.train_acc = train_accuracy(res.W, ds);
    if (tc.method == Method::CUTOUT)
      rep.aug_acc = augmented_accuracy(res.W, ds, tc.C);
    write_text_file(dir / "accuracy.json", accuracy_json(rep));
    write_text_file(dir / "conditional.csv", conditional_csv(rep));

    const TraceRow& last = res.trace.back();
    log << "[" << spec.label << "] " << res.steps_run << " steps in "
        << fmt_short(train_secs) << "s: loss " << fmt_short(last.loss) << ", grad "
        << fmt_short(last.grad_norm) << ", train acc " << fmt_short(rep.train_acc)
        << ", test acc " << fmt_short(rep.test_acc) << "\n";
    row["final_loss"] = last.loss;
    row["final_grad_norm"] = last.grad_norm;
    run_rows.push_back(row);
  }
  meta["runs"] = run_rows;
  write_text_file(out / "run_meta.json", meta.dump(2) + "\n");

  if (cfg.output.plots) write_figure_panels(out, cfg, log);

  const CheckReport check = theorem_check(out.string());
  print_check_report(check, log);
  write_text_file(out / "theorem_check.json", check_report_json(check));

  return (any_diverged || !check.all_pass) ? kExitCheckFailed : kExitOk;
}

int run_experiment_file(const std::string& path,
                        std::optional<std::uint64_t> seed_override,
                        const RunOptions& opt, std::ostream& log) {
  try {
    const ExperimentConfig cfg = parse_config_file(path, seed_override);
    return run_experiment(cfg, opt, log);
  } catch (const std::invalid_argument& e) {
    log << "invalid config: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::runtime_error& e) {
    log << e.what() << "\n";
    return kExitUsage;
  }
}

CheckReport theorem_check(const std::string& run_dir) {
  const fs::path root(run_dir);
  if (!fs::exists(root / "config.cfg"))
    throw std::runtime_error("no runs found in '" + run_dir + "' (missing config.cfg)");
  const ExperimentConfig cfg = parse_config_file((root / "config.cfg").string());

  std::vector<const TrainSpec*> present;
  for (const TrainSpec& spec : cfg.runs)
    if (fs::exists(root / spec.label / "trace.csv")) present.push_back(&spec);
  if (present.empty())
    throw std::runtime_error("no runs found in '" + run_dir + "' (no trace.csv)");

  CheckReport rep;
  auto add = [&rep](const std::string& run, const std::string& clause, double measured,
                    const std::string& expected, bool pass) {
    rep.rows.push_back(CheckRow{run, clause, measured, expected, pass});
    rep.all_pass = rep.all_pass && pass;
  };

  if (fs::exists(root / "e_init.json")) {
    const nlohmann::json j = nlohmann::json::parse(read_text_file(root / "e_init.json"));
    const bool ok = j.at("all_pass").get<bool>();
    add("experiment", "initialization event", ok ? 1.0 : 0.0, "all clauses hold", ok);
  }

  // dataset regeneration is needed only for the mixing contribution clause
  std::optional<Dataset> ds;
  auto dataset = [&]() -> const Dataset& {
    if (!ds) ds = generate_dataset(cfg.data);
    return *ds;
  };

  for (const TrainSpec* specp : present) {
    const TrainSpec& spec = *specp;
    const Method method = spec.train.method;
    const fs::path dir = root / spec.label;

    if (!fs::exists(dir / "accuracy.json")) {
      add(spec.label, "run completed", 0.0, "accuracy report present", false);
      continue;
    }
    const AccuracyReport acc = accuracy_from_json(read_text_file(dir / "accuracy.json"));

    add(spec.label, "fits training set", acc.train_acc, "= 1", acc.train_acc == 1.0);
    if (method == Method::CUTOUT) {
      const double aug = acc.aug_acc.value_or(-1.0);
      add(spec.label, "fits masked points", aug, "= 1", aug == 1.0);
    }

    const double predicted = predicted_test_accuracy(cfg.data, method);
    if (method == Method::CUTMIX) {
      add(spec.label, "test accuracy", acc.test_acc,
          ">= " + fmt_short(kMixAccFloor), acc.test_acc >= kMixAccFloor);
    } else {
      const double band = method == Method::ERM ? kPlainAccBand : kMaskAccBand;
      add(spec.label, "test accuracy", acc.test_acc,
          fmt_short(predicted) + " +- " + fmt_short(band),
          std::abs(acc.test_acc - predicted) <= band);
    }

    for (int tier : unlearned_tiers(method)) {
      if (cfg.data.tiers[tier] == 0 || acc.tier_n[tier] == 0) continue;
      add(spec.label, std::string("coin flip on ") + kTierNames[tier] + " draws",
          acc.tier_acc[tier], "0.5 +- " + fmt_short(kCoinBand),
          std::abs(acc.tier_acc[tier] - 0.5) <= kCoinBand);
    }

    const fs::path coeffs = dir / "coeffs.csv";
    if (fs::exists(coeffs)) {
      const CsvTable tab = read_csv(coeffs);
      const int dc = tab.col("delta_min");
      if (dc >= 0 && tab.rows.size() >= 2) {
        double dmin = std::numeric_limits<double>::infinity();
        for (size_t i = 1; i < tab.rows.size(); ++i)
          dmin = std::min(dmin, tab.rows[i][size_t(dc)]);
        if (method == Method::CUTMIX)
          add(spec.label, "some coefficient decreases", dmin,
              "min step delta < -" + fmt_short(kDecreaseTol), dmin < -kDecreaseTol);
        else
          add(spec.label, "coefficients non-decreasing", dmin,
              "min step delta >= -" + fmt_short(kMonotoneTol), dmin >= -kMonotoneTol);
      }
    }

    if (method == Method::CUTMIX) {
      const CsvTable trace = read_csv(dir / "trace.csv");
      const int gc = trace.col("grad_norm");
      if (gc >= 0 && !trace.rows.empty()) {
        const double g = trace.rows.back()[size_t(gc)];
        const double band =
            spec.train.grad_tol > 0.0 ? spec.train.grad_tol : kStationarityBand;
        add(spec.label, "near stationary", g, "grad norm <= " + fmt_short(band),
            g <= band);
      }
      if (fs::exists(dir / "weights.bin")) {
        const WeightsFile wf = load_weights((dir / "weights.bin").string());
        const Dataset& d = dataset();
        const GlobalMin gm = solve_global_minimum(
            int(d.V[0].size()), int(d.V[1].size()), cfg.data.P);
        const UniformReport ur = verify_uniform_minimum(wf.W, d, gm);
        const double zmin = std::min(gm.z1_star, gm.zm1_star);
        const double rel = ur.max_dev / zmin;
        add(spec.label, "uniform patch contributions", rel,
            "max |y z - z*| <= " + fmt_short(kUniformBand) + " z*",
            rel <= kUniformBand);
      }
    }
  }
  return rep;
}

void print_check_report(const CheckReport& rep, std::ostream& out) {
  out << std::left << std::setw(12) << "run" << std::setw(34) << "clause"
      << std::setw(16) << "measured" << std::setw(34) << "expected" << "status\n";
  for (const CheckRow& row : rep.rows)
    out << std::left << std::setw(12) << row.run << std::setw(34) << row.clause
        << std::setw(16) << fmt_short(row.measured) << std::setw(34) << row.expected
        << (row.pass ? "PASS" : "FAIL") << "\n";
  out << (rep.all_pass ? "all checks passed" : "some checks FAILED") << "\n";
}

std::string check_report_json(const CheckReport& rep) {
  nlohmann::ordered_json j;
  j["all_pass"] = rep.all_pass;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const CheckRow& row : rep.rows) {
    nlohmann::ordered_json r;
    r["run"] = row.run;
    r["clause"] = row.clause;
    r["measured"] = row.measured;
    r["expected"] = row.expected;
    r["pass"] = row.pass;
    rows.push_back(r);
  }
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

}  // namespace patchlab
