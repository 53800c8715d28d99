#include "patchlab/svgplot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace patchlab {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                          "#9467bd", "#ff7f0e", "#8c564b"};
constexpr int kPaletteSize = 6;

std::string fmt_fixed(double v, int prec) {
  if (v == 0.0) v = 0.0;  // normalize -0
  char buf[48];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, prec);
  return std::string(buf, res.ptr);
}

std::string fmt_tick(double v) {
  if (v == 0.0) v = 0.0;
  char buf[48];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 4);
  return std::string(buf, res.ptr);
}

std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = 0.0, hi = 1.0;
  double span() const { return hi - lo; }
};

Range pad_range(double lo, double hi, double frac) {
  if (!(lo <= hi)) return {0.0, 1.0};
  if (lo == hi) {
    const double pad = std::max(0.5, std::abs(lo) * 0.1);
    return {lo - pad, hi + pad};
  }
  const double pad = (hi - lo) * frac;
  return {lo - pad, hi + pad};
}

}  // namespace

std::string render_line_chart(const ChartSpec& spec, const std::vector<Series>& series) {
  double x_lo = 0.0, x_hi = 0.0, y_lo = 0.0, y_hi = 0.0;
  bool any = false;
  for (const Series& s : series) {
    const size_t npt = std::min(s.x.size(), s.y.size());
    for (size_t i = 0; i < npt; ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (!any) {
        x_lo = x_hi = s.x[i];
        y_lo = y_hi = s.y[i];
        any = true;
      } else {
        x_lo = std::min(x_lo, s.x[i]);
        x_hi = std::max(x_hi, s.x[i]);
        y_lo = std::min(y_lo, s.y[i]);
        y_hi = std::max(y_hi, s.y[i]);
      }
    }
  }
  const Range xr = any ? pad_range(x_lo, x_hi, 0.0) : Range{};
  const Range yr = any ? pad_range(y_lo, y_hi, 0.05) : Range{};

  const double left = 64, right = spec.width - 18;
  const double top = 34, bottom = spec.height - 48;
  auto px = [&](double x) { return left + (x - xr.lo) / xr.span() * (right - left); };
  auto py = [&](double y) { return bottom - (y - yr.lo) / yr.span() * (bottom - top); };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(spec.width) + "\" height=\"" + std::to_string(spec.height) +
         "\" viewBox=\"0 0 " + std::to_string(spec.width) + " " +
         std::to_string(spec.height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  svg += "<text x=\"" + fmt_fixed((left + right) / 2, 1) +
         "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\" fill=\"#000\">" +
         escape(spec.title) + "</text>\n";

  // grid, ticks, tick labels
  const int nticks = 5;
  for (int i = 0; i < nticks; ++i) {
    const double f = double(i) / (nticks - 1);
    const double gx = left + f * (right - left);
    const double gy = bottom - f * (bottom - top);
    svg += "<line x1=\"" + fmt_fixed(gx, 1) + "\" y1=\"" + fmt_fixed(top, 1) +
           "\" x2=\"" + fmt_fixed(gx, 1) + "\" y2=\"" + fmt_fixed(bottom, 1) +
           "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    svg += "<line x1=\"" + fmt_fixed(left, 1) + "\" y1=\"" + fmt_fixed(gy, 1) +
           "\" x2=\"" + fmt_fixed(right, 1) + "\" y2=\"" + fmt_fixed(gy, 1) +
           "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + fmt_fixed(gx, 1) + "\" y=\"" + fmt_fixed(bottom + 16, 1) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" "
           "fill=\"#333\">" +
           fmt_tick(xr.lo + f * xr.span()) + "</text>\n";
    svg += "<text x=\"" + fmt_fixed(left - 6, 1) + "\" y=\"" + fmt_fixed(gy + 4, 1) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" "
           "fill=\"#333\">" +
           fmt_tick(yr.lo + f * yr.span()) + "</text>\n";
  }

  // axes
  svg += "<line x1=\"" + fmt_fixed(left, 1) + "\" y1=\"" + fmt_fixed(top, 1) +
         "\" x2=\"" + fmt_fixed(left, 1) + "\" y2=\"" + fmt_fixed(bottom, 1) +
         "\" stroke=\"#000\" stroke-width=\"1\"/>\n";
  svg += "<line x1=\"" + fmt_fixed(left, 1) + "\" y1=\"" + fmt_fixed(bottom, 1) +
         "\" x2=\"" + fmt_fixed(right, 1) + "\" y2=\"" + fmt_fixed(bottom, 1) +
         "\" stroke=\"#000\" stroke-width=\"1\"/>\n";
  svg += "<text x=\"" + fmt_fixed((left + right) / 2, 1) + "\" y=\"" +
         fmt_fixed(double(spec.height) - 12, 1) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
         "fill=\"#000\">" +
         escape(spec.x_label) + "</text>\n";
  svg += "<text x=\"16\" y=\"" + fmt_fixed((top + bottom) / 2, 1) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
         "fill=\"#000\" transform=\"rotate(-90 16 " +
         fmt_fixed((top + bottom) / 2, 1) + ")\">" +
         escape(spec.y_label) + "</text>\n";

  // series polylines; a non-finite point ends the current segment
  for (size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const std::string color =
        s.color.empty() ? kPalette[si % kPaletteSize] : s.color;
    const size_t npt = std::min(s.x.size(), s.y.size());
    std::string points;
    auto flush = [&]() {
      if (points.empty()) return;
      svg += "<polyline fill=\"none\" stroke=\"" + color +
             "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
      points.clear();
    };
    for (size_t i = 0; i < npt; ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        flush();
        continue;
      }
      if (!points.empty()) points += ' ';
      points += fmt_fixed(px(s.x[i]), 2) + "," + fmt_fixed(py(s.y[i]), 2);
    }
    flush();
  }

  // legend, top right inside the plot area
  for (size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const std::string color =
        s.color.empty() ? kPalette[si % kPaletteSize] : s.color;
    const double ly = top + 14 + 16 * double(si);
    svg += "<line x1=\"" + fmt_fixed(right - 130, 1) + "\" y1=\"" + fmt_fixed(ly, 1) +
           "\" x2=\"" + fmt_fixed(right - 106, 1) + "\" y2=\"" + fmt_fixed(ly, 1) +
           "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt_fixed(right - 100, 1) + "\" y=\"" + fmt_fixed(ly + 4, 1) +
           "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#000\">" +
           escape(s.label) + "</text>\n";
  }

  svg += "</svg>\n";
  return svg;
}

void write_line_chart(const std::string& path, const ChartSpec& spec,
                      const std::vector<Series>& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << render_line_chart(spec, series);
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace patchlab
