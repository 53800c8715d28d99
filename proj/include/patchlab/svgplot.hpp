#pragma once

#include <string>
#include <vector>

namespace patchlab {

struct Series {
  std::string label;
  std::string color;  // CSS color; empty picks from a fixed palette
  std::vector<double> x, y;
};

struct ChartSpec {
  std::string title;
  std::string x_label, y_label;
  int width = 640, height = 420;
};

// Minimal line chart. Pure function of its inputs, so repeated renders are
// byte-identical; non-finite points break the polyline instead of rendering.
std::string render_line_chart(const ChartSpec& spec, const std::vector<Series>& series);

void write_line_chart(const std::string& path, const ChartSpec& spec,
                      const std::vector<Series>& series);

}  // namespace patchlab
