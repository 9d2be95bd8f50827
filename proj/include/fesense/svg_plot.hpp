#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace fesense {

// Small deterministic SVG line plot writer for run artifacts. Axes can be
// logarithmic; non-positive points are skipped on log axes.
class SvgPlot {
 public:
  SvgPlot(std::string title, std::string x_label, std::string y_label);

  void set_log_x(bool v) { log_x_ = v; }
  void set_log_y(bool v) { log_y_ = v; }
  void add_series(std::string label, std::vector<double> x, std::vector<double> y,
                  bool markers = false);
  void write(const std::filesystem::path& path) const;

 private:
  struct Series {
    std::string label;
    std::vector<double> x, y;
    bool markers;
  };
  std::string title_, x_label_, y_label_;
  bool log_x_ = false, log_y_ = false;
  std::vector<Series> series_;
};

}  // namespace fesense
