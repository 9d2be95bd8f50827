#include "fesense/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "fesense/errors.hpp"

namespace fesense {

namespace {

constexpr int kWidth = 720;
constexpr int kHeight = 480;
constexpr int kMarginL = 80, kMarginR = 24, kMarginT = 40, kMarginB = 56;

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                         "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// Round-ish tick positions for a linear axis.
std::vector<double> linear_ticks(double lo, double hi) {
  const double span = hi - lo;
  if (!(span > 0)) return {lo};
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) {
      step = m * mag;
      break;
    }
  std::vector<double> ticks;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step)
    ticks.push_back(v);
  return ticks;
}

std::vector<double> log_ticks(double lo, double hi) {
  std::vector<double> ticks;
  for (int e = static_cast<int>(std::floor(std::log10(lo)));
       e <= static_cast<int>(std::ceil(std::log10(hi))); ++e) {
    const double v = std::pow(10.0, e);
    if (v >= lo / 1.0001 && v <= hi * 1.0001) ticks.push_back(v);
  }
  if (ticks.empty()) ticks = {lo, hi};
  return ticks;
}

}  // namespace

SvgPlot::SvgPlot(std::string title, std::string x_label, std::string y_label)
    : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

void SvgPlot::add_series(std::string label, std::vector<double> x, std::vector<double> y,
                         bool markers) {
  if (x.size() != y.size()) throw validation_error("svg series x/y size mismatch");
  series_.push_back({std::move(label), std::move(x), std::move(y), markers});
}

void SvgPlot::write(const std::filesystem::path& path) const {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
  double ylo = xlo, yhi = -xlo;
  for (const auto& s : series_) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (log_x_ && !(s.x[i] > 0)) continue;
      if (log_y_ && !(s.y[i] > 0)) continue;
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min(ylo, s.y[i]);
      yhi = std::max(yhi, s.y[i]);
    }
  }
  if (!(xlo <= xhi)) {
    xlo = log_x_ ? 1.0 : 0.0;
    xhi = log_x_ ? 10.0 : 1.0;
  }
  if (!(ylo <= yhi)) {
    ylo = log_y_ ? 1.0 : 0.0;
    yhi = log_y_ ? 10.0 : 1.0;
  }
  if (xlo == xhi) {
    xlo = log_x_ ? xlo / 2 : xlo - 1;
    xhi = log_x_ ? xhi * 2 : xhi + 1;
  }
  if (ylo == yhi) {
    ylo = log_y_ ? ylo / 2 : ylo - 1;
    yhi = log_y_ ? yhi * 2 : yhi + 1;
  }
  if (!log_y_) {
    const double pad = 0.05 * (yhi - ylo);
    ylo -= pad;
    yhi += pad;
  }

  const double px_w = kWidth - kMarginL - kMarginR;
  const double px_h = kHeight - kMarginT - kMarginB;
  auto xmap = [&](double v) {
    const double u = log_x_ ? (std::log10(v) - std::log10(xlo)) / (std::log10(xhi) - std::log10(xlo))
                            : (v - xlo) / (xhi - xlo);
    return kMarginL + u * px_w;
  };
  auto ymap = [&](double v) {
    const double u = log_y_ ? (std::log10(v) - std::log10(ylo)) / (std::log10(yhi) - std::log10(ylo))
                            : (v - ylo) / (yhi - ylo);
    return kHeight - kMarginB - u * px_h;
  };

  std::ofstream out(path);
  if (!out) throw io_error("cannot write plot: " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" "
      << "font-family=\"sans-serif\">" << title_ << "</text>\n";

  const auto xt = log_x_ ? log_ticks(xlo, xhi) : linear_ticks(xlo, xhi);
  const auto yt = log_y_ ? log_ticks(ylo, yhi) : linear_ticks(ylo, yhi);
  out << "<g stroke=\"#cccccc\" stroke-width=\"1\">\n";
  for (double v : xt)
    out << "<line x1=\"" << fmt(xmap(v)) << "\" y1=\"" << kMarginT << "\" x2=\"" << fmt(xmap(v))
        << "\" y2=\"" << kHeight - kMarginB << "\"/>\n";
  for (double v : yt)
    out << "<line x1=\"" << kMarginL << "\" y1=\"" << fmt(ymap(v)) << "\" x2=\""
        << kWidth - kMarginR << "\" y2=\"" << fmt(ymap(v)) << "\"/>\n";
  out << "</g>\n";
  out << "<g font-size=\"11\" font-family=\"sans-serif\" fill=\"#333333\">\n";
  for (double v : xt)
    out << "<text x=\"" << fmt(xmap(v)) << "\" y=\"" << kHeight - kMarginB + 16
        << "\" text-anchor=\"middle\">" << fmt(v) << "</text>\n";
  for (double v : yt)
    out << "<text x=\"" << kMarginL - 6 << "\" y=\"" << fmt(ymap(v) + 4)
        << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
  out << "</g>\n";
  out << "<rect x=\"" << kMarginL << "\" y=\"" << kMarginT << "\" width=\"" << fmt(px_w)
      << "\" height=\"" << fmt(px_h) << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<text x=\"" << kMarginL + px_w / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">" << x_label_
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << kMarginT + px_h / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" "
      << "transform=\"rotate(-90 16 " << kMarginT + px_h / 2 << ")\">" << y_label_
      << "</text>\n";

  for (std::size_t si = 0; si < series_.size(); ++si) {
    const auto& s = series_[si];
    const char* color = kColors[si % (sizeof kColors / sizeof kColors[0])];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (log_x_ && !(s.x[i] > 0)) continue;
      if (log_y_ && !(s.y[i] > 0)) continue;
      out << fmt(xmap(s.x[i])) << "," << fmt(ymap(s.y[i])) << " ";
    }
    out << "\"/>\n";
    if (s.markers) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (log_x_ && !(s.x[i] > 0)) continue;
        if (log_y_ && !(s.y[i] > 0)) continue;
        out << "<circle cx=\"" << fmt(xmap(s.x[i])) << "\" cy=\"" << fmt(ymap(s.y[i]))
            << "\" r=\"3\" fill=\"" << color << "\"/>\n";
      }
    }
    out << "<text x=\"" << kWidth - kMarginR - 8 << "\" y=\"" << kMarginT + 16 + 14 * si
        << "\" text-anchor=\"end\" font-size=\"12\" font-family=\"sans-serif\" fill=\"" << color
        << "\">" << s.label << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw io_error("failed writing plot: " + path.string());
}

}  // namespace fesense
