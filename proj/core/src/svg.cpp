#include "umood/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "umood/error.hpp"
#include "umood/util.hpp"

namespace umood {

namespace {

constexpr double kWidth = 880.0;
constexpr double kHeight = 520.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 30.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 55.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

Range data_range(std::span<const Series> series, bool use_x) {
  Range r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Series& s : series) {
    const std::vector<double>& v = use_x ? s.xs : s.ys;
    for (double val : v) {
      r.lo = std::min(r.lo, val);
      r.hi = std::max(r.hi, val);
    }
  }
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi)) {
    r = {0.0, 1.0};
  }
  if (r.lo == r.hi) {
    r.lo -= 0.5;
    r.hi += 0.5;
  }
  return r;
}

// 1/2/5 * 10^k step targeting about six ticks
double nice_step(double span) {
  const double raw = span / 6.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double norm = raw / mag;
  double step;
  if (norm <= 1.0) {
    step = 1.0;
  } else if (norm <= 2.0) {
    step = 2.0;
  } else if (norm <= 5.0) {
    step = 5.0;
  } else {
    step = 10.0;
  }
  return step * mag;
}

std::string fmt(double v) { return format_double(v, 8); }
std::string fmt_tick(double v) {
  // squash negative zero so tick labels are stable
  if (v == 0.0) {
    v = 0.0;
  }
  return format_double(v, 6);
}

}  // namespace

std::string render_line_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label, std::span<const Series> series) {
  const Range xr = data_range(series, true);
  const Range yr = data_range(series, false);
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * plot_w; };
  auto py = [&](double y) { return kTop + plot_h - (y - yr.lo) / (yr.hi - yr.lo) * plot_h; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"880\" height=\"520\" "
         "viewBox=\"0 0 880 520\">\n";
  svg += "<rect width=\"880\" height=\"520\" fill=\"white\"/>\n";
  svg += "<text x=\"440\" y=\"24\" text-anchor=\"middle\" font-family=\"monospace\" "
         "font-size=\"16\">" + title + "</text>\n";

  // axes
  svg += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(kTop) + "\" x2=\"" + fmt(kLeft) +
         "\" y2=\"" + fmt(kTop + plot_h) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(kTop + plot_h) + "\" x2=\"" +
         fmt(kLeft + plot_w) + "\" y2=\"" + fmt(kTop + plot_h) + "\" stroke=\"black\"/>\n";

  // ticks
  const double xstep = nice_step(xr.hi - xr.lo);
  for (double t = std::ceil(xr.lo / xstep) * xstep; t <= xr.hi + 1e-12; t += xstep) {
    const double x = px(t);
    svg += "<line x1=\"" + fmt(x) + "\" y1=\"" + fmt(kTop + plot_h) + "\" x2=\"" + fmt(x) +
           "\" y2=\"" + fmt(kTop + plot_h + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(kTop + plot_h + 20) +
           "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"11\">" + fmt_tick(t) +
           "</text>\n";
  }
  const double ystep = nice_step(yr.hi - yr.lo);
  for (double t = std::ceil(yr.lo / ystep) * ystep; t <= yr.hi + 1e-12; t += ystep) {
    const double y = py(t);
    svg += "<line x1=\"" + fmt(kLeft - 5) + "\" y1=\"" + fmt(y) + "\" x2=\"" + fmt(kLeft) +
           "\" y2=\"" + fmt(y) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt(kLeft - 9) + "\" y=\"" + fmt(y + 4) +
           "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"11\">" + fmt_tick(t) +
           "</text>\n";
    svg += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(y) + "\" x2=\"" + fmt(kLeft + plot_w) +
           "\" y2=\"" + fmt(y) + "\" stroke=\"#e0e0e0\" stroke-width=\"0.5\"/>\n";
  }

  // axis labels
  svg += "<text x=\"" + fmt(kLeft + plot_w / 2) + "\" y=\"" + fmt(kHeight - 12) +
         "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"13\">" + x_label +
         "</text>\n";
  svg += "<text x=\"16\" y=\"" + fmt(kTop + plot_h / 2) +
         "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"13\" transform=\"rotate(-90 "
         "16 " + fmt(kTop + plot_h / 2) + ")\">" + y_label + "</text>\n";

  // series + legend
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Series& s = series[i];
    const char* color = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
    if (!s.xs.empty()) {
      std::string pts;
      for (std::size_t j = 0; j < s.xs.size(); ++j) {
        pts += fmt(px(s.xs[j])) + "," + fmt(py(s.ys[j])) + " ";
      }
      svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
             "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    }
    const double ly = kTop + 14.0 + 16.0 * static_cast<double>(i);
    svg += "<line x1=\"" + fmt(kLeft + plot_w - 150) + "\" y1=\"" + fmt(ly - 4) + "\" x2=\"" +
           fmt(kLeft + plot_w - 130) + "\" y2=\"" + fmt(ly - 4) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt(kLeft + plot_w - 125) + "\" y=\"" + fmt(ly) +
           "\" font-family=\"monospace\" font-size=\"11\">" + s.label + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("write_text_file: cannot open " + path.string());
  }
  out << content;
  if (!out) {
    throw FormatError("write_text_file: write failure on " + path.string());
  }
}

}  // namespace umood
