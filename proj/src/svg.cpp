#include "vbcp/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace vbcp {

namespace {

constexpr double kWidth = 680.0;
constexpr double kHeight = 460.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 170.0;  // room for the legend
constexpr double kTop = 40.0;
constexpr double kBottom = 55.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;

const char* dash_pattern(int group) {
  switch (group % 3) {
    case 1:
      return " stroke-dasharray=\"7,4\"";
    case 2:
      return " stroke-dasharray=\"2,3\"";
    default:
      return "";
  }
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string escape_text(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

void open_svg(std::ostringstream& out) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
      << kHeight << "\">\n"
      << "<rect width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" fill=\"white\"/>\n";
}

void draw_text(std::ostringstream& out, double x, double y,
               const std::string& text, const char* anchor = "middle",
               int size = 12, const char* extra = "") {
  out << "<text x=\"" << num(x) << "\" y=\"" << num(y)
      << "\" font-family=\"Helvetica,Arial,sans-serif\" font-size=\"" << size
      << "\" text-anchor=\"" << anchor << "\"" << extra << ">"
      << escape_text(text) << "</text>\n";
}

void draw_frame_labels(std::ostringstream& out, const std::string& title,
                       const std::string& xlabel, const std::string& ylabel) {
  draw_text(out, (kLeft + kWidth - kRight) / 2.0, 22.0, title, "middle", 14);
  draw_text(out, (kLeft + kWidth - kRight) / 2.0, kHeight - 12.0, xlabel);
  out << "<g transform=\"translate(16," << num((kTop + kHeight - kBottom) / 2.0)
      << ") rotate(-90)\">";
  out << "<text font-family=\"Helvetica,Arial,sans-serif\" font-size=\"12\" "
         "text-anchor=\"middle\">"
      << escape_text(ylabel) << "</text></g>\n";
}

// Success-fraction color: white (0) to a deep blue (1).
std::string freq_color(double f) {
  f = std::clamp(f, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(255.0 + f * (26.0 - 255.0)));
  const int g = static_cast<int>(std::lround(255.0 + f * (80.0 - 255.0)));
  const int b = static_cast<int>(std::lround(255.0 + f * (158.0 - 255.0)));
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

struct LinearScale {
  double lo = 0.0, hi = 1.0, out_lo = 0.0, out_hi = 1.0;
  double operator()(double v) const {
    const double t = (hi > lo) ? (v - lo) / (hi - lo) : 0.5;
    return out_lo + t * (out_hi - out_lo);
  }
};

std::vector<double> nice_ticks(double lo, double hi, int target = 5) {
  std::vector<double> ticks;
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double mult : {1.0, 2.0, 5.0, 10.0}) {
    if (mag * mult >= raw) {
      step = mag * mult;
      break;
    }
  }
  const double first = std::ceil(lo / step) * step;
  for (double t = first; t <= hi + 1e-9 * step; t += step) {
    ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  }
  return ticks;
}

}  // namespace

std::string render_heatmap(const HeatmapSpec& spec) {
  const std::size_t rows = spec.y.size();
  const std::size_t cols = spec.x.size();
  std::ostringstream out;
  open_svg(out);
  draw_frame_labels(out, spec.title, spec.xlabel, spec.ylabel);

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const double cw = plot_w / static_cast<double>(std::max<std::size_t>(cols, 1));
  const double ch = plot_h / static_cast<double>(std::max<std::size_t>(rows, 1));

  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double f = spec.values(static_cast<Eigen::Index>(i),
                                   static_cast<Eigen::Index>(j));
      const double x = kLeft + static_cast<double>(j) * cw;
      // row 0 at the bottom, increasing upward
      const double y = kTop + plot_h - static_cast<double>(i + 1) * ch;
      out << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\""
          << num(cw) << "\" height=\"" << num(ch) << "\" fill=\""
          << freq_color(f) << "\" stroke=\"#cccccc\" stroke-width=\"0.5\"/>\n";
      char label[16];
      std::snprintf(label, sizeof(label), "%.2f", f);
      draw_text(out, x + cw / 2.0, y + ch / 2.0 + 4.0, label, "middle", 11,
                f > 0.55 ? " fill=\"white\"" : " fill=\"#303030\"");
    }
  }
  for (std::size_t j = 0; j < cols; ++j) {
    draw_text(out, kLeft + (static_cast<double>(j) + 0.5) * cw,
              kTop + plot_h + 18.0, tick_label(spec.x[j]), "middle", 11);
  }
  for (std::size_t i = 0; i < rows; ++i) {
    draw_text(out, kLeft - 8.0,
              kTop + plot_h - (static_cast<double>(i) + 0.5) * ch + 4.0,
              tick_label(spec.y[i]), "end", 11);
  }
  // color key
  const double key_x = kWidth - kRight + 30.0;
  for (int s = 0; s <= 10; ++s) {
    const double f = s / 10.0;
    out << "<rect x=\"" << num(key_x) << "\" y=\""
        << num(kTop + plot_h - (f * plot_h * 0.6) - plot_h * 0.2 - 12.0)
        << "\" width=\"16\" height=\"" << num(plot_h * 0.06 + 0.5)
        << "\" fill=\"" << freq_color(f) << "\"/>\n";
  }
  draw_text(out, key_x + 8.0, kTop + plot_h * 0.2 - 20.0, "1.0", "middle", 10);
  draw_text(out, key_x + 8.0, kTop + plot_h * 0.8 + 10.0, "0.0", "middle", 10);
  draw_text(out, key_x + 8.0, kTop + plot_h * 0.1 - 32.0, "success", "middle",
            10);
  out << "</svg>\n";
  return out.str();
}

std::string render_curves(const CurvePlotSpec& spec) {
  double x_lo = std::numeric_limits<double>::infinity();
  double x_hi = -x_lo;
  double y_lo = std::numeric_limits<double>::infinity();
  double y_hi = -y_lo;
  constexpr double kLogFloor = 1e-16;

  auto note_y = [&](double v) {
    if (!std::isfinite(v)) return;
    if (spec.log_y) v = std::log10(std::max(v, kLogFloor));
    y_lo = std::min(y_lo, v);
    y_hi = std::max(y_hi, v);
  };
  for (const auto& s : spec.series) {
    for (double v : s.x) {
      x_lo = std::min(x_lo, v);
      x_hi = std::max(x_hi, v);
    }
    for (double v : s.mean) note_y(v);
    for (double v : s.lo) note_y(v);
    for (double v : s.hi) note_y(v);
    for (const auto& line : s.lines) {
      for (double v : line) note_y(v);
    }
  }
  if (!std::isfinite(x_lo)) {
    x_lo = 0.0;
    x_hi = 1.0;
  }
  if (!std::isfinite(y_lo)) {
    y_lo = 0.0;
    y_hi = 1.0;
  }
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  if (y_hi <= y_lo) y_hi = y_lo + 1.0;
  const double pad = 0.04 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;

  const LinearScale sx{x_lo, x_hi, kLeft, kWidth - kRight};
  const LinearScale sy{y_lo, y_hi, kHeight - kBottom, kTop};
  auto ty = [&](double v) {
    if (spec.log_y) v = std::log10(std::max(v, kLogFloor));
    return sy(v);
  };

  std::ostringstream out;
  open_svg(out);
  draw_frame_labels(out, spec.title, spec.xlabel,
                    spec.log_y ? spec.ylabel + " (log scale)" : spec.ylabel);

  // frame and ticks
  out << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\""
      << num(kWidth - kLeft - kRight) << "\" height=\""
      << num(kHeight - kTop - kBottom)
      << "\" fill=\"none\" stroke=\"#333333\"/>\n";
  for (double t : nice_ticks(x_lo, x_hi)) {
    draw_text(out, sx(t), kHeight - kBottom + 16.0, tick_label(t), "middle",
              10);
    out << "<line x1=\"" << num(sx(t)) << "\" y1=\"" << num(kHeight - kBottom)
        << "\" x2=\"" << num(sx(t)) << "\" y2=\""
        << num(kHeight - kBottom + 4.0) << "\" stroke=\"#333333\"/>\n";
  }
  for (double t : nice_ticks(y_lo, y_hi)) {
    const std::string label =
        spec.log_y ? ("1e" + tick_label(t)) : tick_label(t);
    draw_text(out, kLeft - 6.0, sy(t) + 3.5, label, "end", 10);
    out << "<line x1=\"" << num(kLeft - 4.0) << "\" y1=\"" << num(sy(t))
        << "\" x2=\"" << num(kLeft) << "\" y2=\"" << num(sy(t))
        << "\" stroke=\"#333333\"/>\n";
  }

  auto path_points = [&](const std::vector<double>& xs,
                         const std::vector<double>& ys) {
    std::string d;
    bool pen_down = false;
    for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i) {
      if (!std::isfinite(ys[i])) {
        pen_down = false;
        continue;
      }
      d += pen_down ? "L" : "M";
      d += num(sx(xs[i])) + " " + num(ty(ys[i])) + " ";
      pen_down = true;
    }
    return d;
  };

  int color_index = 0;
  double legend_y = kTop + 10.0;
  for (const auto& s : spec.series) {
    const char* color = kPalette[color_index % kPaletteSize];
    ++color_index;

    // band
    if (s.lo.size() == s.x.size() && s.hi.size() == s.x.size() &&
        !s.x.empty()) {
      std::string pts;
      bool any = false;
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.lo[i])) continue;
        pts += num(sx(s.x[i])) + "," + num(ty(s.lo[i])) + " ";
        any = true;
      }
      for (std::size_t i = s.x.size(); i-- > 0;) {
        if (!std::isfinite(s.hi[i])) continue;
        pts += num(sx(s.x[i])) + "," + num(ty(s.hi[i])) + " ";
      }
      if (any) {
        out << "<polygon points=\"" << pts << "\" fill=\"" << color
            << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
      }
    }
    // faint per-run traces
    for (const auto& line : s.lines) {
      const std::string d = path_points(s.x, line);
      if (!d.empty()) {
        out << "<path d=\"" << d << "\" fill=\"none\" stroke=\"" << color
            << "\" stroke-opacity=\"0.25\" stroke-width=\"1\""
            << dash_pattern(s.dash_group) << "/>\n";
      }
    }
    // aggregate line
    const std::string d = path_points(s.x, s.mean);
    if (!d.empty()) {
      out << "<path d=\"" << d << "\" fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"2\"" << dash_pattern(s.dash_group) << "/>\n";
    }
    // legend entry
    const double lx = kWidth - kRight + 14.0;
    out << "<line x1=\"" << num(lx) << "\" y1=\"" << num(legend_y)
        << "\" x2=\"" << num(lx + 26.0) << "\" y2=\"" << num(legend_y)
        << "\" stroke=\"" << color << "\" stroke-width=\"2\""
        << dash_pattern(s.dash_group) << "/>\n";
    draw_text(out, lx + 32.0, legend_y + 4.0, s.label, "start", 11);
    legend_y += 18.0;
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace vbcp
