#include "stcp/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace stcp {
namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 160.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;
constexpr int kTicks = 5;

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v == 0.0 ? 0.0 : v);
  return buf;
}

std::string tick_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", std::fabs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void data_range(const PlotSpec& spec, bool want_x, double& lo, double& hi) {
  if (lo != hi) return;
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (const auto& s : spec.series) {
    for (double v : want_x ? s.x : s.y) {
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!std::isfinite(lo)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
}

}  // namespace

std::string render_svg(const PlotSpec& spec) {
  double x0 = spec.xmin, x1 = spec.xmax, y0 = spec.ymin, y1 = spec.ymax;
  data_range(spec, true, x0, x1);
  data_range(spec, false, y0, y1);
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\""
    << num(kHeight) << "\" viewBox=\"0 0 " << num(kWidth) << ' ' << num(kHeight)
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"24.00\" text-anchor=\"middle\" font-size=\"14\">"
    << escape(spec.title) << "</text>\n";
  o << "<clipPath id=\"plot\"><rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\""
    << num(pw) << "\" height=\"" << num(ph) << "\"/></clipPath>\n";

  for (int i = 0; i <= kTicks; ++i) {
    const double fx = x0 + (x1 - x0) * i / kTicks;
    const double fy = y0 + (y1 - y0) * i / kTicks;
    o << "<line x1=\"" << num(px(fx)) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(px(fx))
      << "\" y2=\"" << num(kTop + ph) << "\" stroke=\"#e0e0e0\"/>\n";
    o << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(py(fy)) << "\" x2=\"" << num(kLeft + pw)
      << "\" y2=\"" << num(py(fy)) << "\" stroke=\"#e0e0e0\"/>\n";
    o << "<text x=\"" << num(px(fx)) << "\" y=\"" << num(kTop + ph + 16) << "\" text-anchor=\"middle\">"
      << tick_label(fx) << "</text>\n";
    o << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(py(fy) + 4) << "\" text-anchor=\"end\">"
      << tick_label(fy) << "</text>\n";
  }
  o << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(pw)
    << "\" height=\"" << num(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 16)
    << "\" text-anchor=\"middle\">" << escape(spec.xlabel) << "</text>\n";
  o << "<text x=\"18.00\" y=\"" << num(kTop + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18.00 "
    << num(kTop + ph / 2) << ")\">" << escape(spec.ylabel) << "</text>\n";

  o << "<g clip-path=\"url(#plot)\">\n";
  if (spec.diagonal) {
    const double lo = std::max(x0, y0), hi = std::min(x1, y1);
    if (lo < hi) {
      o << "<line class=\"diagonal\" x1=\"" << num(px(lo)) << "\" y1=\"" << num(py(lo)) << "\" x2=\""
        << num(px(hi)) << "\" y2=\"" << num(py(hi)) << "\" stroke=\"gray\" stroke-dasharray=\"2 2\"/>\n";
    }
  }
  for (const auto& s : spec.series) {
    const std::size_t n = std::min(s.x.size(), s.y.size());
    if (s.line) {
      std::string pts;
      auto flush = [&] {
        if (pts.empty()) return;
        o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\""
          << (s.dashed ? " stroke-dasharray=\"6 3\"" : "") << " points=\"" << pts << "\"/>\n";
        pts.clear();
      };
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
          flush();
          continue;
        }
        if (!pts.empty()) pts += ' ';
        pts += num(px(s.x[i])) + "," + num(py(s.y[i]));
      }
      flush();
    }
    if (s.markers) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        o << "<circle class=\"marker\" cx=\"" << num(px(s.x[i])) << "\" cy=\"" << num(py(s.y[i]))
          << "\" r=\"3.00\" fill=\"" << s.color << "\"/>\n";
      }
    }
  }
  o << "</g>\n";

  double ly = kTop + 10;
  for (const auto& s : spec.series) {
    if (s.label.empty()) continue;
    const double lx = kLeft + pw + 12;
    o << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(lx + 20) << "\" y2=\""
      << num(ly) << "\" stroke=\"" << s.color << "\" stroke-width=\"1.5\""
      << (s.dashed ? " stroke-dasharray=\"6 3\"" : "") << "/>\n";
    o << "<text x=\"" << num(lx + 26) << "\" y=\"" << num(ly + 4) << "\">" << escape(s.label)
      << "</text>\n";
    ly += 18;
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace stcp
