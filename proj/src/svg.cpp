#include "cels/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace cels {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (lo > hi) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi == lo) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

struct Mapper {
  Range rx, ry;
  double x0, y0, w, h;  // plot rect, SVG coords
  double px(double v) const { return x0 + (v - rx.lo) / (rx.hi - rx.lo) * w; }
  double py(double v) const { return y0 + h - (v - ry.lo) / (ry.hi - ry.lo) * h; }
};

void emit_axes(std::ostringstream& out, const Mapper& m,
               const std::string& x_label) {
  out << "<rect x='" << fmt(m.x0) << "' y='" << fmt(m.y0) << "' width='"
      << fmt(m.w) << "' height='" << fmt(m.h)
      << "' fill='none' stroke='#444' stroke-width='1'/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = m.rx.lo + (m.rx.hi - m.rx.lo) * i / 4.0;
    const double fy = m.ry.lo + (m.ry.hi - m.ry.lo) * i / 4.0;
    out << "<text x='" << fmt(m.px(fx)) << "' y='" << fmt(m.y0 + m.h + 16)
        << "' font-size='11' text-anchor='middle' fill='#333'>" << fmt(fx)
        << "</text>\n";
    out << "<text x='" << fmt(m.x0 - 6) << "' y='" << fmt(m.py(fy) + 4)
        << "' font-size='11' text-anchor='end' fill='#333'>" << fmt(fy)
        << "</text>\n";
    out << "<line x1='" << fmt(m.x0) << "' y1='" << fmt(m.py(fy)) << "' x2='"
        << fmt(m.x0 + m.w) << "' y2='" << fmt(m.py(fy))
        << "' stroke='#ddd' stroke-width='0.5'/>\n";
  }
  out << "<text x='" << fmt(m.x0 + m.w / 2) << "' y='" << fmt(m.y0 + m.h + 32)
      << "' font-size='12' text-anchor='middle' fill='#000'>" << x_label
      << "</text>\n";
}

void emit_polyline(std::ostringstream& out, const Mapper& m,
                   const std::vector<double>& xs, const std::vector<double>& ys,
                   const std::string& color) {
  out << "<polyline fill='none' stroke='" << color
      << "' stroke-width='1.5' points='";
  for (std::size_t i = 0; i < xs.size(); ++i)
    out << fmt(m.px(xs[i])) << ',' << fmt(m.py(ys[i])) << ' ';
  out << "'/>\n";
}

// White -> red ramp for the saliency strip.
std::string heat_color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  const int g = static_cast<int>(std::lround(255.0 * (1.0 - v)));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#ff%02x%02x", g, g);
  return buf;
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::vector<SvgSeries>& series, int width,
                           int height) {
  if (series.empty()) throw std::invalid_argument("line_chart_svg: no series");
  Mapper m;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size())
      throw std::invalid_argument("line_chart_svg: x/y size mismatch");
    for (const double v : s.x) m.rx.add(v);
    for (const double v : s.y) m.ry.add(v);
  }
  m.rx.pad();
  m.ry.pad();
  m.x0 = 56;
  m.y0 = 36;
  m.w = width - 200;
  m.h = height - 84;

  std::ostringstream out;
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width
      << "' height='" << height << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << fmt(m.x0 + m.w / 2)
      << "' y='22' font-size='14' text-anchor='middle' fill='#000'>" << title
      << "</text>\n";
  emit_axes(out, m, x_label);
  double legend_y = m.y0 + 10;
  for (const auto& s : series) {
    emit_polyline(out, m, s.x, s.y, s.color);
    out << "<line x1='" << fmt(m.x0 + m.w + 12) << "' y1='" << fmt(legend_y)
        << "' x2='" << fmt(m.x0 + m.w + 34) << "' y2='" << fmt(legend_y)
        << "' stroke='" << s.color << "' stroke-width='2'/>\n";
    out << "<text x='" << fmt(m.x0 + m.w + 40) << "' y='" << fmt(legend_y + 4)
        << "' font-size='11' fill='#000'>" << s.label << "</text>\n";
    legend_y += 18;
  }
  out << "</svg>\n";
  return out.str();
}

std::string instance_plot_svg(const std::vector<double>& x,
                              const std::vector<double>& nun,
                              const std::vector<double>& cf,
                              const std::vector<double>& theta,
                              const std::string& title, int width, int height) {
  if (x.empty() || x.size() != cf.size() || x.size() != theta.size() ||
      (!nun.empty() && x.size() != nun.size()))
    throw std::invalid_argument("instance_plot_svg: length mismatch");

  const int strip_h = 26;
  Mapper m;
  for (std::size_t t = 0; t < x.size(); ++t) {
    m.rx.add(static_cast<double>(t));
    m.ry.add(x[t]);
    if (!nun.empty()) m.ry.add(nun[t]);
    m.ry.add(cf[t]);
  }
  m.rx.pad();
  m.ry.pad();
  m.x0 = 56;
  m.y0 = 36;
  m.w = width - 200;
  m.h = height - 120 - strip_h;

  std::vector<double> ts(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) ts[t] = static_cast<double>(t);

  std::ostringstream out;
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width
      << "' height='" << height << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << fmt(m.x0 + m.w / 2)
      << "' y='22' font-size='14' text-anchor='middle' fill='#000'>" << title
      << "</text>\n";
  emit_axes(out, m, "time step");

  const struct {
    const std::vector<double>* v;
    const char* label;
    const char* color;
  } lines[] = {{&x, "original", "#1f77b4"},
               {&nun, "nun", "#7f7f7f"},
               {&cf, "counterfactual", "#d62728"}};
  double legend_y = m.y0 + 10;
  for (const auto& ln : lines) {
    if (ln.v->empty()) continue;
    emit_polyline(out, m, ts, *ln.v, ln.color);
    out << "<line x1='" << fmt(m.x0 + m.w + 12) << "' y1='" << fmt(legend_y)
        << "' x2='" << fmt(m.x0 + m.w + 34) << "' y2='" << fmt(legend_y)
        << "' stroke='" << ln.color << "' stroke-width='2'/>\n";
    out << "<text x='" << fmt(m.x0 + m.w + 40) << "' y='" << fmt(legend_y + 4)
        << "' font-size='11' fill='#000'>" << ln.label << "</text>\n";
    legend_y += 18;
  }

  // Saliency heat strip beneath the chart.
  const double strip_y = m.y0 + m.h + 44;
  const double cell = m.w / static_cast<double>(x.size());
  for (std::size_t t = 0; t < theta.size(); ++t) {
    out << "<rect x='" << fmt(m.x0 + cell * t) << "' y='" << fmt(strip_y)
        << "' width='" << fmt(cell + 0.5) << "' height='" << strip_h
        << "' fill='" << heat_color(theta[t]) << "'/>\n";
  }
  out << "<rect x='" << fmt(m.x0) << "' y='" << fmt(strip_y) << "' width='"
      << fmt(m.w) << "' height='" << strip_h
      << "' fill='none' stroke='#444' stroke-width='1'/>\n";
  out << "<text x='" << fmt(m.x0 - 6) << "' y='" << fmt(strip_y + strip_h / 2.0 + 4)
      << "' font-size='11' text-anchor='end' fill='#000'>saliency</text>\n";
  out << "</svg>\n";
  return out.str();
}

}  // namespace cels
