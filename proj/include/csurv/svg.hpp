// Minimal SVG 1.1 emitters for the two figures the CLI writes: the TOC curve
// with 95% bars and the outcome histogram split by event status.
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "csurv/common.hpp"
#include "csurv/dataset.hpp"

namespace csurv {
namespace detail {

struct PlotFrame {
  double width = 640, height = 440;
  double left = 64, right = 20, top = 36, bottom = 48;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;

  double px(double x) const {
    return left + (x - x_min) / (x_max - x_min) * (width - left - right);
  }
  double py(double y) const {
    return height - bottom - (y - y_min) / (y_max - y_min) * (height - top - bottom);
  }
};

inline std::string fmt_num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

inline void open_svg(std::ostringstream& os, const PlotFrame& f, const std::string& title) {
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << f.width
     << "\" height=\"" << f.height << "\" viewBox=\"0 0 " << f.width << " " << f.height
     << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << f.width / 2 << "\" y=\"22\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";
}

inline void axes(std::ostringstream& os, const PlotFrame& f, const std::string& x_label,
                 const std::string& y_label) {
  os << "<line x1=\"" << f.px(f.x_min) << "\" y1=\"" << f.py(f.y_min) << "\" x2=\""
     << f.px(f.x_max) << "\" y2=\"" << f.py(f.y_min) << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << f.px(f.x_min) << "\" y1=\"" << f.py(f.y_min) << "\" x2=\""
     << f.px(f.x_min) << "\" y2=\"" << f.py(f.y_max) << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x_min + (f.x_max - f.x_min) * i / 4.0;
    const double yv = f.y_min + (f.y_max - f.y_min) * i / 4.0;
    os << "<text x=\"" << f.px(xv) << "\" y=\"" << f.py(f.y_min) + 18
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
       << fmt_num(xv) << "</text>\n"
       << "<text x=\"" << f.px(f.x_min) - 8 << "\" y=\"" << f.py(yv) + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
       << fmt_num(yv) << "</text>\n"
       << "<line x1=\"" << f.px(f.x_min) - 4 << "\" y1=\"" << f.py(yv) << "\" x2=\""
       << f.px(f.x_min) << "\" y2=\"" << f.py(yv) << "\" stroke=\"black\"/>\n";
  }
  os << "<text x=\"" << (f.px(f.x_min) + f.px(f.x_max)) / 2 << "\" y=\"" << f.height - 10
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << x_label
     << "</text>\n"
     << "<text x=\"16\" y=\"" << (f.py(f.y_min) + f.py(f.y_max)) / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
     << "transform=\"rotate(-90 16 " << (f.py(f.y_min) + f.py(f.y_max)) / 2 << ")\">"
     << y_label << "</text>\n";
}

}  // namespace detail

// TOC(q) line with pointwise 95% bars (1.96 * se). `se` may be empty.
inline void write_toc_svg(const std::string& path, const std::vector<double>& q,
                          const std::vector<double>& toc, const std::vector<double>& se,
                          const std::string& title = "TOC: by decreasing priority") {
  if (q.empty() || q.size() != toc.size())
    throw ParamError("toc svg needs equal-length, nonempty inputs");
  const bool bars = !se.empty() && se.size() == q.size();

  detail::PlotFrame f;
  f.x_min = 0;
  f.x_max = 1;
  double lo = 0, hi = 0;
  for (size_t i = 0; i < toc.size(); ++i) {
    const double delta = bars ? 1.96 * se[i] : 0.0;
    lo = std::min(lo, toc[i] - delta);
    hi = std::max(hi, toc[i] + delta);
  }
  if (hi == lo) hi = lo + 1;
  const double pad = 0.05 * (hi - lo);
  f.y_min = lo - pad;
  f.y_max = hi + pad;

  std::ostringstream os;
  detail::open_svg(os, f, title);
  detail::axes(os, f, "Treated fraction (q)", "TOC(q)");
  os << "<line x1=\"" << f.px(0) << "\" y1=\"" << f.py(0) << "\" x2=\"" << f.px(1)
     << "\" y2=\"" << f.py(0) << "\" stroke=\"#999999\" stroke-dasharray=\"4 3\"/>\n";
  if (bars) {
    for (size_t i = 0; i < q.size(); ++i) {
      const double x = f.px(q[i]);
      const double y0 = f.py(toc[i] - 1.96 * se[i]);
      const double y1 = f.py(toc[i] + 1.96 * se[i]);
      os << "<line x1=\"" << x << "\" y1=\"" << y0 << "\" x2=\"" << x << "\" y2=\"" << y1
         << "\" stroke=\"#bbbbbb\"/>\n";
    }
  }
  os << "<polyline fill=\"none\" stroke=\"#1f6fb4\" stroke-width=\"1.8\" points=\"";
  for (size_t i = 0; i < q.size(); ++i)
    os << f.px(q[i]) << "," << f.py(toc[i]) << (i + 1 < q.size() ? " " : "");
  os << "\"/>\n</svg>\n";

  std::ofstream out(path);
  if (!out) throw IoError("cannot write svg file: " + path);
  out << os.str();
}

// Stacked histogram of recorded times split by event status, with an
// optional vertical marker (the paper draws one at the horizon).
inline void write_histogram_svg(const std::string& path, const HistogramSpec& spec,
                                double marker = -1,
                                const std::string& title = "Recorded time by event status") {
  const size_t nb = spec.counts_event.size();
  if (nb == 0) throw ParamError("histogram svg needs at least one bin");
  detail::PlotFrame f;
  f.x_min = spec.bin_edges.front();
  f.x_max = spec.bin_edges.back();
  if (f.x_max == f.x_min) f.x_max = f.x_min + 1;
  size_t max_count = 1;
  for (size_t b = 0; b < nb; ++b)
    max_count = std::max(max_count, spec.counts_event[b] + spec.counts_censored[b]);
  f.y_min = 0;
  f.y_max = static_cast<double>(max_count) * 1.05;

  std::ostringstream os;
  detail::open_svg(os, f, title);
  detail::axes(os, f, "Recorded time", "Count");
  for (size_t b = 0; b < nb; ++b) {
    const double x0 = f.px(spec.bin_edges[b]);
    const double x1 = f.px(spec.bin_edges[b + 1]);
    const double evented = static_cast<double>(spec.counts_event[b]);
    const double censored = static_cast<double>(spec.counts_censored[b]);
    const double y_ev = f.py(evented);
    const double y_all = f.py(evented + censored);
    os << "<rect x=\"" << x0 << "\" y=\"" << y_ev << "\" width=\"" << x1 - x0
       << "\" height=\"" << f.py(0) - y_ev << "\" fill=\"#8c8c8c\" stroke=\"white\" "
       << "stroke-width=\"0.5\"/>\n";
    if (censored > 0)
      os << "<rect x=\"" << x0 << "\" y=\"" << y_all << "\" width=\"" << x1 - x0
         << "\" height=\"" << y_ev - y_all << "\" fill=\"#d65f5f\" stroke=\"white\" "
         << "stroke-width=\"0.5\"/>\n";
  }
  if (marker > f.x_min && marker < f.x_max)
    os << "<line x1=\"" << f.px(marker) << "\" y1=\"" << f.py(f.y_min) << "\" x2=\""
       << f.px(marker) << "\" y2=\"" << f.py(f.y_max) << "\" stroke=\"black\" "
       << "stroke-dasharray=\"5 4\"/>\n";
  os << "<rect x=\"" << f.width - 150 << "\" y=\"40\" width=\"12\" height=\"12\" "
     << "fill=\"#8c8c8c\"/>\n<text x=\"" << f.width - 132
     << "\" y=\"50\" font-family=\"sans-serif\" font-size=\"12\">Event</text>\n"
     << "<rect x=\"" << f.width - 150 << "\" y=\"58\" width=\"12\" height=\"12\" "
     << "fill=\"#d65f5f\"/>\n<text x=\"" << f.width - 132
     << "\" y=\"68\" font-family=\"sans-serif\" font-size=\"12\">Censored</text>\n</svg>\n";

  std::ofstream out(path);
  if (!out) throw IoError("cannot write svg file: " + path);
  out << os.str();
}

}  // namespace csurv
