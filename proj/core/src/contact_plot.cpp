#include "gaitlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace gaitlab::analysis {

namespace {

struct Window {
  std::size_t first = 0;
  std::size_t count = 0;
};

Window window_of(const ContactTrace& trace, const PlotOptions& opt) {
  trace.validate();
  if (!(opt.window > 0.0)) throw std::invalid_argument("plot: window must be > 0");
  if (opt.start < 0.0) throw std::invalid_argument("plot: start must be >= 0");
  Window w;
  w.first = std::min(trace.size(), static_cast<std::size_t>(std::llround(opt.start * trace.sample_rate)));
  const auto want = static_cast<std::size_t>(std::llround(opt.window * trace.sample_rate));
  w.count = std::min(want, trace.size() - w.first);
  if (w.count == 0) throw std::invalid_argument("plot: window starts past the end of the trace");
  return w;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

std::string render_contact_svg(const ContactTrace& trace, const PlotOptions& opt) {
  const Window w = window_of(trace, opt);
  if (opt.width < 100) throw std::invalid_argument("plot: width must be >= 100 px");
  constexpr double kLabel = 40.0, kLane = 24.0, kBar = 16.0, kTop = 8.0, kAxis = 24.0;
  const double plot_w = opt.width - kLabel - 8.0;
  const double px_per_sample = plot_w / static_cast<double>(w.count);
  const double height = kTop + kNumLegs * kLane + kAxis;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << fmt(height)
     << "\" viewBox=\"0 0 " << opt.width << ' ' << fmt(height) << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << opt.width << "\" height=\"" << fmt(height)
     << "\" fill=\"white\"/>\n";
  for (int i = 0; i < kNumLegs; ++i) {
    const auto li = static_cast<std::size_t>(i);
    const double y = kTop + i * kLane;
    os << "<text x=\"4\" y=\"" << fmt(y + kBar - 3.0) << "\" font-family=\"monospace\" font-size=\"12\">"
       << kLegNames[li] << "</text>\n";
    os << "<g fill=\"#333\" data-leg=\"" << kLegNames[li] << "\">\n";
    std::size_t k = 0;
    while (k < w.count) {
      if (!trace.contacts[w.first + k][li]) {
        ++k;
        continue;
      }
      const std::size_t run_start = k;
      while (k < w.count && trace.contacts[w.first + k][li]) ++k;
      os << "<rect x=\"" << fmt(kLabel + run_start * px_per_sample) << "\" y=\"" << fmt(y) << "\" width=\""
         << fmt((k - run_start) * px_per_sample) << "\" height=\"" << fmt(kBar) << "\"/>\n";
    }
    os << "</g>\n";
  }
  // Time axis with a tick per second.
  const double axis_y = kTop + kNumLegs * kLane;
  os << "<line x1=\"" << fmt(kLabel) << "\" y1=\"" << fmt(axis_y) << "\" x2=\"" << fmt(kLabel + plot_w)
     << "\" y2=\"" << fmt(axis_y) << "\" stroke=\"black\"/>\n";
  const double t0 = static_cast<double>(w.first) / trace.sample_rate;
  const double span = static_cast<double>(w.count) / trace.sample_rate;
  for (double s = std::ceil(t0); s <= t0 + span + 1e-9; s += 1.0) {
    const double x = kLabel + (s - t0) / span * plot_w;
    os << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(axis_y) << "\" x2=\"" << fmt(x) << "\" y2=\""
       << fmt(axis_y + 4.0) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << fmt(x - 4.0) << "\" y=\"" << fmt(axis_y + 16.0)
       << "\" font-family=\"monospace\" font-size=\"10\">" << fmt(s) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string render_contact_text(const ContactTrace& trace, const PlotOptions& opt) {
  const Window w = window_of(trace, opt);
  if (opt.text_columns < 1) throw std::invalid_argument("plot: text columns must be >= 1");
  const std::size_t cols = std::min(w.count, static_cast<std::size_t>(opt.text_columns));
  std::ostringstream os;
  for (int i = 0; i < kNumLegs; ++i) {
    const auto li = static_cast<std::size_t>(i);
    os << kLegNames[li] << ' ';
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t a = c * w.count / cols, b = (c + 1) * w.count / cols;
      std::size_t on = 0;
      for (std::size_t k = a; k < b; ++k) on += trace.contacts[w.first + k][li] ? 1 : 0;
      os << (2 * on >= b - a ? '#' : '.');
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace gaitlab::analysis
