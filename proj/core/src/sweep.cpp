#include "gaitlab/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace gaitlab::sweep {

std::vector<double> speed_grid(double v_min, double v_max, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("speed grid: step must be > 0");
  if (v_max < v_min) throw std::invalid_argument("speed grid: max below min");
  const auto n = static_cast<int>(std::floor((v_max - v_min) / step + 1e-9));
  std::vector<double> out;
  for (int k = 0; k <= n; ++k) out.push_back(std::round((v_min + k * step) * 1e9) / 1e9);
  return out;
}

std::vector<double> speed_grid(const mpc::GaitScheduleConfig& gait) {
  return speed_grid(gait.min_speed, gait.max_speed, 0.1);
}

std::vector<SweepRow> run_sweep(const RobotModel& model, const SweepConfig& cfg,
                                const std::function<void(const SweepRow&)>& progress) {
  if (cfg.gaits.empty()) throw std::invalid_argument("sweep: empty gait set");
  std::vector<SweepRow> rows;
  for (const auto& name : cfg.gaits) {
    const auto gait = mpc::GaitScheduleConfig::by_name(name);
    for (double v : speed_grid(gait.min_speed, gait.max_speed, cfg.step)) {
      const auto run = mpc::run_baseline(model, gait, v, cfg.run);
      SweepRow r{name, v, run.realized_speed, run.energy_per_meter_raw, run.energy_per_meter_positive,
                 run.fell};
      rows.push_back(r);
      if (progress) progress(r);
    }
  }
  return rows;
}

std::string csv_header() {
  return "gait,v_target,realized_speed,energy_per_meter_raw,energy_per_meter_positive_clamped,fell";
}

void write_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << csv_header() << '\n';
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.2f,%.6f,%.6f,%.6f,%s\n", r.gait.c_str(), r.v_target,
                  r.realized_speed, r.energy_per_meter_raw, r.energy_per_meter_positive,
                  r.fell ? "true" : "false");
    os << buf;
  }
}

std::vector<SweepRow> read_csv(std::istream& is) {
  std::string line;
  int lineno = 1;
  if (!std::getline(is, line)) throw std::invalid_argument("sweep csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != csv_header()) throw std::invalid_argument("sweep csv line 1: unexpected header");
  std::vector<SweepRow> rows;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> c;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) c.push_back(cell);
    if (c.size() != 6)
      throw std::invalid_argument("sweep csv line " + std::to_string(lineno) + ": expected 6 columns");
    try {
      SweepRow r;
      r.gait = c[0];
      r.v_target = std::stod(c[1]);
      r.realized_speed = std::stod(c[2]);
      r.energy_per_meter_raw = std::stod(c[3]);
      r.energy_per_meter_positive = std::stod(c[4]);
      if (c[5] != "true" && c[5] != "false") throw std::invalid_argument("fell");
      r.fell = c[5] == "true";
      rows.push_back(r);
    } catch (const std::exception&) {
      throw std::invalid_argument("sweep csv line " + std::to_string(lineno) + ": malformed value");
    }
  }
  return rows;
}

bool SweepReport::all_monotone() const {
  return std::all_of(curves.begin(), curves.end(), [](const CurveShape& c) { return c.monotone; });
}

namespace {

std::vector<std::string> gait_order(const std::vector<SweepRow>& rows) {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (std::find(out.begin(), out.end(), r.gait) == out.end()) out.push_back(r.gait);
  return out;
}

std::vector<const SweepRow*> curve(const std::vector<SweepRow>& rows, const std::string& gait) {
  std::vector<const SweepRow*> out;
  for (const auto& r : rows)
    if (r.gait == gait && !r.fell) out.push_back(&r);
  std::stable_sort(out.begin(), out.end(),
                   [](const SweepRow* a, const SweepRow* b) { return a->v_target < b->v_target; });
  return out;
}

}  // namespace

SweepReport analyze(const std::vector<SweepRow>& rows, double crossing_min, double crossing_max) {
  SweepReport rep;
  rep.crossing_min = crossing_min;
  rep.crossing_max = crossing_max;
  for (const auto& r : rows) rep.falls += r.fell ? 1 : 0;
  for (const auto& g : gait_order(rows)) {
    const auto pts = curve(rows, g);
    CurveShape s;
    s.gait = g;
    s.points = static_cast<int>(pts.size());
    int up = 0, down = 0;
    for (std::size_t k = 1; k < pts.size(); ++k) {
      const double d = pts[k]->energy_per_meter_raw - pts[k - 1]->energy_per_meter_raw;
      (d >= 0.0 ? up : down) += 1;
    }
    const int dominant = up >= down ? 1 : -1;
    for (std::size_t k = 1; k < pts.size(); ++k) {
      const double d = pts[k]->energy_per_meter_raw - pts[k - 1]->energy_per_meter_raw;
      if (d * dominant < 0.0) s.violations.push_back(pts[k]->v_target);
    }
    s.monotone = pts.size() >= 2 && s.violations.empty();
    s.direction = s.monotone ? dominant : 0;
    rep.curves.push_back(s);
  }

  const auto walk = curve(rows, "walk"), trot = curve(rows, "trot");
  std::map<long, std::pair<double, double>> shared;  // speed in cm -> (walk, trot)
  for (const auto* w : walk) shared[std::lround(w->v_target * 100.0)].first = w->energy_per_meter_raw;
  std::vector<std::pair<double, double>> diffs;  // (v, walk - trot)
  for (const auto* t : trot) {
    const auto it = shared.find(std::lround(t->v_target * 100.0));
    if (it != shared.end()) diffs.emplace_back(t->v_target, it->second.first - t->energy_per_meter_raw);
  }
  for (std::size_t k = 1; k < diffs.size() && !rep.walk_trot_crossing; ++k) {
    const auto [v0, d0] = diffs[k - 1];
    const auto [v1, d1] = diffs[k];
    if ((d0 < 0.0) != (d1 < 0.0) || d1 == 0.0) {
      const double v = d1 == d0 ? v1 : v0 + (v1 - v0) * d0 / (d0 - d1);
      if (v >= crossing_min && v <= crossing_max) rep.walk_trot_crossing = v;
    }
  }
  return rep;
}

std::string format_report(const SweepReport& r) {
  std::ostringstream os;
  char buf[128];
  for (const auto& c : r.curves) {
    os << c.gait << ": " << c.points << " points, ";
    if (c.monotone)
      os << "monotone " << (c.direction > 0 ? "increasing" : "decreasing");
    else {
      os << "NOT monotone (reversals at";
      for (double v : c.violations) {
        std::snprintf(buf, sizeof buf, " %.2f", v);
        os << buf;
      }
      os << " m/s)";
    }
    os << '\n';
  }
  std::snprintf(buf, sizeof buf, "[%.2f, %.2f] m/s", r.crossing_min, r.crossing_max);
  if (r.walk_trot_crossing) {
    std::snprintf(buf, sizeof buf, "walk/trot crossing at %.3f m/s\n", *r.walk_trot_crossing);
    os << buf;
  } else {
    os << "FLAG: no walk/trot crossing in " << buf << '\n';
  }
  os << "falls: " << r.falls << '\n';
  return os.str();
}

namespace {

std::string f3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

const char* color_for(const std::string& gait) {
  if (gait == "walk") return "#1f77b4";
  if (gait == "trot") return "#ff7f0e";
  if (gait == "bounce") return "#2ca02c";
  return "#7f7f7f";
}

}  // namespace

std::string render_svg(const std::vector<SweepRow>& rows, const std::vector<PolicyPoint>& policies,
                       int width, int height) {
  if (width < 200 || height < 150) throw std::invalid_argument("sweep chart: size too small");
  double vmax = 0.0, emax = 0.0;
  for (const auto& r : rows)
    if (!r.fell) {
      vmax = std::max(vmax, r.realized_speed);
      emax = std::max(emax, r.energy_per_meter_raw);
    }
  for (const auto& p : policies) {
    vmax = std::max(vmax, p.speed);
    emax = std::max(emax, p.energy_per_meter);
  }
  vmax = std::max(0.5, std::ceil(vmax * 2.0 + 1e-9) / 2.0);
  emax = std::max(10.0, std::ceil(emax / 50.0 + 1e-9) * 50.0);
  const double left = 60, right = 110, top = 20, bottom = 50;
  const double pw = width - left - right, ph = height - top - bottom;
  auto X = [&](double v) { return left + v / vmax * pw; };
  auto Y = [&](double e) { return top + ph - e / emax * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  os << "<g stroke=\"black\" fill=\"none\"><line x1=\"" << f3(left) << "\" y1=\"" << f3(top + ph)
     << "\" x2=\"" << f3(left + pw) << "\" y2=\"" << f3(top + ph) << "\"/><line x1=\"" << f3(left)
     << "\" y1=\"" << f3(top) << "\" x2=\"" << f3(left) << "\" y2=\"" << f3(top + ph) << "\"/></g>\n";
  os << "<g font-family=\"sans-serif\" font-size=\"10\">\n";
  for (double v = 0.0; v <= vmax + 1e-9; v += 0.5)
    os << "<text x=\"" << f3(X(v) - 8) << "\" y=\"" << f3(top + ph + 14) << "\">" << f3(v).substr(0, 3)
       << "</text>\n";
  for (int k = 0; k <= 5; ++k) {
    const double e = emax * k / 5.0;
    os << "<text x=\"" << f3(left - 40) << "\" y=\"" << f3(Y(e) + 3) << "\">" << std::lround(e) << "</text>\n";
  }
  os << "<text x=\"" << f3(left + pw / 2 - 40) << "\" y=\"" << height - 12
     << "\">speed (m/s)</text>\n";
  os << "<text x=\"12\" y=\"" << f3(top + ph / 2) << "\" transform=\"rotate(-90 12 " << f3(top + ph / 2)
     << ")\">energy per meter (J/m)</text>\n</g>\n";

  int legend = 0;
  for (const auto& g : gait_order(rows)) {
    const auto pts = curve(rows, g);
    os << "<polyline fill=\"none\" stroke=\"" << color_for(g) << "\" stroke-width=\"2\" data-gait=\"" << g
       << "\" points=\"";
    for (std::size_t k = 0; k < pts.size(); ++k)
      os << (k ? " " : "") << f3(X(pts[k]->realized_speed)) << ',' << f3(Y(pts[k]->energy_per_meter_raw));
    os << "\"/>\n";
    for (const auto* p : pts)
      os << "<circle cx=\"" << f3(X(p->realized_speed)) << "\" cy=\"" << f3(Y(p->energy_per_meter_raw))
         << "\" r=\"2.5\" fill=\"" << color_for(g) << "\"/>\n";
    const double ly = top + 12 + 16 * legend++;
    os << "<line x1=\"" << f3(left + pw + 10) << "\" y1=\"" << f3(ly) << "\" x2=\"" << f3(left + pw + 30)
       << "\" y2=\"" << f3(ly) << "\" stroke=\"" << color_for(g) << "\" stroke-width=\"2\"/>"
       << "<text x=\"" << f3(left + pw + 34) << "\" y=\"" << f3(ly + 4)
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << g << " (baseline)</text>\n";
  }
  for (const auto& p : policies) {
    const double x = X(p.speed), y = Y(p.energy_per_meter);
    os << "<path d=\"M" << f3(x - 5) << ',' << f3(y) << " L" << f3(x) << ',' << f3(y - 5) << " L"
       << f3(x + 5) << ',' << f3(y) << " L" << f3(x) << ',' << f3(y + 5) << " Z\" fill=\"black\"/>"
       << "<text x=\"" << f3(x + 7) << "\" y=\"" << f3(y - 6)
       << "\" font-family=\"sans-serif\" font-size=\"10\">" << p.label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace gaitlab::sweep
