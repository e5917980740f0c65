#include "gaitlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gaitlab::analysis {

double froude(double v, double h, double g) {
  if (!(h > 0.0)) throw std::invalid_argument("froude: hip height must be > 0");
  if (!(g > 0.0)) throw std::invalid_argument("froude: gravity must be > 0");
  return v * v / (g * h);
}

std::string to_string(GaitLabel g) {
  switch (g) {
    case GaitLabel::Walk: return "walk";
    case GaitLabel::Trot: return "trot";
    case GaitLabel::Bounce: return "bounce";
    case GaitLabel::Unstructured: return "unstructured";
    case GaitLabel::Standing: return "standing";
  }
  return "unstructured";
}

void ContactTrace::validate() const {
  if (contacts.empty()) throw std::invalid_argument("contact trace: empty");
  if (!(sample_rate > 0.0)) throw std::invalid_argument("contact trace: sample rate must be > 0");
  if (!speed.empty() && speed.size() != contacts.size())
    throw std::invalid_argument("contact trace: speed series length mismatch");
  if (!power.empty() && power.size() != contacts.size())
    throw std::invalid_argument("contact trace: power series length mismatch");
  if (hip_height && !(*hip_height > 0.0))
    throw std::invalid_argument("contact trace: hip height must be > 0");
}

ContactTrace ContactTrace::slice(std::size_t first, std::size_t count) const {
  if (first > contacts.size() || count > contacts.size() - first)
    throw std::out_of_range("contact trace: slice out of range");
  ContactTrace out;
  out.sample_rate = sample_rate;
  out.hip_height = hip_height;
  const auto b = static_cast<std::ptrdiff_t>(first), e = static_cast<std::ptrdiff_t>(first + count);
  out.contacts.assign(contacts.begin() + b, contacts.begin() + e);
  if (!speed.empty()) out.speed.assign(speed.begin() + b, speed.begin() + e);
  if (!power.empty()) out.power.assign(power.begin() + b, power.begin() + e);
  return out;
}

ContactTrace ContactTrace::upsample(int factor) const {
  if (factor < 1) throw std::invalid_argument("contact trace: upsample factor must be >= 1");
  ContactTrace out;
  out.sample_rate = sample_rate * factor;
  out.hip_height = hip_height;
  for (std::size_t k = 0; k < contacts.size(); ++k)
    for (int r = 0; r < factor; ++r) {
      out.contacts.push_back(contacts[k]);
      if (!speed.empty()) out.speed.push_back(speed[k]);
      if (!power.empty()) out.power.push_back(power[k]);
    }
  return out;
}

double GaitMetrics::mean_duty() const {
  return std::accumulate(duty_factor.begin(), duty_factor.end(), 0.0) / kNumLegs;
}

namespace {

double wrap01(double x) { return x - std::floor(x); }

// Shortest distance between two phases on the unit circle, in cycles.
double circ_dist(double a, double b) {
  const double d = wrap01(a - b);
  return std::min(d, 1.0 - d);
}

double circular_mean(const std::vector<double>& phases) {
  double s = 0.0, c = 0.0;
  for (double p : phases) {
    s += std::sin(2.0 * M_PI * p);
    c += std::cos(2.0 * M_PI * p);
  }
  if (std::hypot(s, c) < 1e-12) return 0.0;
  return wrap01(std::atan2(s, c) / (2.0 * M_PI));
}

std::vector<std::size_t> touchdowns(const std::vector<ContactFlags>& c, int leg) {
  std::vector<std::size_t> out;
  const auto li = static_cast<std::size_t>(leg);
  for (std::size_t t = 1; t < c.size(); ++t)
    if (c[t][li] && !c[t - 1][li]) out.push_back(t);
  return out;
}

struct PeriodEstimate {
  double samples = 0.0;
  double periodicity = 0.0;
};

// Summed autocorrelation of the mean-removed contact signals. The period is
// the first strong peak after the correlation has gone negative, refined by
// the mean touchdown interval near that lag.
std::optional<PeriodEstimate> estimate_period(const std::vector<ContactFlags>& c,
                                              const ClassifierConfig& cfg) {
  const std::size_t n = c.size();
  const auto max_lag = static_cast<std::size_t>(std::floor(static_cast<double>(n) / cfg.min_cycles));
  if (max_lag < 2) return std::nullopt;
  std::vector<std::vector<double>> x;
  for (int i = 0; i < kNumLegs; ++i) {
    std::vector<double> v(n);
    double mean = 0.0;
    for (std::size_t t = 0; t < n; ++t) mean += v[t] = c[t][static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double& e : v) {
      e -= mean;
      var += e * e;
    }
    if (var > 1e-9) x.push_back(std::move(v));
  }
  if (x.empty()) return std::nullopt;

  std::vector<double> r(max_lag + 1, 0.0);
  for (std::size_t k = 0; k <= max_lag; ++k) {
    double acc = 0.0;
    for (const auto& v : x)
      for (std::size_t t = 0; t + k < n; ++t) acc += v[t] * v[t + k];
    r[k] = acc / static_cast<double>(n - k);
  }
  const double r0 = r[0];
  for (double& e : r) e /= r0;

  std::size_t k0 = 1;
  while (k0 <= max_lag && r[k0] >= 0.0) ++k0;
  if (k0 >= max_lag) return std::nullopt;
  const double gmax = *std::max_element(r.begin() + static_cast<std::ptrdiff_t>(k0), r.end());
  if (!(gmax > 0.0)) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t k = k0; k <= max_lag; ++k) {
    const bool peak = r[k] >= r[k - 1] && (k == max_lag || r[k] >= r[k + 1]);
    if (peak && r[k] >= 0.9 * gmax) {
      best = k;
      break;
    }
  }
  if (best == 0) return std::nullopt;

  PeriodEstimate est;
  est.periodicity = r[best];
  double sum = 0.0;
  int count = 0;
  for (int i = 0; i < kNumLegs; ++i) {
    const auto td = touchdowns(c, i);
    for (std::size_t k = 1; k < td.size(); ++k) {
      const double d = static_cast<double>(td[k] - td[k - 1]);
      if (d >= 0.5 * static_cast<double>(best) && d <= 1.5 * static_cast<double>(best)) {
        sum += d;
        ++count;
      }
    }
  }
  est.samples = count > 0 ? sum / count : static_cast<double>(best);
  return est;
}

}  // namespace

GaitMetrics gait_metrics(const ContactTrace& trace, const RobotModel& model,
                         const ClassifierConfig& cfg) {
  trace.validate();
  const auto& c = trace.contacts;
  const std::size_t n = c.size();
  GaitMetrics m;

  std::array<double, kNumLegs> contact_frac{};
  std::size_t flight = 0;
  for (const auto& s : c) {
    bool any = false;
    for (int i = 0; i < kNumLegs; ++i) {
      const auto li = static_cast<std::size_t>(i);
      if (s[li]) {
        contact_frac[li] += 1.0;
        any = true;
      }
    }
    if (!any) ++flight;
  }
  for (double& f : contact_frac) f /= static_cast<double>(n);
  m.flight_fraction = static_cast<double>(flight) / static_cast<double>(n);
  m.duty_factor = contact_frac;

  if (!trace.speed.empty()) {
    double dist = 0.0, energy = 0.0;
    for (double v : trace.speed) dist += std::abs(v);
    m.mean_speed = dist / static_cast<double>(n);
    dist /= trace.sample_rate;
    if (!trace.power.empty()) {
      for (double p : trace.power) energy += p;
      energy /= trace.sample_rate;
      if (dist >= 0.01) m.energy_per_meter = energy / dist;
    }
  }
  m.froude = froude(m.mean_speed, trace.hip_height.value_or(model.hip_height_nominal));

  if (std::all_of(contact_frac.begin(), contact_frac.end(),
                  [&](double f) { return f >= cfg.standing_duty; })) {
    m.label = GaitLabel::Standing;
    return m;
  }

  const auto period = estimate_period(c, cfg);
  if (!period) return m;
  m.cycle_period = period->samples / trace.sample_rate;
  m.periodicity = period->periodicity;

  // Duty over whole cycles: first to last touchdown of each leg.
  std::array<std::vector<std::size_t>, kNumLegs> td;
  for (int i = 0; i < kNumLegs; ++i) {
    const auto li = static_cast<std::size_t>(i);
    td[li] = touchdowns(c, i);
    if (td[li].size() >= 2) {
      std::size_t stance = 0;
      for (std::size_t t = td[li].front(); t < td[li].back(); ++t) stance += c[t][li] ? 1 : 0;
      m.duty_factor[li] = static_cast<double>(stance) / static_cast<double>(td[li].back() - td[li].front());
    }
  }

  // Touchdown phase of each leg relative to the latest RF touchdown.
  const auto& ref = td[0];
  bool phases_ok = !ref.empty();
  for (int i = 1; i < kNumLegs && phases_ok; ++i) {
    std::vector<double> offsets;
    for (std::size_t t : td[static_cast<std::size_t>(i)]) {
      const auto it = std::upper_bound(ref.begin(), ref.end(), t);
      if (it == ref.begin()) continue;
      offsets.push_back(wrap01(static_cast<double>(t - *(it - 1)) / period->samples));
    }
    if (offsets.empty()) {
      phases_ok = false;
      break;
    }
    m.relative_phase[static_cast<std::size_t>(i)] = circular_mean(offsets);
  }
  if (!phases_ok) return m;

  std::array<int, kNumLegs> order{0, 1, 2, 3};
  std::stable_sort(order.begin() + 1, order.end(), [&](int a, int b) {
    return m.relative_phase[static_cast<std::size_t>(a)] < m.relative_phase[static_cast<std::size_t>(b)];
  });
  m.touchdown_order = order;
  m.lateral_sequence = order == std::array<int, kNumLegs>{0, 3, 1, 2};

  const double cycles = static_cast<double>(n) / period->samples;
  if (m.periodicity < cfg.min_periodicity || cycles < cfg.min_cycles) return m;

  const auto& ph = m.relative_phase;
  double spread = 0.0;
  for (int a = 0; a < kNumLegs; ++a)
    for (int b = a + 1; b < kNumLegs; ++b)
      spread = std::max(spread, circ_dist(ph[static_cast<std::size_t>(a)], ph[static_cast<std::size_t>(b)]));
  if (spread < cfg.sync_tolerance && m.flight_fraction > cfg.bounce_min_flight) {
    m.label = GaitLabel::Bounce;
    return m;
  }
  // Diagonals: RF with LR, LF with RR.
  if (circ_dist(ph[0], ph[3]) < cfg.sync_tolerance && circ_dist(ph[1], ph[2]) < cfg.sync_tolerance &&
      std::abs(circ_dist(ph[0], ph[1]) - 0.5) <= cfg.pair_offset_tolerance) {
    m.label = GaitLabel::Trot;
    return m;
  }
  if (m.mean_duty() > cfg.walk_min_duty) {
    bool quarters = true;
    for (int k = 0; k < kNumLegs; ++k) {
      const double a = ph[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
      const double b = k + 1 < kNumLegs ? ph[static_cast<std::size_t>(order[static_cast<std::size_t>(k + 1)])] : 1.0;
      if (std::abs((b - a) - 0.25) > cfg.walk_gap_tolerance) quarters = false;
    }
    if (quarters) m.label = GaitLabel::Walk;
  }
  return m;
}

EnergyPerMeter energy_per_meter(const std::vector<double>& power,
                                const std::vector<double>& power_positive, double dt,
                                double distance) {
  if (!(dt > 0.0)) throw std::invalid_argument("energy per meter: dt must be > 0");
  if (!(distance >= 0.01))
    throw std::invalid_argument("energy per meter: displacement below 0.01 m");
  if (!power_positive.empty() && power_positive.size() != power.size())
    throw std::invalid_argument("energy per meter: power series length mismatch");
  EnergyPerMeter e;
  for (std::size_t k = 0; k < power.size(); ++k) {
    e.raw += power[k] * dt;
    e.positive += (power_positive.empty() ? std::max(power[k], 0.0) : power_positive[k]) * dt;
  }
  e.raw /= distance;
  e.positive /= distance;
  return e;
}

double TrajectorySeries::dt() const {
  if (t.size() < 2) return 0.01;
  return (t.back() - t.front()) / static_cast<double>(t.size() - 1);
}

double TrajectorySeries::distance() const {
  if (x.size() < 2) return 0.0;
  return std::hypot(x.back() - x.front(), y.back() - y.front());
}

ContactTrace TrajectorySeries::trace() const {
  ContactTrace tr;
  tr.sample_rate = 1.0 / dt();
  tr.contacts = contacts;
  tr.speed = vx;
  tr.power = power;
  return tr;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, std::size_t line, const std::string& column) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("trajectory csv line " + std::to_string(line) + ": column '" +
                                column + "' is not a number: '" + s + "'");
  }
}

}  // namespace

TrajectorySeries read_trajectory_csv(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.find_first_not_of(" \r\t") != std::string::npos) break;
  }
  if (line.empty()) throw std::invalid_argument("trajectory csv: missing header");
  const auto header = split_csv(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t k = 0; k < header.size(); ++k) col[header[k]] = k;
  auto find = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto it = col.find(name);
    if (it == col.end()) return std::nullopt;
    return it->second;
  };
  std::array<std::size_t, kNumLegs> cidx{};
  for (int i = 0; i < kNumLegs; ++i) {
    const std::string name(kLegNames[static_cast<std::size_t>(i)]);
    auto k = find("c_" + name);
    if (!k) k = find(name);
    if (!k) throw std::invalid_argument("trajectory csv: missing contact column c_" + name);
    cidx[static_cast<std::size_t>(i)] = *k;
  }
  const auto it = find("t"), ix = find("x"), iy = find("y"), iz = find("z"), ivx = find("vx"),
             ip = find("power"), ipp = find("power_positive"), iv = find("v_target");

  TrajectorySeries s;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw std::invalid_argument("trajectory csv line " + std::to_string(lineno) + ": expected " +
                                  std::to_string(header.size()) + " columns, found " +
                                  std::to_string(cells.size()));
    auto num = [&](std::size_t k) { return parse_number(cells[k], lineno, header[k]); };
    ContactFlags f{};
    for (int i = 0; i < kNumLegs; ++i) {
      const double v = num(cidx[static_cast<std::size_t>(i)]);
      if (v != 0.0 && v != 1.0)
        throw std::invalid_argument("trajectory csv line " + std::to_string(lineno) +
                                    ": contact flags must be 0 or 1");
      f[static_cast<std::size_t>(i)] = v == 1.0;
    }
    s.contacts.push_back(f);
    if (it) s.t.push_back(num(*it));
    if (ix) s.x.push_back(num(*ix));
    if (iy) s.y.push_back(num(*iy));
    if (iz) s.z.push_back(num(*iz));
    if (ivx) s.vx.push_back(num(*ivx));
    if (ip) s.power.push_back(num(*ip));
    if (ipp) s.power_positive.push_back(num(*ipp));
    if (iv) s.v_target.push_back(num(*iv));
  }
  if (s.contacts.empty()) throw std::invalid_argument("trajectory csv: no data rows");
  if (s.x.size() != s.y.size()) throw std::invalid_argument("trajectory csv: x without y");
  return s;
}

EnergyPerMeter energy_per_meter(const TrajectorySeries& log) {
  if (log.power.empty()) throw std::invalid_argument("energy per meter: log has no power column");
  if (log.x.empty()) throw std::invalid_argument("energy per meter: log has no position columns");
  return energy_per_meter(log.power, log.power_positive, log.dt(), log.distance());
}

std::string format_metrics(const GaitMetrics& m) {
  std::ostringstream os;
  char buf[96];
  auto kv = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%s: %.6g\n", key, v);
    os << buf;
  };
  os << "gait: " << to_string(m.label) << '\n';
  kv("cycle_period_s", m.cycle_period);
  kv("periodicity", m.periodicity);
  for (int i = 0; i < kNumLegs; ++i) {
    std::snprintf(buf, sizeof buf, "duty_%s: %.6g\n", std::string(kLegNames[static_cast<std::size_t>(i)]).c_str(),
                  m.duty_factor[static_cast<std::size_t>(i)]);
    os << buf;
  }
  for (int i = 0; i < kNumLegs; ++i) {
    std::snprintf(buf, sizeof buf, "phase_%s: %.6g\n", std::string(kLegNames[static_cast<std::size_t>(i)]).c_str(),
                  m.relative_phase[static_cast<std::size_t>(i)]);
    os << buf;
  }
  os << "touchdown_order:";
  for (int i : m.touchdown_order) os << ' ' << kLegNames[static_cast<std::size_t>(i)];
  os << "\nlateral_sequence: " << (m.lateral_sequence ? "true" : "false") << '\n';
  kv("flight_fraction", m.flight_fraction);
  kv("mean_speed_mps", m.mean_speed);
  kv("froude", m.froude);
  kv("energy_per_meter_J", m.energy_per_meter);
  return os.str();
}

}  // namespace gaitlab::analysis
