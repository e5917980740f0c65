#include "gaitlab/terrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace gaitlab::terrain {

void FractalParams::validate() const {
  if (octaves < 1) throw std::invalid_argument("terrain: octaves must be >= 1");
  if (!(lacunarity > 1.0)) throw std::invalid_argument("terrain: lacunarity must be > 1");
  if (!(gain > 0.0 && gain < 1.0)) throw std::invalid_argument("terrain: gain must be in (0, 1)");
  if (!(base_frequency > 0.0)) throw std::invalid_argument("terrain: base_frequency must be > 0");
  if (!(amplitude >= 0.0)) throw std::invalid_argument("terrain: amplitude must be >= 0");
}

FractalParams FractalParams::flat() { return {2, 2.0, 0.25, 10.0, 0.0}; }
FractalParams FractalParams::structured() { return {2, 2.0, 0.25, 10.0, 0.23}; }
FractalParams FractalParams::unstructured() { return {2, 2.0, 0.25, 20.0, 0.27}; }

FractalParams preset(const std::string& name) {
  if (name == "flat") return FractalParams::flat();
  if (name == "structured") return FractalParams::structured();
  if (name == "unstructured") return FractalParams::unstructured();
  // Gentle undulation the desk-scale simulator can traverse.
  if (name == "desk") return {2, 2.0, 0.25, 1.0, 0.02};
  if (name == "desk-rough") return {2, 2.0, 0.25, 2.0, 0.04};
  throw std::invalid_argument("terrain: unknown preset '" + name + "'");
}

namespace {

std::uint64_t hash3(std::int64_t ix, std::int64_t iy, std::uint64_t salt) {
  std::uint64_t h = salt ^ 0x9E3779B97F4A7C15ull;
  auto mix = [&h](std::uint64_t v) {
    h ^= v + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    h = (h ^ (h >> 30)) * 0xBF58476D1CE4E5B9ull;
    h = (h ^ (h >> 27)) * 0x94D049BB133111EBull;
    h ^= h >> 31;
  };
  mix(static_cast<std::uint64_t>(ix));
  mix(static_cast<std::uint64_t>(iy));
  return h;
}

// Lattice value in [-1, 1].
double lattice(std::int64_t ix, std::int64_t iy, std::uint64_t salt) {
  return static_cast<double>(hash3(ix, iy, salt) >> 11) * 0x1.0p-52 - 1.0;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(double x, double y, std::uint64_t salt) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const double sx = smoothstep(x - fx);
  const double sy = smoothstep(y - fy);
  const double v00 = lattice(ix, iy, salt);
  const double v10 = lattice(ix + 1, iy, salt);
  const double v01 = lattice(ix, iy + 1, salt);
  const double v11 = lattice(ix + 1, iy + 1, salt);
  const double a = v00 + sx * (v10 - v00);
  const double b = v01 + sx * (v11 - v01);
  return a + sy * (b - a);
}

double weight_sum(const FractalParams& p) {
  double s = 0.0, w = 1.0;
  for (int k = 0; k < p.octaves; ++k, w *= p.gain) s += w;
  return s;
}

}  // namespace

double fractal_noise(const FractalParams& p, std::uint64_t seed, double x, double y) {
  if (p.amplitude == 0.0) return 0.0;
  double sum = 0.0, w = 1.0, f = p.base_frequency;
  for (int k = 0; k < p.octaves; ++k) {
    sum += w * value_noise(x * f, y * f, mix_seed(seed, static_cast<std::uint64_t>(k)));
    w *= p.gain;
    f *= p.lacunarity;
  }
  return p.amplitude * sum / weight_sum(p);
}

TerrainField::TerrainField(int nx, int ny, double cell_size, Vec2 origin, std::uint64_t seed,
                           FractalParams params, std::vector<double> heights)
    : nx_(nx), ny_(ny), cell_size_(cell_size), origin_(origin), seed_(seed), params_(params),
      heights_(std::move(heights)) {
  if (nx_ < 1 || ny_ < 1) throw std::invalid_argument("terrain: grid must have >= 1 node per axis");
  if (!(cell_size_ > 0.0)) throw std::invalid_argument("terrain: cell_size must be > 0");
  if (heights_.size() != static_cast<std::size_t>(nx_) * ny_)
    throw std::invalid_argument("terrain: height count does not match grid shape");
  for (double h : heights_)
    if (!std::isfinite(h)) throw std::invalid_argument("terrain: non-finite height");
}

double TerrainField::height_at(double x, double y) const {
  const double gx = std::clamp((x - origin_.x()) / cell_size_, 0.0, static_cast<double>(nx_ - 1));
  const double gy = std::clamp((y - origin_.y()) / cell_size_, 0.0, static_cast<double>(ny_ - 1));
  const int ix = std::min(static_cast<int>(gx), std::max(nx_ - 2, 0));
  const int iy = std::min(static_cast<int>(gy), std::max(ny_ - 2, 0));
  const int ix1 = std::min(ix + 1, nx_ - 1);
  const int iy1 = std::min(iy + 1, ny_ - 1);
  const double tx = gx - ix;
  const double ty = gy - iy;
  const double a = node(ix, iy) + tx * (node(ix1, iy) - node(ix, iy));
  const double b = node(ix, iy1) + tx * (node(ix1, iy1) - node(ix, iy1));
  return a + ty * (b - a);
}

double TerrainField::min_height() const { return *std::min_element(heights_.begin(), heights_.end()); }
double TerrainField::max_height() const { return *std::max_element(heights_.begin(), heights_.end()); }

double TerrainField::lipschitz_bound() const {
  const auto& p = params_;
  if (p.amplitude == 0.0) return 0.0;
  // |d smoothstep/dt| <= 1.5 and lattice differences <= 2 give 3*f per axis per octave.
  double sum = 0.0, w = 1.0, f = p.base_frequency;
  for (int k = 0; k < p.octaves; ++k) {
    sum += w * 3.0 * f;
    w *= p.gain;
    f *= p.lacunarity;
  }
  return std::sqrt(2.0) * p.amplitude * sum / weight_sum(p);
}

void TerrainField::write_csv(std::ostream& os) const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "# cell_size=%.17g,origin_x=%.17g,origin_y=%.17g,seed=%llu,octaves=%d,"
                "lacunarity=%.17g,gain=%.17g,base_frequency=%.17g,amplitude=%.17g,nx=%d,ny=%d\n",
                cell_size_, origin_.x(), origin_.y(), static_cast<unsigned long long>(seed_),
                params_.octaves, params_.lacunarity, params_.gain, params_.base_frequency,
                params_.amplitude, nx_, ny_);
  os << buf;
  for (int iy = 0; iy < ny_; ++iy) {
    for (int ix = 0; ix < nx_; ++ix) {
      std::snprintf(buf, sizeof buf, "%.17g", node(ix, iy));
      if (ix) os << ',';
      os << buf;
    }
    os << '\n';
  }
}

TerrainField TerrainField::read_csv(std::istream& is) {
  std::string header;
  if (!std::getline(is, header) || header.rfind("# ", 0) != 0)
    throw std::invalid_argument("terrain csv: missing '# ' header line");
  double cell = 0, ox = 0, oy = 0;
  unsigned long long seed = 0;
  FractalParams p;
  int nx = 0, ny = 0;
  const int n = std::sscanf(header.c_str(),
                            "# cell_size=%lf,origin_x=%lf,origin_y=%lf,seed=%llu,octaves=%d,"
                            "lacunarity=%lf,gain=%lf,base_frequency=%lf,amplitude=%lf,nx=%d,ny=%d",
                            &cell, &ox, &oy, &seed, &p.octaves, &p.lacunarity, &p.gain,
                            &p.base_frequency, &p.amplitude, &nx, &ny);
  if (n != 11) throw std::invalid_argument("terrain csv: malformed header");
  if (nx < 1 || ny < 1) throw std::invalid_argument("terrain csv: bad grid shape");
  std::vector<double> h;
  h.reserve(static_cast<std::size_t>(nx) * ny);
  std::string line;
  for (int iy = 0; iy < ny; ++iy) {
    if (!std::getline(is, line)) throw std::invalid_argument("terrain csv: truncated grid");
    std::stringstream ss(line);
    std::string cellv;
    int count = 0;
    while (std::getline(ss, cellv, ',')) {
      h.push_back(std::stod(cellv));
      ++count;
    }
    if (count != nx) throw std::invalid_argument("terrain csv: row width mismatch");
  }
  return TerrainField(nx, ny, cell, {ox, oy}, seed, p, std::move(h));
}

TerrainField generate(const FractalParams& params, Vec2 extent, double cell_size,
                      std::uint64_t seed, Vec2 origin) {
  params.validate();
  if (!(cell_size > 0.0)) throw std::invalid_argument("terrain: cell_size must be > 0");
  if (!(extent.x() > 0.0 && extent.y() > 0.0))
    throw std::invalid_argument("terrain: extent must be positive");
  const int nx = static_cast<int>(std::ceil(extent.x() / cell_size)) + 1;
  const int ny = static_cast<int>(std::ceil(extent.y() / cell_size)) + 1;
  std::vector<double> h(static_cast<std::size_t>(nx) * ny, 0.0);
  if (params.amplitude > 0.0) {
    for (int iy = 0; iy < ny; ++iy)
      for (int ix = 0; ix < nx; ++ix)
        h[static_cast<std::size_t>(iy) * nx + ix] =
            fractal_noise(params, seed, origin.x() + ix * cell_size, origin.y() + iy * cell_size);
  }
  return TerrainField(nx, ny, cell_size, origin, seed, params, std::move(h));
}

TerrainField flat_field() {
  return TerrainField(2, 2, 100.0, {-100.0, -100.0}, 0, FractalParams::flat(), {0, 0, 0, 0});
}

}  // namespace gaitlab::terrain
