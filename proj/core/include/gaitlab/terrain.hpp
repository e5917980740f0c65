#pragma once

#include "gaitlab/common.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace gaitlab::terrain {

/// Multi-octave value-noise parameters. `base_frequency` is in cycles per
/// metre; `amplitude` bounds |height| (0 gives a flat field).
struct FractalParams {
  int octaves = 2;
  double lacunarity = 2.0;
  double gain = 0.25;
  double base_frequency = 10.0;
  double amplitude = 0.23;

  void validate() const;

  static FractalParams flat();
  /// Structured-gait terrain: 2 octaves, lacunarity 2, gain 0.25, 10 /m, 0.23 m.
  static FractalParams structured();
  /// Unstructured-gait terrain: 2 octaves, lacunarity 2, gain 0.25, 20 /m, 0.27 m.
  static FractalParams unstructured();
};

/// Immutable heightfield sampled on a regular grid. Queries outside the grid
/// clamp to the nearest edge.
class TerrainField {
 public:
  TerrainField() = default;
  TerrainField(int nx, int ny, double cell_size, Vec2 origin, std::uint64_t seed,
               FractalParams params, std::vector<double> heights);

  /// Bilinear interpolation of the grid.
  double height_at(double x, double y) const;
  double node(int ix, int iy) const { return heights_[static_cast<std::size_t>(iy) * nx_ + ix]; }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double cell_size() const { return cell_size_; }
  const Vec2& origin() const { return origin_; }
  std::uint64_t seed() const { return seed_; }
  const FractalParams& params() const { return params_; }
  const std::vector<double>& heights() const { return heights_; }

  double min_height() const;
  double max_height() const;

  /// Lipschitz constant implied by the generator parameters (per metre).
  double lipschitz_bound() const;

  void write_csv(std::ostream& os) const;
  static TerrainField read_csv(std::istream& is);

 private:
  int nx_ = 1;
  int ny_ = 1;
  double cell_size_ = 1.0;
  Vec2 origin_ = Vec2::Zero();
  std::uint64_t seed_ = 0;
  FractalParams params_ = FractalParams::flat();
  std::vector<double> heights_{0.0};
};

/// Fractal field covering [origin, origin + extent]. Deterministic in seed on
/// every platform (integer lattice hashing).
TerrainField generate(const FractalParams& params, Vec2 extent, double cell_size,
                      std::uint64_t seed, Vec2 origin = Vec2::Zero());

TerrainField flat_field();

/// Continuous noise value at (x, y) before gridding; exposed for tests.
double fractal_noise(const FractalParams& params, std::uint64_t seed, double x, double y);

/// Named presets: "flat", "structured", "unstructured", "desk".
FractalParams preset(const std::string& name);

}  // namespace gaitlab::terrain
