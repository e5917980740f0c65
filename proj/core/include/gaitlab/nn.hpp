#pragma once

#include "gaitlab/common.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace gaitlab::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { Elu, Tanh };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

/// Fully connected network with a linear output layer. Parameters live in one
/// flat vector (per layer: weights column-major, then bias) so optimizers and
/// checkpoints can treat them uniformly. Samples are columns.
class Mlp {
 public:
  struct Cache {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> pre;     // pre-activation of each hidden layer
  };

  Mlp() = default;
  Mlp(std::vector<int> sizes, Activation act);

  /// He-style init for hidden layers; the output layer is scaled by `output_gain`.
  void init(Rng& rng, double output_gain = 1.0);

  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, Cache& cache) const;

  /// Accumulates dL/dparams into `grad` and returns dL/dx.
  Matrix backward(const Cache& cache, const Matrix& d_out, Eigen::Ref<Vector> grad) const;

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  const std::vector<int>& sizes() const { return sizes_; }
  Activation activation() const { return act_; }
  Eigen::Index num_params() const { return params_.size(); }
  Vector& params() { return params_; }
  const Vector& params() const { return params_; }

 private:
  using ConstMap = Eigen::Map<const Matrix>;
  ConstMap weight(std::size_t layer) const;
  Eigen::Map<const Vector> bias(std::size_t layer) const;

  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;
  Activation act_ = Activation::Elu;
  Vector params_;
};

/// Adam over a flat parameter vector.
class Adam {
 public:
  struct Config {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  Adam(Eigen::Index n, Config config);

  void step(Eigen::Ref<Vector> params, const Vector& grad);
  const Config& config() const { return config_; }
  long steps() const { return t_; }

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  Config config_{};
  Vector m_, v_;
  long t_ = 0;
};

/// Per-dimension running mean/variance (parallel Welford merge); normalizes and
/// clips to +-clip standard deviations.
class RunningNorm {
 public:
  RunningNorm() = default;
  explicit RunningNorm(int dim, double clip = 5.0);

  void update(const Matrix& batch);  // columns are samples
  Matrix normalize(const Matrix& x) const;
  Vector normalize(const Vector& x) const;

  int dim() const { return static_cast<int>(mean_.size()); }
  const Vector& mean() const { return mean_; }
  Vector stddev() const;
  double count() const { return count_; }

  void set(const Vector& mean, const Vector& var, double count);
  const Vector& var() const { return var_; }
  double clip() const { return clip_; }
  bool frozen = false;

 private:
  Vector mean_, var_;
  double count_ = 0.0;
  double clip_ = 5.0;
};

}  // namespace gaitlab::nn
