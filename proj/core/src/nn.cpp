#include "gaitlab/nn.hpp"

#include <cmath>
#include <istream>
#include <ostream>

namespace gaitlab::nn {

Activation activation_from_string(const std::string& name) {
  if (name == "elu") return Activation::Elu;
  if (name == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

std::string to_string(Activation a) { return a == Activation::Elu ? "elu" : "tanh"; }

namespace {

Matrix activate(const Matrix& z, Activation act) {
  if (act == Activation::Tanh) return z.array().tanh().matrix();
  return z.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
}

// Derivative expressed through the pre-activation.
Matrix activation_grad(const Matrix& z, Activation act) {
  if (act == Activation::Tanh) return (1.0 - z.array().tanh().square()).matrix();
  return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
}

}  // namespace

Mlp::Mlp(std::vector<int> sizes, Activation act) : sizes_(std::move(sizes)), act_(act) {
  if (sizes_.size() < 2) throw std::invalid_argument("mlp: need at least input and output sizes");
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw std::invalid_argument("mlp: sizes must be > 0");
    offsets_.push_back(off);
    off += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  params_ = Vector::Zero(off);
}

void Mlp::init(Rng& rng, double output_gain) {
  const std::size_t layers = offsets_.size();
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = sizes_[l], out = sizes_[l + 1];
    const double gain = (l + 1 == layers) ? output_gain : std::sqrt(2.0);
    const double scale = gain / std::sqrt(static_cast<double>(in));
    const Eigen::Index n = static_cast<Eigen::Index>(in) * out;
    for (Eigen::Index k = 0; k < n; ++k) params_[offsets_[l] + k] = scale * rng.normal();
    params_.segment(offsets_[l] + n, out).setZero();
  }
}

Mlp::ConstMap Mlp::weight(std::size_t l) const {
  return ConstMap(params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]);
}

Eigen::Map<const Vector> Mlp::bias(std::size_t l) const {
  const Eigen::Index n = static_cast<Eigen::Index>(sizes_[l + 1]) * sizes_[l];
  return Eigen::Map<const Vector>(params_.data() + offsets_[l] + n, sizes_[l + 1]);
}

Matrix Mlp::forward(const Matrix& x) const {
  Cache unused;
  return forward(x, unused);
}

Matrix Mlp::forward(const Matrix& x, Cache& cache) const {
  if (x.rows() != input_dim())
    throw std::invalid_argument("mlp: input has " + std::to_string(x.rows()) + " rows, expected " +
                                std::to_string(input_dim()));
  const std::size_t layers = offsets_.size();
  cache.inputs.resize(layers);
  cache.pre.resize(layers - 1);
  Matrix h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    cache.inputs[l] = h;
    Matrix z = weight(l) * h;
    z.colwise() += bias(l);
    if (l + 1 == layers) return z;
    h = activate(z, act_);
    cache.pre[l] = std::move(z);
  }
  return h;
}

Matrix Mlp::backward(const Cache& cache, const Matrix& d_out, Eigen::Ref<Vector> grad) const {
  if (grad.size() != params_.size()) throw std::invalid_argument("mlp: gradient size mismatch");
  Matrix d = d_out;
  for (std::size_t l = offsets_.size(); l-- > 0;) {
    if (l + 1 < offsets_.size()) d = d.cwiseProduct(activation_grad(cache.pre[l], act_));
    const Eigen::Index n = static_cast<Eigen::Index>(sizes_[l + 1]) * sizes_[l];
    Eigen::Map<Matrix> gw(grad.data() + offsets_[l], sizes_[l + 1], sizes_[l]);
    gw.noalias() += d * cache.inputs[l].transpose();
    grad.segment(offsets_[l] + n, sizes_[l + 1]) += d.rowwise().sum();
    d = weight(l).transpose() * d;
  }
  return d;
}

Adam::Adam(Eigen::Index n, Config config)
    : config_(config), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {
  if (!(config_.lr > 0.0 && config_.eps > 0.0 && config_.beta1 >= 0.0 && config_.beta1 < 1.0 &&
        config_.beta2 >= 0.0 && config_.beta2 < 1.0))
    throw std::invalid_argument("adam: invalid hyperparameters");
}

void Adam::step(Eigen::Ref<Vector> params, const Vector& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw std::invalid_argument("adam: size mismatch");
  ++t_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  params.array() -=
      config_.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.eps);
}

void Adam::save(std::ostream& os) const {
  const auto n = static_cast<std::int64_t>(m_.size());
  os.write(reinterpret_cast<const char*>(&t_), sizeof t_);
  os.write(reinterpret_cast<const char*>(&n), sizeof n);
  os.write(reinterpret_cast<const char*>(m_.data()), static_cast<std::streamsize>(n * 8));
  os.write(reinterpret_cast<const char*>(v_.data()), static_cast<std::streamsize>(n * 8));
}

void Adam::load(std::istream& is) {
  std::int64_t n = 0;
  is.read(reinterpret_cast<char*>(&t_), sizeof t_);
  is.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!is || n != m_.size()) throw std::runtime_error("adam: state size mismatch");
  is.read(reinterpret_cast<char*>(m_.data()), static_cast<std::streamsize>(n * 8));
  is.read(reinterpret_cast<char*>(v_.data()), static_cast<std::streamsize>(n * 8));
  if (!is) throw std::runtime_error("adam: truncated state");
}

RunningNorm::RunningNorm(int dim, double clip)
    : mean_(Vector::Zero(dim)), var_(Vector::Ones(dim)), clip_(clip) {}

void RunningNorm::update(const Matrix& batch) {
  if (frozen || batch.cols() == 0) return;
  if (batch.rows() != dim()) throw std::invalid_argument("running norm: dimension mismatch");
  const double n = static_cast<double>(batch.cols());
  const Vector bm = batch.rowwise().mean();
  const Vector bv = (batch.colwise() - bm).rowwise().squaredNorm() / n;
  if (count_ == 0.0) {
    mean_ = bm;
    var_ = bv;
    count_ = n;
    return;
  }
  const double total = count_ + n;
  const Vector delta = bm - mean_;
  mean_ += delta * (n / total);
  var_ = (var_ * count_ + bv * n + delta.cwiseAbs2() * (count_ * n / total)) / total;
  count_ = total;
}

Vector RunningNorm::stddev() const { return (var_.array() + 1e-8).sqrt().matrix(); }

Matrix RunningNorm::normalize(const Matrix& x) const {
  const Vector inv = stddev().cwiseInverse();
  Matrix out = (x.colwise() - mean_).array().colwise() * inv.array();
  return out.cwiseMax(-clip_).cwiseMin(clip_);
}

Vector RunningNorm::normalize(const Vector& x) const {
  return ((x - mean_).array() / stddev().array()).cwiseMax(-clip_).cwiseMin(clip_).matrix();
}

void RunningNorm::set(const Vector& mean, const Vector& var, double count) {
  if (mean.size() != var.size()) throw std::invalid_argument("running norm: size mismatch");
  mean_ = mean;
  var_ = var;
  count_ = count;
}

}  // namespace gaitlab::nn
