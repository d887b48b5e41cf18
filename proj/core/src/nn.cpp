#include "archrecon/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "archrecon/errors.hpp"

namespace archrecon::nn {

void Param::resize(int rows, int cols) {
  value = Mat::Zero(rows, cols);
  grad = Mat::Zero(rows, cols);
  velocity = Mat::Zero(rows, cols);
}

void zero_grad(const ParamList& params) {
  for (auto* p : params) p->grad.setZero();
}

void scale_grad(const ParamList& params, float factor) {
  for (auto* p : params) p->grad *= factor;
}

double grad_norm(const ParamList& params) {
  double sq = 0.0;
  for (auto* p : params) sq += p->grad.cast<double>().squaredNorm();
  return std::sqrt(sq);
}

std::size_t parameter_count(const ParamList& params) {
  std::size_t n = 0;
  for (auto* p : params) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void he_init(Param& p, int fan_in, Rng& rng) {
  std::normal_distribution<float> normal(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = normal(rng);
}

// ---- Conv1d -----------------------------------------------------------------

Conv1d::Conv1d(std::string name, int c_in, int c_out, int kernel) : c_in_(c_in), c_out_(c_out), k_(kernel) {
  if (kernel % 2 == 0) throw Error("conv1d kernel must be odd");
  weight_.name = name + ".w";
  bias_.name = name + ".b";
  weight_.resize(c_out, kernel * c_in);
  bias_.resize(c_out, 1);
}

void Conv1d::init(Rng& rng) {
  he_init(weight_, k_ * c_in_, rng);
  bias_.value.setZero();
}

Mat Conv1d::forward(const Mat& x, Cache* cache) const {
  const auto len = x.cols();
  const int pad = k_ / 2;
  Mat cols = Mat::Zero(static_cast<Eigen::Index>(k_) * c_in_, len);
  for (int j = 0; j < k_; ++j) {
    const int shift = j - pad;  // cols(:, t) tap j reads x(:, t + shift)
    const Eigen::Index t0 = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index t1 = std::min<Eigen::Index>(len, len - shift);
    if (t1 > t0) cols.block(j * c_in_, t0, c_in_, t1 - t0) = x.middleCols(t0 + shift, t1 - t0);
  }
  Mat y(c_out_, len);
  y.noalias() = weight_.value * cols;
  y.colwise() += bias_.value.col(0);
  if (cache) cache->cols = std::move(cols);
  return y;
}

Mat Conv1d::backward(const Mat& dy, const Cache& cache) {
  const auto len = dy.cols();
  const int pad = k_ / 2;
  weight_.grad.noalias() += dy * cache.cols.transpose();
  bias_.grad.col(0) += dy.rowwise().sum();
  Mat dcols(static_cast<Eigen::Index>(k_) * c_in_, len);
  dcols.noalias() = weight_.value.transpose() * dy;
  Mat dx = Mat::Zero(c_in_, len);
  for (int j = 0; j < k_; ++j) {
    const int shift = j - pad;
    const Eigen::Index t0 = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index t1 = std::min<Eigen::Index>(len, len - shift);
    if (t1 > t0) dx.middleCols(t0 + shift, t1 - t0) += dcols.block(j * c_in_, t0, c_in_, t1 - t0);
  }
  return dx;
}

void Conv1d::collect(ParamList& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---- elementwise / pooling ---------------------------------------------------

Mat relu(const Mat& x) { return x.cwiseMax(0.0f); }

Mat relu_backward(const Mat& dy, const Mat& y) { return (y.array() > 0.0f).select(dy, 0.0f); }

Mat max_pool2(const Mat& x, MaxPoolCache* cache) {
  if (x.cols() % 2 != 0) throw Error("max_pool2 needs an even length");
  const auto out_len = x.cols() / 2;
  Mat y(x.rows(), out_len);
  if (cache) {
    cache->pick.resize(static_cast<std::size_t>(y.size()));
    cache->in_length = static_cast<int>(x.cols());
  }
  for (Eigen::Index t = 0; t < out_len; ++t) {
    for (Eigen::Index c = 0; c < x.rows(); ++c) {
      const float a = x(c, 2 * t);
      const float b = x(c, 2 * t + 1);
      const bool second = b > a;
      y(c, t) = second ? b : a;
      if (cache) cache->pick[static_cast<std::size_t>(t * x.rows() + c)] = second ? 1 : 0;
    }
  }
  return y;
}

Mat max_pool2_backward(const Mat& dy, const MaxPoolCache& cache) {
  Mat dx = Mat::Zero(dy.rows(), cache.in_length);
  for (Eigen::Index t = 0; t < dy.cols(); ++t) {
    for (Eigen::Index c = 0; c < dy.rows(); ++c) {
      dx(c, 2 * t + cache.pick[static_cast<std::size_t>(t * dy.rows() + c)]) = dy(c, t);
    }
  }
  return dx;
}

namespace {

struct Tap {
  Eigen::Index lo, hi;
  float frac;
};

std::vector<Tap> interpolation_taps(Eigen::Index in_len, Eigen::Index out_len) {
  std::vector<Tap> taps(static_cast<std::size_t>(out_len));
  const double scale = static_cast<double>(in_len) / static_cast<double>(out_len);
  for (Eigen::Index j = 0; j < out_len; ++j) {
    const double src = std::max(0.0, (static_cast<double>(j) + 0.5) * scale - 0.5);
    const auto lo = std::min<Eigen::Index>(static_cast<Eigen::Index>(src), in_len - 1);
    const auto hi = std::min<Eigen::Index>(lo + 1, in_len - 1);
    taps[static_cast<std::size_t>(j)] = {lo, hi, static_cast<float>(src - static_cast<double>(lo))};
  }
  return taps;
}

}  // namespace

Mat upsample_linear(const Mat& x, int length) {
  if (x.cols() == length) return x;
  const auto taps = interpolation_taps(x.cols(), length);
  Mat y(x.rows(), length);
  for (int j = 0; j < length; ++j) {
    const auto& t = taps[static_cast<std::size_t>(j)];
    y.col(j) = (1.0f - t.frac) * x.col(t.lo) + t.frac * x.col(t.hi);
  }
  return y;
}

Mat upsample_linear_backward(const Mat& dy, int in_length) {
  if (dy.cols() == in_length) return dy;
  const auto taps = interpolation_taps(in_length, dy.cols());
  Mat dx = Mat::Zero(dy.rows(), in_length);
  for (Eigen::Index j = 0; j < dy.cols(); ++j) {
    const auto& t = taps[static_cast<std::size_t>(j)];
    dx.col(t.lo) += (1.0f - t.frac) * dy.col(j);
    dx.col(t.hi) += t.frac * dy.col(j);
  }
  return dx;
}

Vec adaptive_avg_pool(const Mat& x, int bins) {
  if (bins < 1 || x.cols() % bins != 0) throw Error("adaptive_avg_pool: length not divisible by bins");
  const auto width = x.cols() / bins;
  Vec out(x.rows() * bins);
  for (Eigen::Index c = 0; c < x.rows(); ++c) {
    for (int b = 0; b < bins; ++b) out(c * bins + b) = x.row(c).segment(b * width, width).mean();
  }
  return out;
}

Mat adaptive_avg_pool_backward(const Vec& dy, int channels, int length, int bins) {
  const int width = length / bins;
  Mat dx(channels, length);
  for (int c = 0; c < channels; ++c) {
    for (int b = 0; b < bins; ++b) {
      dx.row(c).segment(b * width, width).setConstant(dy(c * bins + b) / static_cast<float>(width));
    }
  }
  return dx;
}

// ---- ResBlock ----------------------------------------------------------------

ResBlock::ResBlock(const std::string& name, int c_in, int c_out, int kernel)
    : conv1_(name + ".conv1", c_in, c_out, kernel),
      conv2_(name + ".conv2", c_out, c_out, kernel),
      has_proj_(c_in != c_out) {
  if (has_proj_) proj_ = Conv1d(name + ".proj", c_in, c_out, 1);
}

void ResBlock::init(Rng& rng) {
  conv1_.init(rng);
  conv2_.init(rng);
  if (has_proj_) proj_.init(rng);
}

Mat ResBlock::forward(const Mat& x, Cache* cache) const {
  Mat h1 = relu(conv1_.forward(x, cache ? &cache->c1 : nullptr));
  Mat sum = conv2_.forward(h1, cache ? &cache->c2 : nullptr);
  if (has_proj_) {
    sum += proj_.forward(x, cache ? &cache->proj : nullptr);
  } else {
    sum += x;
  }
  Mat out = relu(sum);
  if (cache) {
    cache->h1 = std::move(h1);
    cache->out = out;
  }
  return out;
}

Mat ResBlock::backward(const Mat& dy, const Cache& cache) {
  const Mat dsum = relu_backward(dy, cache.out);
  const Mat dh1 = relu_backward(conv2_.backward(dsum, cache.c2), cache.h1);
  Mat dx = conv1_.backward(dh1, cache.c1);
  if (has_proj_) {
    dx += proj_.backward(dsum, cache.proj);
  } else {
    dx += dsum;
  }
  return dx;
}

void ResBlock::collect(ParamList& out) {
  conv1_.collect(out);
  conv2_.collect(out);
  if (has_proj_) proj_.collect(out);
}

// ---- Dense -------------------------------------------------------------------

Dense::Dense(std::string name, int f_in, int f_out) {
  weight_.name = name + ".w";
  bias_.name = name + ".b";
  weight_.resize(f_out, f_in);
  bias_.resize(f_out, 1);
}

void Dense::init(Rng& rng) {
  std::normal_distribution<float> normal(0.0f, std::sqrt(1.0f / static_cast<float>(weight_.value.cols())));
  for (Eigen::Index i = 0; i < weight_.value.size(); ++i) weight_.value.data()[i] = normal(rng);
  bias_.value.setZero();
}

Vec Dense::forward(const Vec& x) const { return weight_.value * x + bias_.value.col(0); }

Vec Dense::backward(const Vec& dy, const Vec& x) {
  weight_.grad.noalias() += dy * x.transpose();
  bias_.grad.col(0) += dy;
  return weight_.value.transpose() * dy;
}

void Dense::collect(ParamList& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---- softmax / optimiser -----------------------------------------------------

Mat softmax_columns(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.cols(); ++t) {
    const float m = logits.col(t).maxCoeff();
    const Eigen::ArrayXf e = (logits.col(t).array() - m).exp();
    out.col(t) = (e / e.sum()).matrix();
  }
  return out;
}

void sgd_step(const ParamList& params, const SgdConfig& cfg, double lr) {
  float clip = 1.0f;
  if (cfg.clip_norm > 0.0) {
    const double norm = grad_norm(params);
    if (norm > cfg.clip_norm) clip = static_cast<float>(cfg.clip_norm / norm);
  }
  const auto mu = static_cast<float>(cfg.momentum);
  const auto wd = static_cast<float>(cfg.weight_decay);
  const auto step = static_cast<float>(lr);
  for (auto* p : params) {
    if (wd != 0.0f) {
      p->velocity = mu * p->velocity + clip * p->grad + wd * p->value;
    } else {
      p->velocity = mu * p->velocity + clip * p->grad;
    }
    p->value -= step * p->velocity;
  }
}

double cosine_lr(double base_lr, int epoch, int total_epochs) {
  if (total_epochs <= 0) return base_lr;
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * epoch / total_epochs));
}

}  // namespace archrecon::nn
