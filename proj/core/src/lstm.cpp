#include "archrecon/lstm.hpp"

#include <cmath>

namespace archrecon::nn {

namespace {

float sigmoid(float v) { return 1.0f / (1.0f + std::exp(-v)); }

}  // namespace

Lstm::Lstm(const std::string& name, int input_size, int hidden_size, bool reverse)
    : input_(input_size), hidden_(hidden_size), reverse_(reverse) {
  wx_.name = name + ".wx";
  wh_.name = name + ".wh";
  b_.name = name + ".b";
  wx_.resize(4 * hidden_size, input_size);
  wh_.resize(4 * hidden_size, hidden_size);
  b_.resize(4 * hidden_size, 1);
}

void Lstm::init(Rng& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(hidden_));
  std::uniform_real_distribution<float> uni(-bound, bound);
  for (Eigen::Index i = 0; i < wx_.value.size(); ++i) wx_.value.data()[i] = uni(rng);
  for (Eigen::Index i = 0; i < wh_.value.size(); ++i) wh_.value.data()[i] = uni(rng);
  b_.value.setZero();
  b_.value.block(hidden_, 0, hidden_, 1).setOnes();  // forget gate
}

Mat Lstm::forward(const Mat& x, Cache* cache) const {
  const int H = hidden_;
  const auto T = x.cols();
  Mat pre(4 * H, T);
  pre.noalias() = wx_.value * x;
  pre.colwise() += b_.value.col(0);

  Mat gates(4 * H, T), c(H, T), h(H, T);
  Vec h_prev = Vec::Zero(H), c_prev = Vec::Zero(H);
  for (Eigen::Index step = 0; step < T; ++step) {
    const Eigen::Index t = reverse_ ? T - 1 - step : step;
    Vec g = pre.col(t);
    g.noalias() += wh_.value * h_prev;
    for (int r = 0; r < H; ++r) {
      g(r) = sigmoid(g(r));
      g(H + r) = sigmoid(g(H + r));
      g(2 * H + r) = std::tanh(g(2 * H + r));
      g(3 * H + r) = sigmoid(g(3 * H + r));
    }
    c_prev = g.segment(H, H).cwiseProduct(c_prev) + g.segment(0, H).cwiseProduct(g.segment(2 * H, H));
    h_prev = g.segment(3 * H, H).cwiseProduct(c_prev.array().tanh().matrix());
    gates.col(t) = g;
    c.col(t) = c_prev;
    h.col(t) = h_prev;
  }
  if (cache) {
    cache->x = x;
    cache->gates = std::move(gates);
    cache->c = std::move(c);
    cache->h = h;
  }
  return h;
}

Mat Lstm::backward(const Mat& dh_out, const Cache& cache) {
  const int H = hidden_;
  const auto T = dh_out.cols();
  Mat dpre(4 * H, T);
  Vec dh_next = Vec::Zero(H), dc_next = Vec::Zero(H);
  for (Eigen::Index step = 0; step < T; ++step) {
    const Eigen::Index t = reverse_ ? step : T - 1 - step;
    const Eigen::Index prev = reverse_ ? t + 1 : t - 1;
    const bool has_prev = prev >= 0 && prev < T;
    const auto g = cache.gates.col(t);
    const Eigen::ArrayXf i = g.segment(0, H).array();
    const Eigen::ArrayXf f = g.segment(H, H).array();
    const Eigen::ArrayXf gg = g.segment(2 * H, H).array();
    const Eigen::ArrayXf o = g.segment(3 * H, H).array();
    const Eigen::ArrayXf tc = cache.c.col(t).array().tanh();
    const Eigen::ArrayXf c_prev = has_prev ? Eigen::ArrayXf(cache.c.col(prev).array()) : Eigen::ArrayXf::Zero(H);

    const Eigen::ArrayXf dh = dh_out.col(t).array() + dh_next.array();
    const Eigen::ArrayXf dc = dc_next.array() + dh * o * (1.0f - tc * tc);
    dpre.col(t).segment(0, H) = (dc * gg * i * (1.0f - i)).matrix();
    dpre.col(t).segment(H, H) = (dc * c_prev * f * (1.0f - f)).matrix();
    dpre.col(t).segment(2 * H, H) = (dc * i * (1.0f - gg * gg)).matrix();
    dpre.col(t).segment(3 * H, H) = (dh * tc * o * (1.0f - o)).matrix();

    dc_next = (dc * f).matrix();
    dh_next.noalias() = wh_.value.transpose() * dpre.col(t);
    if (has_prev) wh_.grad.noalias() += dpre.col(t) * cache.h.col(prev).transpose();
  }
  wx_.grad.noalias() += dpre * cache.x.transpose();
  b_.grad.col(0) += dpre.rowwise().sum();
  return wx_.value.transpose() * dpre;
}

void Lstm::collect(ParamList& out) {
  out.push_back(&wx_);
  out.push_back(&wh_);
  out.push_back(&b_);
}

BiLstm::BiLstm(const std::string& name, int input_size, int hidden_size)
    : fwd_(name + ".fwd", input_size, hidden_size, false), bwd_(name + ".bwd", input_size, hidden_size, true) {}

void BiLstm::init(Rng& rng) {
  fwd_.init(rng);
  bwd_.init(rng);
}

Mat BiLstm::forward(const Mat& x, Cache* cache) const {
  const int H = fwd_.hidden_size();
  Mat y(2 * H, x.cols());
  y.topRows(H) = fwd_.forward(x, cache ? &cache->fwd : nullptr);
  y.bottomRows(H) = bwd_.forward(x, cache ? &cache->bwd : nullptr);
  return y;
}

Mat BiLstm::backward(const Mat& dy, const Cache& cache) {
  const int H = fwd_.hidden_size();
  Mat dx = fwd_.backward(dy.topRows(H), cache.fwd);
  dx += bwd_.backward(dy.bottomRows(H), cache.bwd);
  return dx;
}

void BiLstm::collect(ParamList& out) {
  fwd_.collect(out);
  bwd_.collect(out);
}

}  // namespace archrecon::nn
