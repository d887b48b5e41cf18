#pragma once

// Minimal 1-D network layers with explicit forward caches and hand-written
// backward passes. Feature maps are channels x time, one sample at a time;
// batches are formed by accumulating gradients.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace archrecon::nn {

using Mat = Eigen::MatrixXf;
using Vec = Eigen::VectorXf;
using Rng = std::mt19937_64;

struct Param {
  std::string name;
  Mat value;
  Mat grad;
  Mat velocity;

  void resize(int rows, int cols);
};

using ParamList = std::vector<Param*>;

void zero_grad(const ParamList& params);
void scale_grad(const ParamList& params, float factor);
// Global L2 norm of all gradients.
double grad_norm(const ParamList& params);
std::size_t parameter_count(const ParamList& params);

// He-normal weights for a layer with the given fan-in.
void he_init(Param& p, int fan_in, Rng& rng);

class Conv1d {
 public:
  struct Cache {
    Mat cols;  // (c_in * k) x length
  };

  Conv1d() = default;
  Conv1d(std::string name, int c_in, int c_out, int kernel);

  void init(Rng& rng);
  // Same padding, stride 1.
  Mat forward(const Mat& x, Cache* cache) const;
  Mat backward(const Mat& dy, const Cache& cache);
  void collect(ParamList& out);

  int in_channels() const { return c_in_; }
  int out_channels() const { return c_out_; }

 private:
  int c_in_ = 0;
  int c_out_ = 0;
  int k_ = 1;
  Param weight_;  // c_out x (k * c_in), column block j holds tap j
  Param bias_;    // c_out x 1
};

// Elementwise max(0, x). The cache is the output itself.
Mat relu(const Mat& x);
Mat relu_backward(const Mat& dy, const Mat& y);

struct MaxPoolCache {
  std::vector<std::uint8_t> pick;  // 0 or 1 per output element
  int in_length = 0;
};

// Window 2, stride 2 along time. Length must be even.
Mat max_pool2(const Mat& x, MaxPoolCache* cache);
Mat max_pool2_backward(const Mat& dy, const MaxPoolCache& cache);

// Linear interpolation along time to `length` samples, half-pixel centres
// (the usual align_corners = false convention).
Mat upsample_linear(const Mat& x, int length);
Mat upsample_linear_backward(const Mat& dy, int in_length);

// Mean over `bins` contiguous time windows, concatenated channel-major into a
// vector of size channels * bins. Length must be divisible by bins.
Vec adaptive_avg_pool(const Mat& x, int bins);
Mat adaptive_avg_pool_backward(const Vec& dy, int channels, int length, int bins);

// Two same-padded convolutions with a ReLU between them, plus an identity or
// 1x1 projection shortcut, followed by a ReLU.
class ResBlock {
 public:
  struct Cache {
    Conv1d::Cache c1, c2, proj;
    Mat h1;   // after first ReLU
    Mat out;  // after final ReLU
  };

  ResBlock() = default;
  ResBlock(const std::string& name, int c_in, int c_out, int kernel = 3);

  void init(Rng& rng);
  Mat forward(const Mat& x, Cache* cache) const;
  Mat backward(const Mat& dy, const Cache& cache);
  void collect(ParamList& out);

  int out_channels() const { return conv2_.out_channels(); }

 private:
  Conv1d conv1_, conv2_, proj_;
  bool has_proj_ = false;
};

class Dense {
 public:
  Dense() = default;
  Dense(std::string name, int f_in, int f_out);

  void init(Rng& rng);
  Vec forward(const Vec& x) const;
  // `x` is the forward input.
  Vec backward(const Vec& dy, const Vec& x);
  void collect(ParamList& out);

 private:
  Param weight_;
  Param bias_;
};

// Column-wise softmax of a classes x time matrix.
Mat softmax_columns(const Mat& logits);

// SGD with classic momentum: v = mu * v + g; w -= lr * v.
struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double clip_norm = 0.0;  // 0 disables global-norm clipping
};

void sgd_step(const ParamList& params, const SgdConfig& cfg, double lr);

// Cosine annealing from base_lr to 0 over total_epochs.
double cosine_lr(double base_lr, int epoch, int total_epochs);

}  // namespace archrecon::nn
