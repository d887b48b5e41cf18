#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls into the library code it checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "archrecon/archspec.hpp"

namespace oracle {

// Recursion over the three edit operations, memoised on (i, j).
template <typename T>
int edit_distance(const std::vector<T>& a, std::size_t i, const std::vector<T>& b, std::size_t j,
                  std::vector<int>& memo) {
  if (i == a.size()) return static_cast<int>(b.size() - j);
  if (j == b.size()) return static_cast<int>(a.size() - i);
  int& slot = memo[i * (b.size() + 1) + j];
  if (slot >= 0) return slot;
  if (a[i] == b[j]) {
    slot = edit_distance(a, i + 1, b, j + 1, memo);
  } else {
    slot = 1 + std::min({edit_distance(a, i + 1, b, j, memo), edit_distance(a, i, b, j + 1, memo),
                         edit_distance(a, i + 1, b, j + 1, memo)});
  }
  return slot;
}

template <typename T>
int edit_distance(const std::vector<T>& a, const std::vector<T>& b) {
  std::vector<int> memo((a.size() + 1) * (b.size() + 1), -1);
  return edit_distance(a, 0, b, 0, memo);
}

template <typename T>
double lda(const std::vector<T>& pred, const std::vector<T>& truth) {
  const auto n = std::max(pred.size(), truth.size());
  if (n == 0) return 1.0;
  return 1.0 - static_cast<double>(edit_distance(pred, truth)) / static_cast<double>(n);
}

// probs[s][c], labels[s].
using Probs = std::vector<std::vector<double>>;

// Cross-entropy summed over samples: -sum_s sum_c y_sc log p_sc with one-hot y.
inline double ce(const Probs& p, const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t s = 0; s < p.size(); ++s) {
    for (std::size_t c = 0; c < p[s].size(); ++c) {
      const double y = static_cast<int>(c) == labels[s] ? 1.0 : 0.0;
      total -= y * std::log(p[s][c]);
    }
  }
  return total;
}

// -log prod_m P_iso(z_m), P_iso the in-span mean of the true-class probability.
inline double up(const Probs& p, const std::vector<std::array<int, 2>>& z, const std::vector<int>& labels) {
  double prod = 1.0;
  for (const auto& span : z) {
    const int y = labels[static_cast<std::size_t>(span[0])];
    double sum = 0.0;
    for (int s = span[0]; s <= span[1]; ++s) sum += p[static_cast<std::size_t>(s)][static_cast<std::size_t>(y)];
    prod *= sum / static_cast<double>(span[1] - span[0] + 1);
  }
  return -std::log(prod);
}

// floor((h + 2p - d(k-1) - 1) / s) + 1 with floor division.
inline int out_size(int h, int k, int s, int p, int d = 1) {
  const int num = h + 2 * p - d * (k - 1) - 1;
  const int q = num >= 0 ? num / s : -((-num + s - 1) / s);
  return q + 1;
}

// One row of a canonical layer table: everything typed in by hand.
struct ConvRow {
  int c_in, c_out, k, s, p, h_in, h_out;
};

struct PoolRow {
  int k, s, p, h_in, h_out;
};

struct NetTable {
  std::vector<ConvRow> convs;
  std::vector<PoolRow> pools;
  std::vector<std::array<int, 2>> linears;  // f_in, f_out
};

// torchvision resnet18 at 224x224, convolutions in execution order with the
// downsample 1x1 convs after the block's second conv.
inline NetTable resnet18_table() {
  NetTable t;
  t.convs = {{3, 64, 7, 2, 3, 224, 112},
             {64, 64, 3, 1, 1, 56, 56},   {64, 64, 3, 1, 1, 56, 56},
             {64, 64, 3, 1, 1, 56, 56},   {64, 64, 3, 1, 1, 56, 56},
             {64, 128, 3, 2, 1, 56, 28},  {128, 128, 3, 1, 1, 28, 28}, {64, 128, 1, 2, 0, 56, 28},
             {128, 128, 3, 1, 1, 28, 28}, {128, 128, 3, 1, 1, 28, 28},
             {128, 256, 3, 2, 1, 28, 14}, {256, 256, 3, 1, 1, 14, 14}, {128, 256, 1, 2, 0, 28, 14},
             {256, 256, 3, 1, 1, 14, 14}, {256, 256, 3, 1, 1, 14, 14},
             {256, 512, 3, 2, 1, 14, 7},  {512, 512, 3, 1, 1, 7, 7},   {256, 512, 1, 2, 0, 14, 7},
             {512, 512, 3, 1, 1, 7, 7},   {512, 512, 3, 1, 1, 7, 7}};
  t.pools = {{3, 2, 1, 112, 56}};
  t.linears = {{512, 1000}};
  return t;
}

inline NetTable vgg16_table() {
  NetTable t;
  t.convs = {{3, 64, 3, 1, 1, 224, 224},    {64, 64, 3, 1, 1, 224, 224},   {64, 128, 3, 1, 1, 112, 112},
             {128, 128, 3, 1, 1, 112, 112}, {128, 256, 3, 1, 1, 56, 56},   {256, 256, 3, 1, 1, 56, 56},
             {256, 256, 3, 1, 1, 56, 56},   {256, 512, 3, 1, 1, 28, 28},   {512, 512, 3, 1, 1, 28, 28},
             {512, 512, 3, 1, 1, 28, 28},   {512, 512, 3, 1, 1, 14, 14},   {512, 512, 3, 1, 1, 14, 14},
             {512, 512, 3, 1, 1, 14, 14}};
  t.pools = {{2, 2, 0, 224, 112}, {2, 2, 0, 112, 56}, {2, 2, 0, 56, 28}, {2, 2, 0, 28, 14}, {2, 2, 0, 14, 7}};
  t.linears = {{25088, 4096}, {4096, 4096}, {4096, 1000}};
  return t;
}

// c_in * k^2 * c_out * h_out * w_out * bs, in 128-bit to rule out overflow.
inline std::int64_t conv_overhead(const ConvRow& r, int bs) {
  const __int128 v = static_cast<__int128>(r.c_in) * r.k * r.k * r.c_out * r.h_out * r.h_out * bs;
  return static_cast<std::int64_t>(v);
}

// ArchSpec for the tables above, assembled by hand in the library's layout:
// residual blocks are Conv BN ReLU Conv BN [Conv BN] Add ReLU.
inline archrecon::ArchSpec resnet18_spec(int bs = 64) {
  using namespace archrecon;
  ArchSpec spec;
  spec.family = Family::ResNet;
  spec.input = {bs, 3, 224, 224};
  spec.class_count = 1000;
  auto conv = [&](int c_in, int c_out, int k, int s) {
    spec.layers.push_back(LayerSpec::conv({c_in, c_out, k, s, (k - 1) / 2, 1, 1}));
  };
  auto plain = [&](LayerKind k) { spec.layers.push_back(LayerSpec::plain(k)); };
  conv(3, 64, 7, 2);
  plain(LayerKind::BatchNorm);
  plain(LayerKind::ReLU);
  spec.layers.push_back(LayerSpec::max_pool({3, 2, 1, 1}));
  int block_in = static_cast<int>(spec.layers.size()) - 1;
  int c = 64;
  for (const int width : {64, 128, 256, 512}) {
    for (int b = 0; b < 2; ++b) {
      const int stride = (b == 0 && width != 64) ? 2 : 1;
      conv(c, width, 3, stride);
      plain(LayerKind::BatchNorm);
      plain(LayerKind::ReLU);
      conv(width, width, 3, 1);
      plain(LayerKind::BatchNorm);
      const int main_end = static_cast<int>(spec.layers.size()) - 1;
      if (stride == 2) {
        conv(c, width, 1, 2);
        spec.skip_edges.push_back({block_in, static_cast<int>(spec.layers.size()) - 1});
        plain(LayerKind::BatchNorm);
        plain(LayerKind::Add);
        spec.skip_edges.push_back({main_end, static_cast<int>(spec.layers.size()) - 1});
      } else {
        plain(LayerKind::Add);
        spec.skip_edges.push_back({block_in, static_cast<int>(spec.layers.size()) - 1});
      }
      plain(LayerKind::ReLU);
      block_in = static_cast<int>(spec.layers.size()) - 1;
      c = width;
    }
  }
  plain(LayerKind::AvgPool);
  spec.layers.push_back(LayerSpec::linear({512, 1000}));
  return spec;
}

inline archrecon::ArchSpec vgg16_spec(int bs = 64) {
  using namespace archrecon;
  ArchSpec spec;
  spec.family = Family::VGG;
  spec.input = {bs, 3, 224, 224};
  spec.class_count = 1000;
  int c = 3;
  for (const auto& [width, n] : std::vector<std::array<int, 2>>{{64, 2}, {128, 2}, {256, 3}, {512, 3}, {512, 3}}) {
    for (int i = 0; i < n; ++i) {
      spec.layers.push_back(LayerSpec::conv({c, width, 3, 1, 1, 1, 1}));
      spec.layers.push_back(LayerSpec::plain(LayerKind::ReLU));
      c = width;
    }
    spec.layers.push_back(LayerSpec::max_pool({2, 2, 0, 1}));
  }
  spec.layers.push_back(LayerSpec::linear({25088, 4096}));
  spec.layers.push_back(LayerSpec::plain(LayerKind::ReLU));
  spec.layers.push_back(LayerSpec::linear({4096, 4096}));
  spec.layers.push_back(LayerSpec::plain(LayerKind::ReLU));
  spec.layers.push_back(LayerSpec::linear({4096, 1000}));
  return spec;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("archrecon_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle
