#pragma once

#include "archrecon/nn.hpp"

namespace archrecon::nn {

// Single-direction LSTM over a features x time sequence. Gate rows are
// ordered input, forget, cell, output.
class Lstm {
 public:
  struct Cache {
    Mat x;      // input, D x T
    Mat gates;  // activated gates, 4H x T
    Mat c;      // cell states, H x T
    Mat h;      // hidden states, H x T
  };

  Lstm() = default;
  Lstm(const std::string& name, int input_size, int hidden_size, bool reverse);

  void init(Rng& rng);
  Mat forward(const Mat& x, Cache* cache) const;
  Mat backward(const Mat& dh, const Cache& cache);
  void collect(ParamList& out);

  int hidden_size() const { return hidden_; }

 private:
  int input_ = 0;
  int hidden_ = 0;
  bool reverse_ = false;
  Param wx_;  // 4H x D
  Param wh_;  // 4H x H
  Param b_;   // 4H x 1
};

// Forward and reverse LSTMs; the output stacks their hidden states, 2H x T.
class BiLstm {
 public:
  struct Cache {
    Lstm::Cache fwd, bwd;
  };

  BiLstm() = default;
  BiLstm(const std::string& name, int input_size, int hidden_size);

  void init(Rng& rng);
  Mat forward(const Mat& x, Cache* cache) const;
  Mat backward(const Mat& dy, const Cache& cache);
  void collect(ParamList& out);

  int output_size() const { return 2 * fwd_.hidden_size(); }

 private:
  Lstm fwd_, bwd_;
};

}  // namespace archrecon::nn
