#include "archrecon/preprocess.hpp"

#include <cmath>

namespace archrecon {

int padded_length(int length, int factor) {
  if (factor <= 0) throw Error("padding factor must be positive");
  return (length + factor - 1) / factor * factor;
}

Signal pad_to_multiple(const Signal& x, int factor) {
  if (x.cols() < 1) throw Error("cannot pad an empty signal");
  const int target = padded_length(static_cast<int>(x.cols()), factor);
  Signal out(x.rows(), target);
  out.leftCols(x.cols()) = x;
  if (target > x.cols()) {
    // Mean in double so padding is stable for long traces.
    for (Eigen::Index c = 0; c < x.rows(); ++c) {
      const double mean = x.row(c).cast<double>().mean();
      out.row(c).tail(target - x.cols()).setConstant(static_cast<float>(mean));
    }
  }
  return out;
}

Trace pad_to_multiple(const Trace& trace, int factor) {
  Trace out = trace;
  out.samples = pad_to_multiple(trace.samples, factor);
  return out;
}

Signal normalize(const Signal& x) {
  Signal out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.rows(); ++c) {
    const Eigen::ArrayXd row = x.row(c).cast<double>().transpose().array();
    const double mean = row.mean();
    const double var = (row - mean).square().mean();
    if (!(var > 1e-24)) {
      out.row(c).setZero();
      continue;
    }
    out.row(c) = ((row - mean) / std::sqrt(var)).cast<float>().transpose().matrix();
  }
  return out;
}

Signal resize(const Signal& x, int target_len) {
  if (x.cols() < 1) throw Error("cannot resize an empty signal");
  if (target_len < 1) throw Error("resize target must be positive");
  const auto w = x.cols();
  Signal out(x.rows(), target_len);
  if (w == target_len) return x;
  for (int j = 0; j < target_len; ++j) {
    const double pos = target_len == 1 ? 0.0 : static_cast<double>(j) * static_cast<double>(w - 1) / (target_len - 1);
    const auto lo = static_cast<Eigen::Index>(std::floor(pos));
    const auto hi = std::min<Eigen::Index>(lo + 1, w - 1);
    const float frac = static_cast<float>(pos - static_cast<double>(lo));
    out.col(j) = (1.0f - frac) * x.col(lo) + frac * x.col(hi);
  }
  return out;
}

Segment resize_segment(const Segment& seg, int target_len) {
  Segment out = seg;
  out.values = resize(seg.values, target_len);
  return out;
}

Segment normalize(const Segment& seg) {
  Segment out = seg;
  out.values = normalize(seg.values);
  return out;
}

}  // namespace archrecon
