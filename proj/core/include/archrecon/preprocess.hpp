#pragma once

#include "archrecon/trace.hpp"

namespace archrecon {

inline constexpr int kDownsampleFactor = 16;
inline constexpr int kSegmentLength = 1024;

int padded_length(int length, int factor = kDownsampleFactor);

// Pads on the right with each channel's mean, so the padding is zero after
// z-scoring. The original samples are an unchanged prefix.
Signal pad_to_multiple(const Signal& x, int factor = kDownsampleFactor);
Trace pad_to_multiple(const Trace& trace, int factor = kDownsampleFactor);

// Per-channel z-score. Channels with zero variance become all zeros.
Signal normalize(const Signal& x);

// Linear interpolation along time with end points pinned to the first and
// last input samples.
Signal resize(const Signal& x, int target_len = kSegmentLength);

Segment resize_segment(const Segment& seg, int target_len = kSegmentLength);
Segment normalize(const Segment& seg);

}  // namespace archrecon
