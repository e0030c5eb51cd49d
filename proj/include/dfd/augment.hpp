#pragma once

#include <cstdint>

#include "dfd/tensor.hpp"

namespace dfd {

/// One training sample: log-mel features [B,1,T,F], strong labels [T/4,C]
/// (or [B,T/4,C]) and weak labels [C] (or [B,C]).
struct TrainSample {
  Tensor features;
  Tensor strong;
  Tensor weak;
};

struct AugmentConfig {
  double mixup_beta = 0.2;    // Beta(beta, beta) draw for the mixing weight
  int max_mask_frames = 24;   // time masking length bound
  int max_shift_frames = 16;  // frame shift bound (feature frames)
  int min_filter_bands = 2;   // band-gain filter: band count range
  int max_filter_bands = 5;
  double gain_db_lo = -6.0;   // band gain range in dB
  double gain_db_hi = 6.0;

  void validate() const;
};

/// Rolls features along time by `shift` frames (wrap-around) and strong
/// labels by shift/4, the label frame rate.
TrainSample frame_shift(const TrainSample& sample, int shift);

/// lambda * a + (1 - lambda) * b on features and both label grids.
TrainSample mixup(const TrainSample& a, const TrainSample& b, double lambda);

/// Replaces frames [start, start+len) with the mean of the whole feature map.
/// Mean fill rather than zero: the features live in the log domain.
Tensor time_mask(const Tensor& features, int start, int len);

/// Band edges drawn for a seed: 0 < b_0 < b_1 < ... < b_{n-1} = n_freq, so the
/// bands [0,b_0), [b_0,b_1), ... partition the frequency axis exactly. These
/// are the boundaries filter_aug_lite uses for the same seed.
std::vector<int> filter_aug_bands(int n_freq, std::uint64_t seed,
                                  const AugmentConfig& cfg);

/// Splits the frequency axis into contiguous bands at random boundaries and
/// offsets each band by a random gain (dB, converted to a log-domain shift).
Tensor filter_aug_lite(const Tensor& features, std::uint64_t seed,
                       const AugmentConfig& cfg);

}  // namespace dfd
