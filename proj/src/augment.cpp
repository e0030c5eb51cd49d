#include "dfd/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dfd/rng.hpp"

namespace dfd {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

Tensor roll_axis(const Tensor& x, int axis, int shift) {
  const int n = x.dim(axis);
  Tensor out(x.shape());
  long long outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const auto& xd = x.data();
  auto& od = out.data();
  for (long long o = 0; o < outer; ++o)
    for (int k = 0; k < n; ++k) {
      int dst = (k + shift) % n;
      if (dst < 0) dst += n;
      std::copy(xd.begin() + (o * n + k) * inner, xd.begin() + (o * n + k + 1) * inner,
                od.begin() + (o * n + dst) * inner);
    }
  return out;
}

}  // namespace

void AugmentConfig::validate() const {
  require(mixup_beta > 0.0, "mixup beta must be positive");
  require(max_mask_frames >= 0, "mask length bound must be nonnegative");
  require(max_shift_frames >= 0, "shift bound must be nonnegative");
  require(min_filter_bands >= 1 && max_filter_bands >= min_filter_bands,
          "filter band range invalid");
  require(gain_db_hi >= gain_db_lo, "gain range invalid");
}

TrainSample frame_shift(const TrainSample& sample, int shift) {
  require(sample.features.rank() == 4, "features must be [B,1,T,F]");
  const int T = sample.features.dim(2);
  require(shift > -T && shift < T, "shift out of range");
  TrainSample out;
  out.features = roll_axis(sample.features, 2, shift);
  out.strong = sample.strong.defined() ? roll_axis(sample.strong, sample.strong.rank() - 2,
                                                   shift / 4)
                                       : Tensor();
  out.weak = sample.weak.defined() ? sample.weak.clone() : Tensor();
  return out;
}

TrainSample mixup(const TrainSample& a, const TrainSample& b, double lambda) {
  require(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0,1]");
  require(a.features.shape() == b.features.shape(), "feature shape mismatch");
  require(a.strong.shape() == b.strong.shape(), "strong label shape mismatch");
  require(a.weak.shape() == b.weak.shape(), "weak label shape mismatch");
  auto mix = [lambda](const Tensor& x, const Tensor& y) {
    Tensor out(x.shape());
    for (long long i = 0; i < x.size(); ++i)
      out.data()[i] = lambda * x.data()[i] + (1.0 - lambda) * y.data()[i];
    return out;
  };
  return TrainSample{mix(a.features, b.features), mix(a.strong, b.strong),
                     mix(a.weak, b.weak)};
}

Tensor time_mask(const Tensor& features, int start, int len) {
  require(features.rank() == 4, "features must be [B,1,T,F]");
  const int T = features.dim(2);
  require(start >= 0 && len >= 0 && start + len <= T, "mask outside the clip");
  Tensor out = features.clone();
  if (len == 0) return out;
  const auto& xd = features.data();
  const double mean = std::accumulate(xd.begin(), xd.end(), 0.0) /
                      static_cast<double>(xd.size());
  const int B = features.dim(0), C = features.dim(1), F = features.dim(3);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int t = start; t < start + len; ++t)
        for (int f = 0; f < F; ++f) out.at(b, c, t, f) = mean;
  return out;
}

namespace {

std::vector<int> draw_bands(int n_freq, Rng& rng, const AugmentConfig& cfg) {
  int bands = rng.uniform_int(cfg.min_filter_bands, cfg.max_filter_bands);
  bands = std::min(bands, n_freq);
  // distinct interior cut points, then sorted: an exact partition of [0, n_freq)
  std::vector<int> candidates(n_freq - 1);
  std::iota(candidates.begin(), candidates.end(), 1);
  for (int i = 0; i < bands - 1; ++i) {
    const int j = rng.uniform_int(i, static_cast<int>(candidates.size()) - 1);
    std::swap(candidates[i], candidates[j]);
  }
  std::vector<int> cuts(candidates.begin(), candidates.begin() + (bands - 1));
  std::sort(cuts.begin(), cuts.end());
  cuts.push_back(n_freq);
  return cuts;
}

}  // namespace

std::vector<int> filter_aug_bands(int n_freq, std::uint64_t seed,
                                  const AugmentConfig& cfg) {
  cfg.validate();
  require(n_freq >= 1, "need at least one frequency bin");
  Rng rng(seed);
  return draw_bands(n_freq, rng, cfg);
}

Tensor filter_aug_lite(const Tensor& features, std::uint64_t seed,
                       const AugmentConfig& cfg) {
  cfg.validate();
  require(features.rank() == 4, "features must be [B,1,T,F]");
  const int F = features.dim(3);
  Rng rng(seed);
  const std::vector<int> cuts = draw_bands(F, rng, cfg);

  Tensor out = features.clone();
  const int B = features.dim(0), C = features.dim(1), T = features.dim(2);
  int lo = 0;
  for (int cut : cuts) {
    const double gain_db = rng.uniform(cfg.gain_db_lo, cfg.gain_db_hi);
    const double offset = gain_db * std::log(10.0) / 10.0;  // dB on power spectra
    if (offset != 0.0)
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
          for (int t = 0; t < T; ++t)
            for (int f = lo; f < cut; ++f) out.at(b, c, t, f) += offset;
    lo = cut;
  }
  return out;
}

}  // namespace dfd
