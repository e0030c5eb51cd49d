#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dfd/tensor.hpp"

namespace dfd {

/// One (time, frequency) dilation pair for a basis kernel.
struct Dilation {
  int t = 1;
  int f = 1;
  friend bool operator==(const Dilation&, const Dilation&) = default;
};

/// Frequency dynamic convolution layer with per-kernel dilation. The plain
/// frequency-dynamic layer is the special case where every basis kernel has
/// dilation (1,1).
struct DfdLayerConfig {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;  // fixed 3x3
  int num_kernels = 1;
  std::vector<Dilation> dilations;  // one per basis kernel
  double temperature = 31.0;
  int attention_reduction = 4;

  int attention_hidden() const;
  void validate() const;
};

struct DfdLayerParams {
  std::vector<Tensor> basis_weights;  // K x [Cout,Cin,3,3]
  std::vector<Tensor> basis_biases;   // K x [Cout]
  Tensor att_w1, att_b1;              // [hidden,Cin], [hidden]
  Tensor att_w2, att_b2;              // [K,hidden], [K]
};

/// Frequency-adaptive attention over the basis kernels: pi [B,K,F],
/// nonnegative, summing to one over K at every (batch, frequency).
struct AttentionMap {
  Tensor pi;
};

DfdLayerParams init_dfd_layer(const DfdLayerConfig& config, std::uint64_t seed);

/// Attention pipeline: time mean -> channel squeeze -> rectifier ->
/// K-way projection -> temperature softmax over kernels.
AttentionMap attention_weights(const Tensor& x, const DfdLayerParams& params,
                               const DfdLayerConfig& config);

struct DfdForwardOptions {
  /// Force one-hot attention on this basis kernel (exact oracle hook linking
  /// the dynamic layer to a plain dilated convolution). -1 disables.
  int force_kernel = -1;
  /// Use this attention map [B,K,F] instead of computing one from x.
  const Tensor* frozen_attention = nullptr;
  /// Filled with the attention actually used when non-null.
  Tensor* attention_out = nullptr;
};

/// y_tf = sum_i pi_if(x) * y_itf where y_i is the same-padded convolution of x
/// with the i-th dilated basis kernel (bias included inside y_i). Output
/// spatial size equals input spatial size.
Tensor dfd_forward(const Tensor& x, const DfdLayerParams& params,
                   const DfdLayerConfig& config, const DfdForwardOptions& opts = {});

/// Trainable scalar count; a function of channels, K and the attention
/// reduction only, never of the dilation sizes.
long long layer_param_count(const DfdLayerConfig& config);

/// Named views of every trainable tensor in the layer, prefix + ".xxx".
std::vector<std::pair<std::string, Tensor>> named_layer_params(const DfdLayerParams& params,
                                                               const std::string& prefix);

}  // namespace dfd
