#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfd/dyn_conv.hpp"
#include "dfd/tensor.hpp"

namespace dfd {

struct PoolSpec {
  int t = 1;
  int f = 1;
  friend bool operator==(const PoolSpec&, const PoolSpec&) = default;
};

/// Seven-layer conv stack topology: layer 1 is a conventional convolution,
/// layers 2..7 are frequency-dynamic. Frequency pooling must reduce the mel
/// axis to exactly 2 bins before layer 7; time pooling totals a factor 4.
struct ModelConfig {
  int n_classes = 10;
  std::vector<int> channels = {4, 8, 8, 8, 8, 8, 8};
  std::vector<PoolSpec> pooling = {{2, 2}, {2, 2}, {1, 2}, {1, 2}, {1, 2}, {1, 2}, {1, 1}};
  int num_kernels = 4;
  /// Dilations for the six dynamic layers (conv layers 2..7); empty means
  /// all-(1,1). Layer 7 is forced to all-(1,1) at build time regardless.
  std::vector<std::vector<Dilation>> dyn_dilations;
  double temperature = 31.0;
  int attention_reduction = 4;
  int gru_hidden = 32;
  int mel_bins = 128;

  void validate() const;
  std::string serialize() const;
  static ModelConfig deserialize(const std::string& text);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Per-kernel dilations applied uniformly to conv layers 2..6, with layer 7
/// kept undilated.
std::vector<std::vector<Dilation>> uniform_dyn_dilations(
    const std::vector<Dilation>& per_kernel);

struct ConvBlock {
  Tensor weight, bias;
  BatchNormState bn;
};

struct DynBlock {
  DfdLayerConfig cfg;
  DfdLayerParams params;
  BatchNormState bn;
};

struct BiGruParams {
  GruDirectionParams fwd, bwd;
};

struct NamedParam {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

struct Model {
  ModelConfig config;
  std::uint64_t seed = 0;
  ConvBlock layer1;
  std::vector<DynBlock> dyn;  // conv layers 2..7
  BiGruParams gru1, gru2;
  Tensor strong_w, strong_b;  // frame head
  Tensor att_w, att_b;        // time-attention head for the weak prediction

  /// Stable, ordered registry of every parameter tensor (shared handles).
  std::vector<NamedParam> named_params() const;
};

Model build_crnn(const ModelConfig& config, std::uint64_t seed);

struct ForwardOptions {
  bool record_attention = false;
  bool training = false;             // batch statistics in the norm layers
  bool update_running_stats = false; // fold batch stats into the running ones
};

struct ForwardResult {
  Tensor strong;                        // [B, T/4, n_classes], in (0,1)
  Tensor weak;                          // [B, n_classes], in (0,1)
  std::vector<AttentionMap> attention;  // one per dynamic layer when recorded
};

/// mel is [B,1,T,mel_bins] with T divisible by the total time pooling factor.
/// Weak predictions are the attention-weighted time average of the strong
/// ones, so a constant strong track yields exactly that constant.
ForwardResult crnn_forward(Model& model, const Tensor& mel,
                           const ForwardOptions& opts = {});

/// Exact count of trainable scalars (running statistics excluded).
long long model_param_count(const Model& model);

struct TrainBatch {
  Tensor mel;            // [B,1,T,mel_bins]
  Tensor strong_labels;  // [B,T/4,n_classes] in [0,1]
  Tensor weak_labels;    // [B,n_classes] in [0,1]
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long step = 0;
  std::vector<std::vector<double>> m, v;
};

/// One optimizer step on loss = bce(strong) + bce(weak). Returns the
/// pre-update loss; a non-finite loss aborts before touching the parameters.
double train_step(Model& model, const TrainBatch& batch, AdamState& opt, double lr);

// Checkpoint file: magic "DFDC", u32 version, u64 seed, config text block,
// tensor table (name, rank, dims, raw little-endian 32-bit reals).
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);
/// Rejects checkpoints whose embedded config differs from `expected`.
Model load_checkpoint(const std::string& path, const ModelConfig& expected);

}  // namespace dfd
