#include "dfd/dyn_conv.hpp"

#include <cmath>
#include <stdexcept>

namespace dfd {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Weighted sum of the per-kernel outputs: y[b,c,t,f] = sum_i pi[b,i,f] * ys[i][b,c,t,f].
Tensor combine_by_attention(const std::vector<Tensor>& ys, const Tensor& pi) {
  const int K = static_cast<int>(ys.size());
  const int B = ys[0].dim(0), C = ys[0].dim(1), T = ys[0].dim(2), F = ys[0].dim(3);
  require(pi.rank() == 3 && pi.dim(0) == B && pi.dim(1) == K && pi.dim(2) == F,
          "attention map shape mismatch");
  Tensor out(Shape{B, C, T, F});
  auto& od = out.data();
  const auto& pd = pi.data();
  for (int i = 0; i < K; ++i) {
    const auto& yd = ys[i].data();
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t) {
          const long long base = ((static_cast<long long>(b) * C + c) * T + t) * F;
          const long long pbase = (static_cast<long long>(b) * K + i) * F;
          for (int f = 0; f < F; ++f) od[base + f] += pd[pbase + f] * yd[base + f];
        }
  }
  bool any_grad = Tape::active() && pi.requires_grad();
  for (const Tensor& y : ys) any_grad = any_grad || (Tape::active() && y.requires_grad());
  if (any_grad) {
    out.set_requires_grad(true);
    std::vector<Tensor> ys_c = ys;
    Tape::active()->record([ys_c, pi = pi, out = out, B, C, T, F, K]() mutable {
      const std::vector<double>* go = out.grad_ptr();
      if (!go) return;
      const auto& pd = pi.data();
      for (int i = 0; i < K; ++i) {
        const bool gy_on = ys_c[i].requires_grad();
        const bool gp_on = pi.requires_grad();
        if (!gy_on && !gp_on) continue;
        const auto& yd = ys_c[i].data();
        std::vector<double>* gy = gy_on ? &ys_c[i].grad() : nullptr;
        std::vector<double>* gp = gp_on ? &pi.grad() : nullptr;
        for (int b = 0; b < B; ++b)
          for (int c = 0; c < C; ++c)
            for (int t = 0; t < T; ++t) {
              const long long base = ((static_cast<long long>(b) * C + c) * T + t) * F;
              const long long pbase = (static_cast<long long>(b) * K + i) * F;
              for (int f = 0; f < F; ++f) {
                const double g = (*go)[base + f];
                if (g == 0.0) continue;
                if (gy_on) (*gy)[base + f] += g * pd[pbase + f];
                if (gp_on) (*gp)[pbase + f] += g * yd[base + f];
              }
            }
      }
    });
  }
  return out;
}

}  // namespace

int DfdLayerConfig::attention_hidden() const {
  const int h = in_channels / attention_reduction;
  return h < 1 ? 1 : h;
}

void DfdLayerConfig::validate() const {
  require(in_channels >= 1 && out_channels >= 1, "channel counts must be positive");
  require(kernel == 3, "basis kernels are fixed at 3x3");
  require(num_kernels >= 1, "need at least one basis kernel");
  require(static_cast<int>(dilations.size()) == num_kernels,
          "one dilation pair required per basis kernel");
  for (const Dilation& d : dilations)
    require(d.t >= 1 && d.f >= 1, "dilation components must be >= 1");
  require(temperature > 0.0, "temperature must be positive");
  require(attention_reduction >= 1, "attention reduction must be >= 1");
}

DfdLayerParams init_dfd_layer(const DfdLayerConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  DfdLayerParams p;
  const int k = config.kernel;
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.in_channels) * k * k);
  for (int i = 0; i < config.num_kernels; ++i) {
    p.basis_weights.push_back(Tensor::uniform(
        rng, {config.out_channels, config.in_channels, k, k}, -bound, bound, true));
    p.basis_biases.push_back(Tensor::zeros({config.out_channels}, true));
  }
  const int hidden = config.attention_hidden();
  const double b1 = 1.0 / std::sqrt(static_cast<double>(config.in_channels));
  p.att_w1 = Tensor::uniform(rng, {hidden, config.in_channels}, -b1, b1, true);
  p.att_b1 = Tensor::zeros({hidden}, true);
  const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  p.att_w2 = Tensor::uniform(rng, {config.num_kernels, hidden}, -b2, b2, true);
  p.att_b2 = Tensor::zeros({config.num_kernels}, true);
  return p;
}

AttentionMap attention_weights(const Tensor& x, const DfdLayerParams& params,
                               const DfdLayerConfig& config) {
  require(x.rank() == 4, "input must be [B,Cin,T,F]");
  require(x.dim(1) == config.in_channels, "input channel mismatch");
  Tensor pooled = reduce_mean_axis(x, 2);  // [B,Cin,F]
  Tensor hidden = relu(channel_linear(pooled, params.att_w1, params.att_b1));
  Tensor logits = channel_linear(hidden, params.att_w2, params.att_b2);  // [B,K,F]
  AttentionMap map;
  map.pi = softmax_axis(logits, 1, config.temperature);
  return map;
}

Tensor dfd_forward(const Tensor& x, const DfdLayerParams& params,
                   const DfdLayerConfig& config, const DfdForwardOptions& opts) {
  config.validate();
  require(x.rank() == 4, "input must be [B,Cin,T,F]");
  require(x.dim(1) == config.in_channels, "input channel mismatch");
  const int B = x.dim(0), T = x.dim(2), F = x.dim(3);
  for (const Dilation& d : config.dilations) {
    // A dilated tap that can never reach a real input sample means the kernel
    // extent is too large for this spatial size.
    require(T > d.t, "time extent too small for the dilated kernel");
    require(F > d.f, "frequency extent too small for the dilated kernel");
  }

  Tensor pi;
  if (opts.force_kernel >= 0) {
    require(opts.force_kernel < config.num_kernels, "forced kernel index out of range");
    pi = Tensor::zeros({B, config.num_kernels, F});
    for (int b = 0; b < B; ++b)
      for (int f = 0; f < F; ++f) pi.at(b, opts.force_kernel, f) = 1.0;
  } else if (opts.frozen_attention != nullptr) {
    pi = *opts.frozen_attention;
  } else {
    pi = attention_weights(x, params, config).pi;
  }
  if (opts.attention_out != nullptr) *opts.attention_out = pi;

  std::vector<Tensor> ys;
  ys.reserve(config.num_kernels);
  for (int i = 0; i < config.num_kernels; ++i) {
    const Dilation& d = config.dilations[i];
    Conv2dSpec spec;
    spec.dil_t = d.t;
    spec.dil_f = d.f;
    spec.pad_t = same_pad(config.kernel, d.t);
    spec.pad_f = same_pad(config.kernel, d.f);
    ys.push_back(conv2d(x, params.basis_weights[i], params.basis_biases[i], spec));
  }
  return combine_by_attention(ys, pi);
}

long long layer_param_count(const DfdLayerConfig& config) {
  config.validate();
  const long long k2 = static_cast<long long>(config.kernel) * config.kernel;
  const long long basis =
      static_cast<long long>(config.num_kernels) *
      (static_cast<long long>(config.out_channels) * config.in_channels * k2 +
       config.out_channels);
  const long long hidden = config.attention_hidden();
  const long long attention = hidden * config.in_channels + hidden +
                              static_cast<long long>(config.num_kernels) * hidden +
                              config.num_kernels;
  return basis + attention;
}

std::vector<std::pair<std::string, Tensor>> named_layer_params(const DfdLayerParams& params,
                                                               const std::string& prefix) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < params.basis_weights.size(); ++i) {
    out.emplace_back(prefix + ".basis" + std::to_string(i) + ".weight",
                     params.basis_weights[i]);
    out.emplace_back(prefix + ".basis" + std::to_string(i) + ".bias",
                     params.basis_biases[i]);
  }
  out.emplace_back(prefix + ".att.w1", params.att_w1);
  out.emplace_back(prefix + ".att.b1", params.att_b1);
  out.emplace_back(prefix + ".att.w2", params.att_w2);
  out.emplace_back(prefix + ".att.b2", params.att_b2);
  return out;
}

}  // namespace dfd
