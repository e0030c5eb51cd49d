#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dfd/tensor.hpp"

namespace dfd {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

int out_extent(int in, int pad, int dil, int k, int stride) {
  return (in + 2 * pad - dil * (k - 1) - 1) / stride + 1;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              const Conv2dSpec& spec) {
  require(input.rank() == 4, "conv2d input must be [B,Cin,T,F]");
  require(kernel.rank() == 4, "conv2d kernel must be [Cout,Cin,kt,kf]");
  require(spec.dil_t >= 1 && spec.dil_f >= 1, "dilation must be >= 1");
  require(spec.stride_t >= 1 && spec.stride_f >= 1, "stride must be >= 1");
  require(spec.pad_t >= 0 && spec.pad_f >= 0, "padding must be nonnegative");
  const int B = input.dim(0), Cin = input.dim(1), T = input.dim(2), F = input.dim(3);
  const int Cout = kernel.dim(0), kt = kernel.dim(2), kf = kernel.dim(3);
  require(kernel.dim(1) == Cin, "conv2d channel mismatch between input and kernel");
  if (bias.defined())
    require(bias.rank() == 1 && bias.dim(0) == Cout, "conv2d bias shape mismatch");
  const int To = out_extent(T, spec.pad_t, spec.dil_t, kt, spec.stride_t);
  const int Fo = out_extent(F, spec.pad_f, spec.dil_f, kf, spec.stride_f);
  require(To >= 1 && Fo >= 1, "conv2d output dimension is not positive");

  Tensor out(Shape{B, Cout, To, Fo});
  const auto& xd = input.data();
  const auto& wd = kernel.data();
  auto& od = out.data();
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Cout; ++co) {
      const double bias_v = bias.defined() ? bias.data()[co] : 0.0;
      for (int to = 0; to < To; ++to)
        for (int fo = 0; fo < Fo; ++fo) {
          double acc = bias_v;
          const int t0 = to * spec.stride_t - spec.pad_t;
          const int f0 = fo * spec.stride_f - spec.pad_f;
          for (int ci = 0; ci < Cin; ++ci)
            for (int i = 0; i < kt; ++i) {
              const int ti = t0 + i * spec.dil_t;
              if (ti < 0 || ti >= T) continue;
              for (int j = 0; j < kf; ++j) {
                const int fi = f0 + j * spec.dil_f;
                if (fi < 0 || fi >= F) continue;
                acc += xd[((static_cast<long long>(b) * Cin + ci) * T + ti) * F + fi] *
                       wd[((static_cast<long long>(co) * Cin + ci) * kt + i) * kf + j];
              }
            }
          od[((static_cast<long long>(b) * Cout + co) * To + to) * Fo + fo] = acc;
        }
    }

  const bool track = Tape::active() &&
                     (input.requires_grad() || kernel.requires_grad() ||
                      (bias.defined() && bias.requires_grad()));
  if (track) {
    out.set_requires_grad(true);
    Tensor x = input, w = kernel, bv = bias;
    Conv2dSpec sp = spec;
    Tape::active()->record([x, w, bv, out, sp, B, Cin, Cout, T, F, To, Fo, kt, kf]() mutable {
      const std::vector<double>* go = out.grad_ptr();
      if (!go) return;
      const auto& xd = x.data();
      const auto& wd = w.data();
      const bool gx_on = x.requires_grad();
      const bool gw_on = w.requires_grad();
      const bool gb_on = bv.defined() && bv.requires_grad();
      std::vector<double>* gx = gx_on ? &x.grad() : nullptr;
      std::vector<double>* gw = gw_on ? &w.grad() : nullptr;
      std::vector<double>* gb = gb_on ? &bv.grad() : nullptr;
      for (int b = 0; b < B; ++b)
        for (int co = 0; co < Cout; ++co)
          for (int to = 0; to < To; ++to)
            for (int fo = 0; fo < Fo; ++fo) {
              const double g =
                  (*go)[((static_cast<long long>(b) * Cout + co) * To + to) * Fo + fo];
              if (g == 0.0) continue;
              if (gb_on) (*gb)[co] += g;
              const int t0 = to * sp.stride_t - sp.pad_t;
              const int f0 = fo * sp.stride_f - sp.pad_f;
              for (int ci = 0; ci < Cin; ++ci)
                for (int i = 0; i < kt; ++i) {
                  const int ti = t0 + i * sp.dil_t;
                  if (ti < 0 || ti >= T) continue;
                  for (int j = 0; j < kf; ++j) {
                    const int fi = f0 + j * sp.dil_f;
                    if (fi < 0 || fi >= F) continue;
                    const long long xi =
                        ((static_cast<long long>(b) * Cin + ci) * T + ti) * F + fi;
                    const long long wi =
                        ((static_cast<long long>(co) * Cin + ci) * kt + i) * kf + j;
                    if (gx_on) (*gx)[xi] += g * wd[wi];
                    if (gw_on) (*gw)[wi] += g * xd[xi];
                  }
                }
            }
    });
  }
  return out;
}

Tensor avg_pool2d(const Tensor& input, int window_t, int window_f) {
  require(input.rank() == 4, "avg_pool2d input must be [B,C,T,F]");
  require(window_t >= 1 && window_f >= 1, "pool window must be >= 1");
  const int B = input.dim(0), C = input.dim(1), T = input.dim(2), F = input.dim(3);
  require(T % window_t == 0, "time extent not divisible by pool window");
  require(F % window_f == 0, "frequency extent not divisible by pool window");
  const int To = T / window_t, Fo = F / window_f;
  const double inv = 1.0 / (window_t * window_f);

  Tensor out(Shape{B, C, To, Fo});
  const auto& xd = input.data();
  auto& od = out.data();
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int to = 0; to < To; ++to)
        for (int fo = 0; fo < Fo; ++fo) {
          double acc = 0.0;
          for (int i = 0; i < window_t; ++i)
            for (int j = 0; j < window_f; ++j)
              acc += xd[((static_cast<long long>(b) * C + c) * T + to * window_t + i) * F +
                        fo * window_f + j];
          od[((static_cast<long long>(b) * C + c) * To + to) * Fo + fo] = acc * inv;
        }

  if (Tape::active() && input.requires_grad()) {
    out.set_requires_grad(true);
    Tensor x = input;
    Tape::active()->record([x, out, B, C, T, F, To, Fo, window_t, window_f, inv]() mutable {
      const std::vector<double>* go = out.grad_ptr();
      if (!go) return;
      auto& gx = x.grad();
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
          for (int to = 0; to < To; ++to)
            for (int fo = 0; fo < Fo; ++fo) {
              const double g =
                  (*go)[((static_cast<long long>(b) * C + c) * To + to) * Fo + fo] * inv;
              for (int i = 0; i < window_t; ++i)
                for (int j = 0; j < window_f; ++j)
                  gx[((static_cast<long long>(b) * C + c) * T + to * window_t + i) * F +
                     fo * window_f + j] += g;
            }
    });
  }
  return out;
}

BatchNormState make_batch_norm(int channels) {
  BatchNormState bn;
  bn.gamma = Tensor::full({channels}, 1.0, true);
  bn.beta = Tensor::zeros({channels}, true);
  bn.running_mean = Tensor::zeros({channels});
  bn.running_var = Tensor::full({channels}, 1.0);
  return bn;
}

Tensor batch_norm(const Tensor& x, BatchNormState& bn, bool training,
                  bool update_running) {
  require(x.rank() == 4, "batch_norm input must be [B,C,T,F]");
  const int B = x.dim(0), C = x.dim(1), T = x.dim(2), F = x.dim(3);
  require(bn.gamma.dim(0) == C, "batch_norm channel mismatch");
  const long long per_channel = static_cast<long long>(B) * T * F;
  const auto& xd = x.data();

  std::vector<double> mean(C, 0.0), var(C, 0.0);
  if (training) {
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        const double* src = xd.data() + (static_cast<long long>(b) * C + c) * T * F;
        double acc = 0.0;
        for (long long i = 0; i < static_cast<long long>(T) * F; ++i) acc += src[i];
        mean[c] += acc;
      }
    for (int c = 0; c < C; ++c) mean[c] /= static_cast<double>(per_channel);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        const double* src = xd.data() + (static_cast<long long>(b) * C + c) * T * F;
        double acc = 0.0;
        for (long long i = 0; i < static_cast<long long>(T) * F; ++i) {
          const double d = src[i] - mean[c];
          acc += d * d;
        }
        var[c] += acc;
      }
    for (int c = 0; c < C; ++c) var[c] /= static_cast<double>(per_channel);
    if (update_running) {
      auto& rm = bn.running_mean.data();
      auto& rv = bn.running_var.data();
      for (int c = 0; c < C; ++c) {
        rm[c] = (1.0 - bn.momentum) * rm[c] + bn.momentum * mean[c];
        rv[c] = (1.0 - bn.momentum) * rv[c] + bn.momentum * var[c];
      }
    }
  } else {
    mean = bn.running_mean.data();
    var = bn.running_var.data();
  }

  std::vector<double> inv_std(C);
  for (int c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + bn.eps);

  Tensor out(x.shape());
  auto& od = out.data();
  const auto& gd = bn.gamma.data();
  const auto& bd = bn.beta.data();
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const double* src = xd.data() + (static_cast<long long>(b) * C + c) * T * F;
      double* dst = od.data() + (static_cast<long long>(b) * C + c) * T * F;
      const double m = mean[c], is = inv_std[c], g = gd[c], bt = bd[c];
      for (long long i = 0; i < static_cast<long long>(T) * F; ++i)
        dst[i] = g * (src[i] - m) * is + bt;
    }

  const bool track = Tape::active() &&
                     (x.requires_grad() || bn.gamma.requires_grad() || bn.beta.requires_grad());
  if (track) {
    out.set_requires_grad(true);
    Tensor xin = x, gamma = bn.gamma, beta = bn.beta;
    Tape::active()->record(
        [xin, gamma, beta, out, mean, inv_std, B, C, T, F, per_channel, training]() mutable {
          const std::vector<double>* go = out.grad_ptr();
          if (!go) return;
          const auto& xd = xin.data();
          const auto& gd = gamma.data();
          const long long tf = static_cast<long long>(T) * F;
          for (int c = 0; c < C; ++c) {
            const double m = mean[c], is = inv_std[c];
            double sum_g = 0.0, sum_gxh = 0.0;
            for (int b = 0; b < B; ++b) {
              const long long base = (static_cast<long long>(b) * C + c) * tf;
              for (long long i = 0; i < tf; ++i) {
                const double g = (*go)[base + i];
                sum_g += g;
                sum_gxh += g * (xd[base + i] - m) * is;
              }
            }
            if (gamma.requires_grad()) gamma.grad()[c] += sum_gxh;
            if (beta.requires_grad()) beta.grad()[c] += sum_g;
            if (xin.requires_grad()) {
              auto& gx = xin.grad();
              const double gc = gd[c];
              if (training) {
                const double n = static_cast<double>(per_channel);
                for (int b = 0; b < B; ++b) {
                  const long long base = (static_cast<long long>(b) * C + c) * tf;
                  for (long long i = 0; i < tf; ++i) {
                    const double xh = (xd[base + i] - m) * is;
                    gx[base + i] +=
                        gc * is * ((*go)[base + i] - sum_g / n - xh * sum_gxh / n);
                  }
                }
              } else {
                for (int b = 0; b < B; ++b) {
                  const long long base = (static_cast<long long>(b) * C + c) * tf;
                  for (long long i = 0; i < tf; ++i) gx[base + i] += gc * is * (*go)[base + i];
                }
              }
            }
          }
        });
  }
  return out;
}

}  // namespace dfd
