#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "dfd/rng.hpp"

namespace dfd {

using Shape = std::vector<int>;

long long shape_size(const Shape& shape);

/// Dense row-major tensor of 64-bit reals. Copies are shallow handles onto
/// shared storage; clone() deep-copies. Layout convention for model tensors
/// is (batch, channel, time, frequency).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor uniform(Rng& rng, Shape shape, double lo, double hi,
                        bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const;
  int dim(int axis) const;
  long long size() const;

  std::vector<double>& data();
  const std::vector<double>& data() const;
  double value() const;  // scalar tensors only

  template <typename... Ix>
  double& at(Ix... indices) {
    const int idx[] = {static_cast<int>(indices)...};
    return data()[flat_index(idx, sizeof...(indices))];
  }
  template <typename... Ix>
  double at(Ix... indices) const {
    const int idx[] = {static_cast<int>(indices)...};
    return data()[flat_index(idx, sizeof...(indices))];
  }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool enabled);

  bool has_grad() const;
  std::vector<double>& grad();               // zero-filled on first access
  const std::vector<double>* grad_ptr() const;  // nullptr when untouched
  void zero_grad();

  Tensor clone() const;   // deep copy, keeps requires_grad, fresh grad
  Tensor detach() const;  // deep copy with requires_grad = false

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until first accumulation
  };
  std::shared_ptr<Impl> impl_;

  Impl& impl();
  const Impl& impl() const;
  long long flat_index(const int* idx, std::size_t n) const;
};

/// Records the backward rule of every differentiable operation executed while
/// it is the active tape, in execution (hence topological) order. Single
/// owner: record and backward happen on one logical thread. Running backward
/// consumes the tape; a second backward is an error.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();
  void record(std::function<void()> step);
  std::size_t node_count() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  friend void backward(Tape& tape, const Tensor& loss);
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
  Tape* prev_ = nullptr;
};

/// Reverse sweep: seeds d(loss)/d(loss) = 1 and accumulates gradients into
/// every tensor that took part in recorded operations. Gradients add up
/// across calls until zero_grad().
void backward(Tape& tape, const Tensor& loss);

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor affine(const Tensor& a, double mul, double add);  // mul*x + add
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor silu(const Tensor& x);  // x * sigmoid(x)

// ---- reductions ----
Tensor sum_all(const Tensor& x);
Tensor reduce_sum_axis(const Tensor& x, int axis);
Tensor reduce_mean_axis(const Tensor& x, int axis);

/// Softmax of x/temperature along `axis`. Output is nonnegative and sums to
/// one along the axis.
Tensor softmax_axis(const Tensor& x, int axis, double temperature = 1.0);

// ---- shape ----
Tensor reshape(const Tensor& x, Shape new_shape);
Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor select_time(const Tensor& x, int t);             // [B,T,D] -> [B,D]
Tensor stack_time(const std::vector<Tensor>& steps);    // T x [B,D] -> [B,T,D]

// ---- linear maps ----
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // [N,D],[H,D](,[H]) -> [N,H]
// Per-position channel projection: [B,C,F],[O,C](,[O]) -> [B,O,F]
Tensor channel_linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Mean binary cross-entropy between probabilities and targets in [0,1].
/// Probabilities are clamped to [eps, 1-eps] before the logs.
Tensor bce_mean(const Tensor& probs, const Tensor& targets, double eps = 1e-12);

// ---- convolution & pooling ----
struct Conv2dSpec {
  int stride_t = 1;
  int stride_f = 1;
  int pad_t = 0;
  int pad_f = 0;
  int dil_t = 1;
  int dil_f = 1;
};

/// Padding that keeps the spatial size under stride 1: d*(k-1)/2.
inline int same_pad(int kernel, int dilation) { return dilation * (kernel - 1) / 2; }

/// 2D convolution (cross-correlation convention) with dilation.
/// input [B,Cin,T,F], kernel [Cout,Cin,kt,kf], bias [Cout] or undefined.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              const Conv2dSpec& spec);

Tensor avg_pool2d(const Tensor& input, int window_t, int window_f);

struct BatchNormState {
  Tensor gamma, beta;               // trainable
  Tensor running_mean, running_var; // inference statistics
  double eps = 1e-5;
  double momentum = 0.1;
};

BatchNormState make_batch_norm(int channels);

/// Per-channel batch normalization over (B,T,F). Training mode normalizes by
/// batch statistics; update_running folds them into the running estimates.
Tensor batch_norm(const Tensor& x, BatchNormState& bn, bool training,
                  bool update_running);

// ---- GRU ----
struct GruDirectionParams {
  Tensor wz, wr, wn;  // [H, Din]
  Tensor uz, ur, un;  // [H, H]
  Tensor bz, br, bn;  // [H]
};

enum class GruDirection { kForward, kBackward };

/// Gate equations: z = sigm(Wz x + Uz h + bz), r = sigm(Wr x + Ur h + br),
/// n = tanh(Wn x + r*(Un h) + bn), h' = (1-z)*n + z*h.
/// Returns per-step hidden states [B,T,H]; the backward direction scans from
/// the last frame and stores each state at its original time index.
Tensor gru_sequence(const Tensor& x, const GruDirectionParams& p, GruDirection dir,
                    const Tensor& h0 = Tensor());

// ---- gradient checking ----
struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
};

/// Compares tape gradients of the scalar f(inputs) against central finite
/// differences, element by element. Relative error uses the
/// max(|analytic|, |numeric|, 1e-8) denominator.
GradCheckReport grad_check(const std::function<Tensor(std::vector<Tensor>&)>& f,
                           std::vector<Tensor> inputs, double step = 1e-5,
                           double tol = 1e-5);

}  // namespace dfd
