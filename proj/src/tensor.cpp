#include "dfd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dfd {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void require(bool cond, const char* msg) {
  if (!cond) fail(msg);
}

void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

thread_local Tape* g_active_tape = nullptr;

bool tracking(const Tensor& a) { return Tape::active() != nullptr && a.requires_grad(); }

// Splits a shape around `axis` into (outer, n, inner) extents for reductions.
struct AxisSplit {
  long long outer = 1;
  long long n = 1;
  long long inner = 1;
};

AxisSplit split_axis(const Shape& shape, int axis) {
  require(axis >= 0 && axis < static_cast<int>(shape.size()), "axis out of range");
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (int i = axis + 1; i < static_cast<int>(shape.size()); ++i) s.inner *= shape[i];
  return s;
}

Shape drop_axis(const Shape& shape, int axis) {
  Shape out;
  for (int i = 0; i < static_cast<int>(shape.size()); ++i)
    if (i != axis) out.push_back(shape[i]);
  return out;
}

}  // namespace

long long shape_size(const Shape& shape) {
  long long n = 1;
  for (int d : shape) {
    if (d <= 0) fail("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

// ---- Tensor ----

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
  const long long n = shape_size(shape);
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->data.assign(static_cast<std::size_t>(n), fill);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  const long long n = shape_size(shape);
  if (n != static_cast<long long>(values.size()))
    fail("tensor data length does not match shape");
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return Tensor(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  return Tensor(std::move(shape), value, requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, value, requires_grad);
}

Tensor Tensor::uniform(Rng& rng, Shape shape, double lo, double hi, bool requires_grad) {
  Tensor t(std::move(shape), 0.0, requires_grad);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

Tensor::Impl& Tensor::impl() {
  if (!impl_) fail("undefined tensor");
  return *impl_;
}

const Tensor::Impl& Tensor::impl() const {
  if (!impl_) fail("undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }
int Tensor::rank() const { return static_cast<int>(impl().shape.size()); }

int Tensor::dim(int axis) const {
  const Shape& s = impl().shape;
  require(axis >= 0 && axis < static_cast<int>(s.size()), "axis out of range");
  return s[axis];
}

long long Tensor::size() const { return static_cast<long long>(impl().data.size()); }

std::vector<double>& Tensor::data() { return impl().data; }
const std::vector<double>& Tensor::data() const { return impl().data; }

double Tensor::value() const {
  if (size() != 1) fail("value() requires a scalar tensor");
  return impl().data[0];
}

long long Tensor::flat_index(const int* idx, std::size_t n) const {
  const Shape& s = impl().shape;
  if (n != s.size()) fail("index rank does not match tensor rank");
  long long off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (idx[i] < 0 || idx[i] >= s[i]) fail("index out of bounds");
    off = off * s[i] + idx[i];
  }
  return off;
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

Tensor& Tensor::set_requires_grad(bool enabled) {
  impl().requires_grad = enabled;
  return *this;
}

bool Tensor::has_grad() const { return !impl().grad.empty(); }

std::vector<double>& Tensor::grad() {
  Impl& im = impl();
  if (im.grad.empty()) im.grad.assign(im.data.size(), 0.0);
  return im.grad;
}

const std::vector<double>* Tensor::grad_ptr() const {
  const Impl& im = impl();
  return im.grad.empty() ? nullptr : &im.grad;
}

void Tensor::zero_grad() { impl().grad.clear(); }

Tensor Tensor::clone() const {
  Tensor t(impl().shape, impl().data, impl().requires_grad);
  return t;
}

Tensor Tensor::detach() const {
  Tensor t(impl().shape, impl().data, false);
  return t;
}

// ---- Tape ----

Tape::Tape() {
  prev_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> step) { nodes_.push_back(std::move(step)); }

void backward(Tape& tape, const Tensor& loss) {
  if (loss.size() != 1) fail("backward requires a scalar loss");
  if (tape.consumed_) throw std::runtime_error("tape already consumed by backward");
  Tensor seed = loss;
  seed.grad()[0] += 1.0;
  for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) (*it)();
  tape.consumed_ = true;
}

// ---- elementwise ----

namespace {

void check_same_shape(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) fail("shape mismatch between operands");
}

// y = f(x) elementwise with dy/dx given per element.
Tensor unary_op(const Tensor& x, const std::function<double(double)>& f,
                const std::function<double(double, double)>& dfdx_of_x_and_y) {
  Tensor out(x.shape());
  const auto& xd = x.data();
  auto& od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = f(xd[i]);
  if (tracking(x)) {
    out.set_requires_grad(true);
    Tape::active()->record([x = x, out = out, dfdx_of_x_and_y]() mutable {
      const std::vector<double>* go = out.grad_ptr();
      if (!go) return;
      auto& gx = x.grad();
      const auto& xd = x.data();
      const auto& od = out.data();
      for (std::size_t i = 0; i < gx.size(); ++i)
        gx[i] += (*go)[i] * dfdx_of_x_and_y(xd[i], od[i]);
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b);
  Tensor out(a.shape());
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& od = out.data();
  for (std::size_t i = 0; i < ad.size(); ++i) od[i] = ad[i] + bd[i];
  if (tracking(a) || tracking(b)) {
    out.set_requires_grad(true);
    Tape::active()->record([a = a, b = b, out = out]() mutable {
      const std::vector<double>* go = out.grad_ptr();
      if (!go) return;
      if (a.requires_grad()) axpy(1.0, *go, a.grad());
      if (b.requires_grad()) axpy(1.0, *go, b.grad());
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b);
  Tensor out(a.shape());
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& od = out.data();
  for (std::size_t i = 0; i < ad.size(); ++i) od[i] = ad[i] - bd[i];
  if (tracking(a) || tracking(b)) {
    out.set_requires_grad(true);
    Tape::active()->record([a = a, b = b, out = out]() mutable {
      const std::vector<double>* go = out.grad_ptr();
      if (!go) return;
      if (a.requires_grad()) axpy(1.0, *go, a.grad());
      if (b.requires_grad()) axpy(-1.0, *go, b.grad());
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b);
  Tensor out(a.shape());
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& od = out.data();
  for (std::size_t i = 0; i < ad.size(); ++i) od[i] = ad[i] * bd[i];
  if (tracking(a) || tracking(b)) {
    out.set_requires_grad(true);
    Tape::active()->record([a = a, b = b, out = out]() mutable {
      const std::vector<double>* go = out.grad_ptr();
      if (!go) return;
      if (a.requires_grad()) {
        auto& ga = a.grad();
        const auto& bd = b.data();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += (*go)[i] * bd[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        const auto& ad = a.data();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += (*go)[i] * ad[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) { return affine(a, s, 0.0); }

Tensor affine(const Tensor& a, double m, double c) {
  Tensor out(a.shape());
  const auto& ad = a.data();
  auto& od = out.data();
  for (std::size_t i = 0; i < ad.size(); ++i) od[i] = m * ad[i] + c;
  if (tracking(a)) {
    out.set_requires_grad(true);
    Tape::active()->record([a = a, out = out, m]() mutable {
      const std::vector<double>* go = out.grad_ptr();
      if (!go) return;
      axpy(m, *go, a.grad());
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& x) {
  return unary_op(
      x,
      [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v, double) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
      });
}

// ---- reductions ----

Tensor sum_all(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (tracking(x)) {
    out.set_requires_grad(true);
    Tape::active()->record([x = x, out = out]() mutable {
      const std::vector<double>* go = out.grad_ptr();
      if (!go) return;
      auto& gx = x.grad();
      for (double& g : gx) g += (*go)[0];
    });
  }
  return out;
}

namespace {

Tensor reduce_axis_impl(const Tensor& x, int axis, bool mean) {
  const AxisSplit s = split_axis(x.shape(), axis);
  Tensor out(drop_axis(x.shape(), axis));
  const auto& xd = x.data();
  auto& od = out.data();
  const double w = mean ? 1.0 / static_cast<double>(s.n) : 1.0;
  for (long long o = 0; o < s.outer; ++o)
    for (long long k = 0; k < s.n; ++k) {
      const double* src = xd.data() + (o * s.n + k) * s.inner;
      double* dst = od.data() + o * s.inner;
      for (long long i = 0; i < s.inner; ++i) dst[i] += w * src[i];
    }
  if (tracking(x)) {
    out.set_requires_grad(true);
    Tape::active()->record([x = x, out = out, s, w]() mutable {
      const std::vector<double>* go = out.grad_ptr();
      if (!go) return;
      auto& gx = x.grad();
      for (long long o = 0; o < s.outer; ++o)
        for (long long k = 0; k < s.n; ++k) {
          double* dst = gx.data() + (o * s.n + k) * s.inner;
          const double* src = go->data() + o * s.inner;
          for (long long i = 0; i < s.inner; ++i) dst[i] += w * src[i];
        }
    });
  }
  return out;
}

}  // namespace

Tensor reduce_sum_axis(const Tensor& x, int axis) { return reduce_axis_impl(x, axis, false); }
Tensor reduce_mean_axis(const Tensor& x, int axis) { return reduce_axis_impl(x, axis, true); }

Tensor softmax_axis(const Tensor& x, int axis, double temperature) {
  if (!(temperature > 0.0)) fail("softmax temperature must be positive");
  const AxisSplit s = split_axis(x.shape(), axis);
  Tensor out(x.shape());
  const auto& xd = x.data();
  auto& od = out.data();
  for (long long o = 0; o < s.outer; ++o)
    for (long long i = 0; i < s.inner; ++i) {
      const long long base = o * s.n * s.inner + i;
      double m = xd[base];
      for (long long k = 1; k < s.n; ++k) m = std::max(m, xd[base + k * s.inner]);
      double z = 0.0;
      for (long long k = 0; k < s.n; ++k) {
        const double e = std::exp((xd[base + k * s.inner] - m) / temperature);
        od[base + k * s.inner] = e;
        z += e;
      }
      for (long long k = 0; k < s.n; ++k) od[base + k * s.inner] /= z;
    }
  if (tracking(x)) {
    out.set_requires_grad(true);
    Tape::active()->record([x = x, out = out, s, temperature]() mutable {
      const std::vector<double>* go = out.grad_ptr();
      if (!go) return;
      auto& gx = x.grad();
      const auto& od = out.data();
      for (long long o = 0; o < s.outer; ++o)
        for (long long i = 0; i < s.inner; ++i) {
          const long long base = o * s.n * s.inner + i;
          double dot = 0.0;
          for (long long k = 0; k < s.n; ++k)
            dot += (*go)[base + k * s.inner] * od[base + k * s.inner];
          for (long long k = 0; k < s.n; ++k) {
            const long long p = base + k * s.inner;
            gx[p] += od[p] * ((*go)[p] - dot) / temperature;
          }
        }
    });
  }
  return out;
}

// ---- shape ----

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_size(new_shape) != x.size()) fail("reshape size mismatch");
  Tensor out(std::move(new_shape), x.data());
  if (tracking(x)) {
    out.set_requires_grad(true);
    Tape::active()->record([x = x, out = out]() mutable {
      const std::vector<double>* go = out.grad_ptr();
      if (!go) return;
      axpy(1.0, *go, x.grad());
    });
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  require(a.rank() == b.rank(), "concat rank mismatch");
  require(axis >= 0 && axis < a.rank(), "axis out of range");
  for (int i = 0; i < a.rank(); ++i)
    if (i != axis && a.dim(i) != b.dim(i)) fail("concat shape mismatch off the axis");
  Shape out_shape = a.shape();
  out_shape[axis] += b.dim(axis);
  Tensor out(out_shape);
  const AxisSplit sa = split_axis(a.shape(), axis);
  const long long na = a.dim(axis), nb = b.dim(axis);
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& od = out.data();
  for (long long o = 0; o < sa.outer; ++o) {
    std::copy(ad.begin() + o * na * sa.inner, ad.begin() + (o + 1) * na * sa.inner,
              od.begin() + o * (na + nb) * sa.inner);
    std::copy(bd.begin() + o * nb * sa.inner, bd.begin() + (o + 1) * nb * sa.inner,
              od.begin() + (o * (na + nb) + na) * sa.inner);
  }
  if (tracking(a) || tracking(b)) {
    out.set_requires_grad(true);
    Tape::active()->record([a = a, b = b, out = out, sa, na, nb]() mutable {
      const std::vector<double>* go = out.grad_ptr();
      if (!go) return;
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (long long o = 0; o < sa.outer; ++o)
          for (long long i = 0; i < na * sa.inner; ++i)
            ga[o * na * sa.inner + i] += (*go)[o * (na + nb) * sa.inner + i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (long long o = 0; o < sa.outer; ++o)
          for (long long i = 0; i < nb * sa.inner; ++i)
            gb[o * nb * sa.inner + i] += (*go)[(o * (na + nb) + na) * sa.inner + i];
      }
    });
  }
  return out;
}

Tensor select_time(const Tensor& x, int t) {
  require(x.rank() == 3, "select_time expects [B,T,D]");
  const int B = x.dim(0), T = x.dim(1), D = x.dim(2);
  require(t >= 0 && t < T, "time index out of range");
  Tensor out(Shape{B, D});
  const auto& xd = x.data();
  auto& od = out.data();
  for (int b = 0; b < B; ++b)
    std::copy(xd.begin() + (static_cast<long long>(b) * T + t) * D,
              xd.begin() + (static_cast<long long>(b) * T + t + 1) * D,
              od.begin() + static_cast<long long>(b) * D);
  if (tracking(x)) {
    out.set_requires_grad(true);
    Tape::active()->record([x = x, out = out, B, T, D, t]() mutable {
      const std::vector<double>* go = out.grad_ptr();
      if (!go) return;
      auto& gx = x.grad();
      for (int b = 0; b < B; ++b)
        for (int d = 0; d < D; ++d)
          gx[(static_cast<long long>(b) * T + t) * D + d] +=
              (*go)[static_cast<long long>(b) * D + d];
    });
  }
  return out;
}

Tensor stack_time(const std::vector<Tensor>& steps) {
  require(!steps.empty(), "stack_time needs at least one step");
  const int B = steps[0].dim(0), D = steps[0].dim(1);
  const int T = static_cast<int>(steps.size());
  bool any_grad = false;
  for (const Tensor& s : steps) {
    require(s.rank() == 2 && s.dim(0) == B && s.dim(1) == D, "stack_time shape mismatch");
    any_grad = any_grad || tracking(s);
  }
  Tensor out(Shape{B, T, D});
  auto& od = out.data();
  for (int t = 0; t < T; ++t) {
    const auto& sd = steps[t].data();
    for (int b = 0; b < B; ++b)
      std::copy(sd.begin() + static_cast<long long>(b) * D,
                sd.begin() + static_cast<long long>(b + 1) * D,
                od.begin() + (static_cast<long long>(b) * T + t) * D);
  }
  if (any_grad) {
    out.set_requires_grad(true);
    std::vector<Tensor> captured = steps;
    Tape::active()->record([captured, out, B, T, D]() mutable {
      const std::vector<double>* go = out.grad_ptr();
      if (!go) return;
      for (int t = 0; t < T; ++t) {
        if (!captured[t].requires_grad()) continue;
        auto& gs = captured[t].grad();
        for (int b = 0; b < B; ++b)
          for (int d = 0; d < D; ++d)
            gs[static_cast<long long>(b) * D + d] +=
                (*go)[(static_cast<long long>(b) * T + t) * D + d];
      }
    });
  }
  return out;
}

// ---- linear maps ----

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.rank() == 2 && w.rank() == 2, "linear expects [N,D] and [H,D]");
  const int N = x.dim(0), D = x.dim(1), H = w.dim(0);
  require(w.dim(1) == D, "linear weight/input width mismatch");
  if (b.defined()) require(b.rank() == 1 && b.dim(0) == H, "linear bias shape mismatch");
  Tensor out(Shape{N, H});
  const auto& xd = x.data();
  const auto& wd = w.data();
  auto& od = out.data();
  for (int n = 0; n < N; ++n)
    for (int h = 0; h < H; ++h) {
      double acc = b.defined() ? b.data()[h] : 0.0;
      const double* xr = xd.data() + static_cast<long long>(n) * D;
      const double* wr = wd.data() + static_cast<long long>(h) * D;
      for (int d = 0; d < D; ++d) acc += xr[d] * wr[d];
      od[static_cast<long long>(n) * H + h] = acc;
    }
  if (tracking(x) || tracking(w) || (b.defined() && tracking(b))) {
    out.set_requires_grad(true);
    Tape::active()->record([x = x, w = w, b = b, out = out, N, D, H]() mutable {
      const std::vector<double>* go = out.grad_ptr();
      if (!go) return;
      if (x.requires_grad()) {
        auto& gx = x.grad();
        const auto& wd = w.data();
        for (int n = 0; n < N; ++n)
          for (int h = 0; h < H; ++h) {
            const double g = (*go)[static_cast<long long>(n) * H + h];
            if (g == 0.0) continue;
            const double* wr = wd.data() + static_cast<long long>(h) * D;
            double* gxr = gx.data() + static_cast<long long>(n) * D;
            for (int d = 0; d < D; ++d) gxr[d] += g * wr[d];
          }
      }
      if (w.requires_grad()) {
        auto& gw = w.grad();
        const auto& xd = x.data();
        for (int n = 0; n < N; ++n)
          for (int h = 0; h < H; ++h) {
            const double g = (*go)[static_cast<long long>(n) * H + h];
            if (g == 0.0) continue;
            const double* xr = xd.data() + static_cast<long long>(n) * D;
            double* gwr = gw.data() + static_cast<long long>(h) * D;
            for (int d = 0; d < D; ++d) gwr[d] += g * xr[d];
          }
      }
      if (b.defined() && b.requires_grad()) {
        auto& gb = b.grad();
        for (int n = 0; n < N; ++n)
          for (int h = 0; h < H; ++h) gb[h] += (*go)[static_cast<long long>(n) * H + h];
      }
    });
  }
  return out;
}

Tensor channel_linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.rank() == 3 && w.rank() == 2, "channel_linear expects [B,C,F] and [O,C]");
  const int B = x.dim(0), C = x.dim(1), F = x.dim(2), O = w.dim(0);
  require(w.dim(1) == C, "channel_linear weight/channel mismatch");
  if (b.defined()) require(b.rank() == 1 && b.dim(0) == O, "channel_linear bias mismatch");
  Tensor out(Shape{B, O, F});
  const auto& xd = x.data();
  const auto& wd = w.data();
  auto& od = out.data();
  for (int bb = 0; bb < B; ++bb)
    for (int o = 0; o < O; ++o)
      for (int f = 0; f < F; ++f) {
        double acc = b.defined() ? b.data()[o] : 0.0;
        for (int c = 0; c < C; ++c)
          acc += wd[static_cast<long long>(o) * C + c] *
                 xd[(static_cast<long long>(bb) * C + c) * F + f];
        od[(static_cast<long long>(bb) * O + o) * F + f] = acc;
      }
  if (tracking(x) || tracking(w) || (b.defined() && tracking(b))) {
    out.set_requires_grad(true);
    Tape::active()->record([x = x, w = w, b = b, out = out, B, C, F, O]() mutable {
      const std::vector<double>* go = out.grad_ptr();
      if (!go) return;
      for (int bb = 0; bb < B; ++bb)
        for (int o = 0; o < O; ++o)
          for (int f = 0; f < F; ++f) {
            const double g = (*go)[(static_cast<long long>(bb) * O + o) * F + f];
            if (g == 0.0) continue;
            if (x.requires_grad()) {
              auto& gx = x.grad();
              const auto& wd = w.data();
              for (int c = 0; c < C; ++c)
                gx[(static_cast<long long>(bb) * C + c) * F + f] +=
                    g * wd[static_cast<long long>(o) * C + c];
            }
            if (w.requires_grad()) {
              auto& gw = w.grad();
              const auto& xd = x.data();
              for (int c = 0; c < C; ++c)
                gw[static_cast<long long>(o) * C + c] +=
                    g * xd[(static_cast<long long>(bb) * C + c) * F + f];
            }
            if (b.defined() && b.requires_grad()) b.grad()[o] += g;
          }
    });
  }
  return out;
}

Tensor bce_mean(const Tensor& probs, const Tensor& targets, double eps) {
  check_same_shape(probs, targets);
  const auto& pd = probs.data();
  const auto& td = targets.data();
  const double n = static_cast<double>(pd.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pd.size(); ++i) {
    const double p = std::clamp(pd[i], eps, 1.0 - eps);
    acc -= td[i] * std::log(p) + (1.0 - td[i]) * std::log(1.0 - p);
  }
  Tensor out = Tensor::scalar(acc / n);
  if (tracking(probs)) {
    out.set_requires_grad(true);
    Tape::active()->record([probs = probs, targets = targets, out = out, eps, n]() mutable {
      const std::vector<double>* go = out.grad_ptr();
      if (!go) return;
      auto& gp = probs.grad();
      const auto& pd = probs.data();
      const auto& td = targets.data();
      for (std::size_t i = 0; i < gp.size(); ++i) {
        if (pd[i] <= eps || pd[i] >= 1.0 - eps) continue;  // clamped region
        gp[i] += (*go)[0] * (pd[i] - td[i]) / (pd[i] * (1.0 - pd[i]) * n);
      }
    });
  }
  return out;
}

// ---- gradient checking ----

namespace {

double eval_scalar(const std::function<Tensor(std::vector<Tensor>&)>& f,
                   std::vector<Tensor>& inputs) {
  Tensor out = f(inputs);
  if (out.size() != 1) fail("grad_check function must return a scalar");
  return out.value();
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor(std::vector<Tensor>&)>& f,
                           std::vector<Tensor> inputs, double step, double tol) {
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    Tensor loss = f(inputs);
    if (loss.size() != 1) fail("grad_check function must return a scalar");
    backward(tape, loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (Tensor& t : inputs) {
    const std::vector<double>* g = t.grad_ptr();
    analytic.push_back(g ? *g : std::vector<double>(t.size(), 0.0));
  }

  GradCheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto& values = inputs[i].data();
    for (std::size_t e = 0; e < values.size(); ++e) {
      const double orig = values[e];
      values[e] = orig + step;
      const double lp = eval_scalar(f, inputs);
      values[e] = orig - step;
      const double lm = eval_scalar(f, inputs);
      values[e] = orig;
      const double numeric = (lp - lm) / (2.0 * step);
      const double a = analytic[i][e];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      report.max_rel_err = std::max(report.max_rel_err, std::fabs(a - numeric) / denom);
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace dfd
