#include <stdexcept>

#include "dfd/tensor.hpp"

namespace dfd {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Tensor gru_sequence(const Tensor& x, const GruDirectionParams& p, GruDirection dir,
                    const Tensor& h0) {
  require(x.rank() == 3, "gru_sequence expects [B,T,Din]");
  const int B = x.dim(0), T = x.dim(1), Din = x.dim(2);
  require(T >= 1, "gru_sequence needs at least one step");
  const int H = p.wz.dim(0);
  require(p.wz.rank() == 2 && p.wz.dim(1) == Din, "wz shape mismatch");
  require(p.wr.dim(0) == H && p.wr.dim(1) == Din, "wr shape mismatch");
  require(p.wn.dim(0) == H && p.wn.dim(1) == Din, "wn shape mismatch");
  require(p.uz.dim(0) == H && p.uz.dim(1) == H, "uz shape mismatch");
  require(p.ur.dim(0) == H && p.ur.dim(1) == H, "ur shape mismatch");
  require(p.un.dim(0) == H && p.un.dim(1) == H, "un shape mismatch");
  require(p.bz.dim(0) == H && p.br.dim(0) == H && p.bn.dim(0) == H, "bias shape mismatch");

  Tensor h = h0.defined() ? h0 : Tensor::zeros({B, H});
  require(h.rank() == 2 && h.dim(0) == B && h.dim(1) == H, "h0 shape mismatch");

  std::vector<Tensor> states(T);
  for (int step = 0; step < T; ++step) {
    const int t = dir == GruDirection::kForward ? step : T - 1 - step;
    Tensor xt = select_time(x, t);
    Tensor z = sigmoid(add(linear(xt, p.wz, p.bz), linear(h, p.uz, Tensor())));
    Tensor r = sigmoid(add(linear(xt, p.wr, p.br), linear(h, p.ur, Tensor())));
    Tensor n = tanh(add(linear(xt, p.wn, p.bn), mul(r, linear(h, p.un, Tensor()))));
    h = add(mul(affine(z, -1.0, 1.0), n), mul(z, h));
    states[t] = h;
  }
  return stack_time(states);
}

}  // namespace dfd
