#include "dsrgan/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace dsrgan {

void adam_step(Tensor& param, const Eigen::ArrayXd& grad, AdamState& state,
               const AdamHyper& hyper) {
  const long n = param.size();
  if (state.m.size() != n || state.v.size() != n) {
    if (state.t != 0) throw std::invalid_argument("adam_step: state does not match parameter");
    state.reset(n);
  }
  if (grad.size() != 0 && grad.size() != n)
    throw std::invalid_argument("adam_step: gradient size " + std::to_string(grad.size()) +
                                " does not match parameter size " + std::to_string(n));

  state.t += 1;
  if (grad.size() == 0) {
    state.m *= hyper.beta1;
    state.v *= hyper.beta2;
  } else {
    state.m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * grad;
    state.v = hyper.beta2 * state.v + (1.0 - hyper.beta2) * grad.square();
  }
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  param.values -= hyper.lr * (state.m / c1) / ((state.v / c2).sqrt() + hyper.eps);
}

}  // namespace dsrgan
