#ifndef DSRGAN_ADAM_HPP
#define DSRGAN_ADAM_HPP

#include "dsrgan/tensor.hpp"

namespace dsrgan {

struct AdamHyper {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment state for one parameter tensor.
struct AdamState {
  Eigen::ArrayXd m;
  Eigen::ArrayXd v;
  long t = 0;

  void reset(long size) {
    m = Eigen::ArrayXd::Zero(size);
    v = Eigen::ArrayXd::Zero(size);
    t = 0;
  }
};

// One bias-corrected Adam update of param.values in place. An empty grad is
// treated as all zeros.
void adam_step(Tensor& param, const Eigen::ArrayXd& grad, AdamState& state,
               const AdamHyper& hyper);

}  // namespace dsrgan

#endif
