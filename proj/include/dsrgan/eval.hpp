#ifndef DSRGAN_EVAL_HPP
#define DSRGAN_EVAL_HPP

#include "dsrgan/metrics.hpp"
#include "dsrgan/model.hpp"

namespace dsrgan {

// One sample of a [N,3,H,W] tanh-range tensor as an image in [0,1].
Image tensor_to_image(const Tensor& batch, int index);

// Eval-mode sampler over the model's generator for one domain; the model
// must outlive the sampler.
GenSampler model_sampler(DsrganModel& model, Domain domain);

}  // namespace dsrgan

#endif
