#include "dsrgan/eval.hpp"

#include <algorithm>
#include <stdexcept>

namespace dsrgan {

Image tensor_to_image(const Tensor& batch, int index) {
  if (batch.ndim() != 4 || batch.dim(1) != 3)
    throw std::invalid_argument("tensor_to_image: expected [N,3,H,W], got " +
                                shape_str(batch.shape));
  const int h = batch.dim(2), w = batch.dim(3);
  const long off = static_cast<long>(index) * 3 * h * w;
  Image out(w, h);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(y, x, c) = std::clamp(
            0.5 * (batch.values[off + (static_cast<long>(c) * h + y) * w + x] + 1.0), 0.0, 1.0);
  return out;
}

GenSampler model_sampler(DsrganModel& model, Domain domain) {
  GenSampler gen;
  gen.ds_dim = model.config().ds_dim;
  gen.dr_dim = model.config().dr_dim;
  gen.sample = [&model, domain](const std::vector<double>& z_s, const std::vector<double>& z_r) {
    Tensor ts = Tensor::zeros({1, static_cast<int>(z_s.size())});
    for (std::size_t i = 0; i < z_s.size(); ++i) ts.values[static_cast<long>(i)] = z_s[i];
    Tensor tr = Tensor::zeros({1, static_cast<int>(z_r.size())});
    for (std::size_t i = 0; i < z_r.size(); ++i) tr.values[static_cast<long>(i)] = z_r[i];
    return tensor_to_image(model.generate(domain, ts, tr), 0);
  };
  return gen;
}

}  // namespace dsrgan
