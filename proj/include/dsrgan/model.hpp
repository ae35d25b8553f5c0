#ifndef DSRGAN_MODEL_HPP
#define DSRGAN_MODEL_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dsrgan/adam.hpp"
#include "dsrgan/graph.hpp"
#include "dsrgan/rng.hpp"
#include "dsrgan/tensor.hpp"

namespace dsrgan {

enum class Domain { Target, Auxiliary };

struct AblationFlags {
  bool no_aux = false;
  bool no_progressive = false;
  bool no_pra = false;
  bool no_shared_disc = false;
  bool no_lns = false;
  bool no_lrec = false;

  bool operator==(const AblationFlags&) const = default;
  std::string to_string() const;
};

struct ModelConfig {
  int resolution = 32;
  int ds_dim = 64;
  int dr_dim = 16;
  // channel widths taper as (4,4,2,2,1) * base along the pyramid; sized
  // for CPU training at double precision. Renderers run thinner than the
  // structure pyramid so spatial detail has to come from the injected
  // features rather than from the rendering prior.
  int gen_base_channels = 4;
  int render_base_channels = 2;
  int disc_base_channels = 8;
  int shared_feat_dim = 64;
  double init_std = 0.02;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  AblationFlags ablation;

  // Pyramid depth: 5 levels at 32x32 and above (2x2 base at 32), fewer at
  // smaller test resolutions.
  int levels() const;
  int base_extent() const;
  int channels_at(int level) const;         // structure pyramid widths
  int render_channels_at(int level) const;  // rendering generator widths

  bool has_structure_generator() const { return !ablation.no_pra && !ablation.no_aux; }
  bool has_auxiliary() const { return !ablation.no_aux; }
  bool injects_level(int level) const;

  void validate() const;
};

struct Param {
  std::string name;
  Tensor value;
  AdamState opt;
};

// Trainable parameter + running-statistics state for the Fig.-3 style
// architecture: shared structure generator g_s with a feature pyramid, one
// rendering generator per domain with progressive injection, and two
// discriminators whose tail (plus the z_s head) is physically shared.
class DsrganModel {
 public:
  DsrganModel(const ModelConfig& cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }

  // --- graph-building forwards ---
  // Feature pyramid from z_s [N, ds]; one tensor per level, extents
  // doubling up to the image resolution. Requires the structure generator.
  std::vector<Var> structure_forward(Graph& g, Var z_s, BnMode mode);
  // Rendering generator; z_in is z_r under PRA, concat(z_s, z_r) otherwise.
  // Consumes each pyramid level exactly once (only the last under
  // no_progressive). Output in (-1,1)^[N,3,H,W] via tanh.
  Var render_forward(Graph& g, Domain d, Var z_in, const std::vector<Var>& pyramid, BnMode mode);
  Var generate_var(Graph& g, Domain d, Var z_s, Var z_r, BnMode mode);

  struct DiscVars {
    Var prob;
    Var z_r_hat;
    Var z_s_hat;
  };
  // x in [-1,1]^[N,3,H,W] (map real images by 2x-1 first).
  DiscVars discriminate_var(Graph& g, Domain d, Var x);

  // --- eval-mode conveniences over plain tensors ---
  Tensor generate(Domain d, const Tensor& z_s, const Tensor& z_r);
  struct DiscriminatorOutput {
    Tensor prob;     // [N]
    Tensor z_r_hat;  // [N, dr]
    Tensor z_s_hat;  // [N, ds]
  };
  DiscriminatorOutput discriminate(Domain d, const Tensor& x);

  // --- parameters ---
  const std::vector<Param*>& generator_params() const { return gen_params_; }
  const std::vector<Param*>& discriminator_params() const { return disc_params_; }
  std::vector<Param*> all_params() const;
  long parameter_count() const;
  long count_by_prefix(const std::string& prefix) const;
  Param* find_param(const std::string& name) const;
  void set_requires_grad(bool generators, bool discriminators);
  void zero_grad();

  // Named tensors for checkpointing: parameter values, Adam moments and
  // batch-norm running statistics.
  std::vector<std::pair<std::string, Tensor*>> state_tensors();
  std::vector<std::pair<std::string, AdamState*>> optimizer_states();

 private:
  struct BnLayer {
    Param* gamma = nullptr;
    Param* beta = nullptr;
    Tensor running_mean, running_var;
    std::string name;
  };
  struct Dense {
    Param* w = nullptr;
    Param* b = nullptr;  // may be null (bn follows)
  };
  struct Conv {
    Param* k = nullptr;
    Param* b = nullptr;  // may be null
  };
  struct GeneratorNet {
    Dense fc;
    BnLayer* bn0 = nullptr;
    std::vector<Conv> up;            // levels-1 transposed convs
    std::vector<BnLayer*> up_bn;
    Conv out;                        // final 3x3 conv (renderers only)
  };
  struct DiscSpecific {
    Conv conv1, conv2;
    Dense zr_head;
  };
  struct DiscTail {
    Conv conv3;
    Dense fc;
    Dense zs_head;
    Dense out;
  };

  Param* add_param(const std::string& name, Shape shape, bool is_generator, Rng& rng,
                   double init_mean_zero_std, double init_mean = 0.0);
  BnLayer* add_bn(const std::string& name, int channels, bool is_generator, Rng& rng);
  Dense add_dense(const std::string& name, int in, int out, bool is_generator, bool bias,
                  Rng& rng);
  Conv add_conv(const std::string& name, int f, int c, int k, bool is_generator, bool bias,
                Rng& rng);

  Var apply_gen_block(Graph& g, Var x, const Conv& conv, BnLayer* bn, BnMode mode, int stride,
                      int pad, bool transposed);
  Var disc_trunk(Graph& g, Domain d, Var x, Var* second_specific);
  const DiscSpecific& specific(Domain d) const;
  const DiscTail& tail(Domain d) const;

  ModelConfig cfg_;
  std::vector<std::unique_ptr<Param>> params_;
  std::vector<std::unique_ptr<BnLayer>> bn_layers_;
  std::vector<Param*> gen_params_, disc_params_;

  GeneratorNet gs_;
  GeneratorNet grt_, gra_;
  DiscSpecific dt_, da_;
  DiscTail tail_shared_;  // also used as the target tail under no_shared_disc
  DiscTail tail_aux_;     // only under no_shared_disc
};

}  // namespace dsrgan

#endif
