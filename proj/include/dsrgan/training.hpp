#ifndef DSRGAN_TRAINING_HPP
#define DSRGAN_TRAINING_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dsrgan/image.hpp"
#include "dsrgan/model.hpp"

namespace dsrgan {

struct TrainConfig {
  int resolution = 32;
  int ds_dim = 64;
  int dr_dim = 16;
  int batch_size = 32;
  long total_steps = 20000;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double mu1 = 1.0;
  double mu2 = 1.0;
  std::uint64_t seed = 1;
  long checkpoint_every = 5000;
  AblationFlags ablation;

  ModelConfig model_config() const;
  void validate() const;
};

// One row of the training log; the reported totals are exactly the sums of
// their reported components under the effective loss weights.
struct StepReport {
  long step = 0;
  double d_adv_t = 0, d_adv_a = 0, ns_d = 0, rec_d = 0, d_total = 0;
  double g_adv_t = 0, g_adv_a = 0, ns_g = 0, rec_g = 0, g_total = 0;
  double p_real_t = 0, p_fake_t = 0, p_real_a = 0, p_fake_a = 0;

  static std::string csv_header();
  std::string csv_row() const;
};

// Independent iterator over one image domain. Epoch order is a pure
// function of (seed, epoch index), so any step's batch can be recomputed
// without history; training receives two of these and never sees the
// dataset manifest pairing.
class DomainStream {
 public:
  DomainStream(std::vector<Image> images, int batch_size, std::uint64_t seed);

  // [B,3,H,W] in [-1,1], for the given global step.
  Tensor batch(long step) const;
  long size() const { return static_cast<long>(count_); }

 private:
  std::size_t count_ = 0;
  int width_ = 0, height_ = 0, batch_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<unsigned char> pixels_;  // 8-bit CHW planes per image
};

struct LatentBatch {
  Tensor z_s;   // [B, ds]
  Tensor z_rt;  // [B, dr]
  Tensor z_ra;  // [B, dr]
};
LatentBatch draw_latents(const TrainConfig& cfg, long step, std::uint64_t phase_tag);

// --- loss builders (graph pieces; also used standalone in tests) ---

struct AdversarialParts {
  Var d_loss;  // minimax discriminator loss, both domains
  Var g_loss;  // non-saturating generator loss
  Var d_adv_t, d_adv_a, g_adv_t, g_adv_a;
  Var fake_t, fake_a;
  DsrganModel::DiscVars disc_fake_t, disc_fake_a, disc_real_t, disc_real_a;
  bool has_aux = false;
};

// Eq.-1 style joint adversarial losses over one batch per domain. real
// batches are [B,3,H,W] in [-1,1]; probabilities are clamped at 1e-7
// before the log.
AdversarialParts adversarial_losses(Graph& g, DsrganModel& model, Var real_t,
                                    std::optional<Var> real_a, const LatentBatch& latents,
                                    BnMode mode);

// mu1*(||z_s - zst|| + ||z_s - zsa||) + mu2*(||z_rt - zrt|| + ||z_ra - zra||),
// L2 per sample, batch-averaged, from reconstruction heads read off the
// discriminators applied to the generated samples.
Var noise_reconstruction_loss(Graph& g, DsrganModel& model, Var generated_t,
                              std::optional<Var> generated_a, const LatentBatch& latents,
                              double mu1, double mu2);
// Same form, from already-computed head outputs.
Var noise_recon_from_heads(Graph& g, const LatentBatch& latents,
                           const DsrganModel::DiscVars& heads_t,
                           const DsrganModel::DiscVars* heads_a, double mu1, double mu2);

// L1 reconstruction of real images through the discriminators' latent
// predictions: x~ = G(zs_hat, zr_hat), batch- and pixel-averaged.
// heads_live: gradients flow through the discriminator heads (the
// discriminator-phase wiring); otherwise the predictions are detached.
Var image_reconstruction_loss(Graph& g, DsrganModel& model, Var real_t, std::optional<Var> real_a,
                              BnMode mode, bool heads_live);

StepReport train_step(DsrganModel& model, const TrainConfig& cfg, const DomainStream& target,
                      const DomainStream* aux, long step);

// Fresh run: checkpoints (step_<N>.ckpt + latest) and training_log.csv under
// out_dir. Returns the final step.
long run_training(const TrainConfig& cfg, const std::string& data_dir,
                  const std::string& out_dir);
// Continue from a checkpoint; subsequent reports are identical to an
// uninterrupted run with the same config and dataset.
long resume_training(const TrainConfig& cfg, const std::string& data_dir,
                     const std::string& out_dir, const std::string& checkpoint_file);

// Loads target/ (and aux/ unless no_aux) under data_dir into streams.
std::vector<Image> load_domain_images(const std::string& data_dir, const char* domain,
                                      int resolution);

}  // namespace dsrgan

#endif
