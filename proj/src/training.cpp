#include "dsrgan/training.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "dsrgan/checkpoint.hpp"
#include "dsrgan/parallel.hpp"
#include "dsrgan/rng.hpp"
#include "dsrgan/run_config.hpp"
#include "dsrgan/synth.hpp"

namespace fs = std::filesystem;

namespace dsrgan {

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.resolution = resolution;
  m.ds_dim = ds_dim;
  m.dr_dim = dr_dim;
  m.ablation = ablation;
  return m;
}

void TrainConfig::validate() const {
  model_config().validate();
  if (batch_size < 2) throw std::invalid_argument("config: batch_size must be >= 2");
  if (total_steps < 0) throw std::invalid_argument("config: total_steps must be >= 0");
  if (lr <= 0.0) throw std::invalid_argument("config: lr must be positive");
  for (double w : {lambda1, lambda2, mu1, mu2})
    if (w < 0.0) throw std::invalid_argument("config: loss weights must be >= 0");
  if (checkpoint_every < 0) throw std::invalid_argument("config: checkpoint_every must be >= 0");
}

std::string StepReport::csv_header() {
  return "step,d_adv_t,d_adv_a,ns_d,rec_d,d_total,g_adv_t,g_adv_a,ns_g,rec_g,g_total,"
         "p_real_t,p_fake_t,p_real_a,p_fake_a";
}

std::string StepReport::csv_row() const {
  char buf[640];
  std::snprintf(buf, sizeof buf,
                "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                "%.17g,%.17g",
                step, d_adv_t, d_adv_a, ns_d, rec_d, d_total, g_adv_t, g_adv_a, ns_g, rec_g,
                g_total, p_real_t, p_fake_t, p_real_a, p_fake_a);
  return buf;
}

DomainStream::DomainStream(std::vector<Image> images, int batch_size, std::uint64_t seed)
    : count_(images.size()), batch_(batch_size), seed_(seed) {
  if (images.empty()) throw std::invalid_argument("domain stream: no images");
  if (static_cast<long>(images.size()) < batch_size)
    throw std::invalid_argument("domain stream: fewer images (" +
                                std::to_string(images.size()) + ") than one batch (" +
                                std::to_string(batch_size) + ")");
  width_ = images[0].width;
  height_ = images[0].height;
  const std::size_t plane = static_cast<std::size_t>(width_) * height_;
  pixels_.resize(count_ * 3 * plane);
  for (std::size_t i = 0; i < count_; ++i) {
    const Image& im = images[i];
    if (im.width != width_ || im.height != height_)
      throw std::invalid_argument("domain stream: mixed image sizes");
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x)
        for (int c = 0; c < 3; ++c) {
          const double v = std::clamp(im.at(y, x, c), 0.0, 1.0);
          pixels_[(i * 3 + static_cast<std::size_t>(c)) * plane + y * width_ + x] =
              static_cast<unsigned char>(std::lround(v * 255.0));
        }
  }
}

Tensor DomainStream::batch(long step) const {
  const long per_epoch = static_cast<long>(count_) / batch_;
  const long epoch = step / per_epoch;
  const long slot = step % per_epoch;

  std::vector<std::uint32_t> order(count_);
  for (std::size_t i = 0; i < count_; ++i) order[i] = static_cast<std::uint32_t>(i);
  Rng rng(mix_seed(seed_, 0x0e9c, static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);

  const std::size_t plane = static_cast<std::size_t>(width_) * height_;
  Tensor out = Tensor::zeros({batch_, 3, height_, width_});
  for (int b = 0; b < batch_; ++b) {
    const std::size_t img = order[static_cast<std::size_t>(slot * batch_ + b)];
    const unsigned char* src = pixels_.data() + img * 3 * plane;
    double* dst = out.values.data() + static_cast<std::size_t>(b) * 3 * plane;
    for (std::size_t i = 0; i < 3 * plane; ++i)
      dst[i] = static_cast<double>(src[i]) * (2.0 / 255.0) - 1.0;
  }
  return out;
}

LatentBatch draw_latents(const TrainConfig& cfg, long step, std::uint64_t phase_tag) {
  Rng rng(mix_seed(cfg.seed, phase_tag, static_cast<std::uint64_t>(step)));
  LatentBatch lat;
  lat.z_s = Tensor::zeros({cfg.batch_size, cfg.ds_dim});
  lat.z_rt = Tensor::zeros({cfg.batch_size, cfg.dr_dim});
  lat.z_ra = Tensor::zeros({cfg.batch_size, cfg.dr_dim});
  for (long i = 0; i < lat.z_s.size(); ++i) lat.z_s.values[i] = rng.uniform_pm1();
  for (long i = 0; i < lat.z_rt.size(); ++i) lat.z_rt.values[i] = rng.uniform_pm1();
  for (long i = 0; i < lat.z_ra.size(); ++i) lat.z_ra.values[i] = rng.uniform_pm1();
  return lat;
}

namespace {

// -E[log p]; probabilities clamped at 1e-7 before the log
Var neg_mean_log(Var p) { return mul_scalar(mean(log_clamped(p)), -1.0); }

double mean_value(Graph& g, Var v) { return g.value(v).values.mean(); }

}  // namespace

AdversarialParts adversarial_losses(Graph& g, DsrganModel& model, Var real_t,
                                    std::optional<Var> real_a, const LatentBatch& latents,
                                    BnMode mode) {
  AdversarialParts out;
  out.has_aux = model.config().has_auxiliary();
  if (out.has_aux != real_a.has_value())
    throw std::invalid_argument(out.has_aux ? "adversarial_losses: auxiliary batch missing"
                                            : "adversarial_losses: auxiliary batch given "
                                              "but the model runs target-only (no_aux)");

  Var z_s = g.constant(latents.z_s);
  Var z_rt = g.constant(latents.z_rt);
  out.fake_t = model.generate_var(g, Domain::Target, z_s, z_rt, mode);
  out.disc_fake_t = model.discriminate_var(g, Domain::Target, out.fake_t);
  out.disc_real_t = model.discriminate_var(g, Domain::Target, real_t);
  out.d_adv_t = add(neg_mean_log(out.disc_real_t.prob),
                    neg_mean_log(one_minus(out.disc_fake_t.prob)));
  out.g_adv_t = neg_mean_log(out.disc_fake_t.prob);
  out.d_loss = out.d_adv_t;
  out.g_loss = out.g_adv_t;
  if (out.has_aux) {
    Var z_ra = g.constant(latents.z_ra);
    out.fake_a = model.generate_var(g, Domain::Auxiliary, z_s, z_ra, mode);
    out.disc_fake_a = model.discriminate_var(g, Domain::Auxiliary, out.fake_a);
    out.disc_real_a = model.discriminate_var(g, Domain::Auxiliary, *real_a);
    out.d_adv_a = add(neg_mean_log(out.disc_real_a.prob),
                      neg_mean_log(one_minus(out.disc_fake_a.prob)));
    out.g_adv_a = neg_mean_log(out.disc_fake_a.prob);
    out.d_loss = add(out.d_adv_t, out.d_adv_a);
    out.g_loss = add(out.g_adv_t, out.g_adv_a);
  }
  return out;
}

Var noise_recon_from_heads(Graph& g, const LatentBatch& latents,
                           const DsrganModel::DiscVars& heads_t,
                           const DsrganModel::DiscVars* heads_a, double mu1, double mu2) {
  Var z_s = g.constant(latents.z_s);
  Var z_rt = g.constant(latents.z_rt);
  Var s_term = mean(row_l2_norm(sub(z_s, heads_t.z_s_hat)));
  Var r_term = mean(row_l2_norm(sub(z_rt, heads_t.z_r_hat)));
  if (heads_a) {
    Var z_ra = g.constant(latents.z_ra);
    s_term = add(s_term, mean(row_l2_norm(sub(z_s, heads_a->z_s_hat))));
    r_term = add(r_term, mean(row_l2_norm(sub(z_ra, heads_a->z_r_hat))));
  }
  return add(mul_scalar(s_term, mu1), mul_scalar(r_term, mu2));
}

Var noise_reconstruction_loss(Graph& g, DsrganModel& model, Var generated_t,
                              std::optional<Var> generated_a, const LatentBatch& latents,
                              double mu1, double mu2) {
  DsrganModel::DiscVars heads_t = model.discriminate_var(g, Domain::Target, generated_t);
  if (generated_a) {
    DsrganModel::DiscVars heads_a = model.discriminate_var(g, Domain::Auxiliary, *generated_a);
    return noise_recon_from_heads(g, latents, heads_t, &heads_a, mu1, mu2);
  }
  return noise_recon_from_heads(g, latents, heads_t, nullptr, mu1, mu2);
}

namespace {

Var recon_one_domain(Graph& g, DsrganModel& model, Domain d, Var real, BnMode mode,
                     bool heads_live) {
  Var zs_hat{nullptr, -1}, zr_hat{nullptr, -1};
  if (heads_live) {
    DsrganModel::DiscVars heads = model.discriminate_var(g, d, real);
    zs_hat = heads.z_s_hat;
    zr_hat = heads.z_r_hat;
  } else {
    DsrganModel::DiscriminatorOutput heads = model.discriminate(d, g.value(real));
    zs_hat = g.constant(heads.z_s_hat);
    zr_hat = g.constant(heads.z_r_hat);
  }
  Var recon = model.generate_var(g, d, zs_hat, zr_hat, mode);
  return mean(absolute(sub(real, recon)));
}

}  // namespace

Var image_reconstruction_loss(Graph& g, DsrganModel& model, Var real_t, std::optional<Var> real_a,
                              BnMode mode, bool heads_live) {
  Var loss = recon_one_domain(g, model, Domain::Target, real_t, mode, heads_live);
  if (model.config().has_auxiliary()) {
    if (!real_a) throw std::invalid_argument("image_reconstruction_loss: auxiliary batch missing");
    loss = add(loss, recon_one_domain(g, model, Domain::Auxiliary, *real_a, mode, heads_live));
  }
  return loss;
}

namespace {

void check_finite(const StepReport& r) {
  const std::pair<const char*, double> terms[] = {
      {"d_adv_t", r.d_adv_t}, {"d_adv_a", r.d_adv_a}, {"L_ns(d)", r.ns_d},
      {"L_rec(d)", r.rec_d},  {"d_total", r.d_total}, {"g_adv_t", r.g_adv_t},
      {"g_adv_a", r.g_adv_a}, {"L_ns(g)", r.ns_g},    {"L_rec(g)", r.rec_g},
      {"g_total", r.g_total}};
  for (auto& [name, v] : terms)
    if (!std::isfinite(v))
      throw std::runtime_error("training halted at step " + std::to_string(r.step) +
                               ": non-finite loss term " + name);
}

void apply_adam(const std::vector<Param*>& params, const AdamHyper& hyper) {
  for (Param* p : params) adam_step(p->value, p->value.grad, p->opt, hyper);
}

}  // namespace

StepReport train_step(DsrganModel& model, const TrainConfig& cfg, const DomainStream& target,
                      const DomainStream* aux, long step) {
  const bool has_aux = model.config().has_auxiliary();
  if (has_aux && aux == nullptr)
    throw std::invalid_argument("train_step: auxiliary stream missing");
  const double l1_eff = cfg.ablation.no_lns ? 0.0 : cfg.lambda1;
  const double l2_eff = cfg.ablation.no_lrec ? 0.0 : cfg.lambda2;
  const AdamHyper hyper{cfg.lr, cfg.beta1, cfg.beta2, 1e-8};

  Tensor real_t = target.batch(step);
  Tensor real_a = has_aux ? aux->batch(step) : Tensor();

  StepReport rep;
  rep.step = step;

  {  // discriminator phase
    model.set_requires_grad(false, true);
    model.zero_grad();
    Graph g;
    LatentBatch lat = draw_latents(cfg, step, 0xd15c);
    Var vreal_t = g.constant(real_t);
    std::optional<Var> vreal_a;
    if (has_aux) vreal_a = g.constant(real_a);
    AdversarialParts adv = adversarial_losses(g, model, vreal_t, vreal_a, lat, BnMode::Train);
    Var ns = noise_recon_from_heads(g, lat, adv.disc_fake_t,
                                    has_aux ? &adv.disc_fake_a : nullptr, cfg.mu1, cfg.mu2);
    Var rec = image_reconstruction_loss(g, model, vreal_t, vreal_a, BnMode::Train,
                                        /*heads_live=*/true);
    Var total = add(adv.d_loss, add(mul_scalar(ns, l1_eff), mul_scalar(rec, l2_eff)));
    g.backward(total);
    apply_adam(model.discriminator_params(), hyper);

    rep.d_adv_t = g.value(adv.d_adv_t).values[0];
    rep.d_adv_a = has_aux ? g.value(adv.d_adv_a).values[0] : 0.0;
    rep.ns_d = g.value(ns).values[0];
    rep.rec_d = g.value(rec).values[0];
    rep.d_total = g.value(total).values[0];
    rep.p_real_t = mean_value(g, adv.disc_real_t.prob);
    rep.p_fake_t = mean_value(g, adv.disc_fake_t.prob);
    rep.p_real_a = has_aux ? mean_value(g, adv.disc_real_a.prob) : 0.0;
    rep.p_fake_a = has_aux ? mean_value(g, adv.disc_fake_a.prob) : 0.0;
  }

  {  // generator phase, fresh latents
    model.set_requires_grad(true, false);
    model.zero_grad();
    Graph g;
    LatentBatch lat = draw_latents(cfg, step, 0x9e4e);
    Var vreal_t = g.constant(real_t);
    std::optional<Var> vreal_a;
    if (has_aux) vreal_a = g.constant(real_a);
    AdversarialParts adv = adversarial_losses(g, model, vreal_t, vreal_a, lat, BnMode::Train);
    Var ns = noise_recon_from_heads(g, lat, adv.disc_fake_t,
                                    has_aux ? &adv.disc_fake_a : nullptr, cfg.mu1, cfg.mu2);
    Var rec = image_reconstruction_loss(g, model, vreal_t, vreal_a, BnMode::Train,
                                        /*heads_live=*/false);
    Var total = add(adv.g_loss, add(mul_scalar(ns, l1_eff), mul_scalar(rec, l2_eff)));
    g.backward(total);
    apply_adam(model.generator_params(), hyper);

    rep.g_adv_t = g.value(adv.g_adv_t).values[0];
    rep.g_adv_a = has_aux ? g.value(adv.g_adv_a).values[0] : 0.0;
    rep.ns_g = g.value(ns).values[0];
    rep.rec_g = g.value(rec).values[0];
    rep.g_total = g.value(total).values[0];
  }

  check_finite(rep);
  return rep;
}

std::vector<Image> load_domain_images(const std::string& data_dir, const char* domain,
                                      int resolution) {
  const std::string dir = (fs::path(data_dir) / domain).string();
  return ingest_folder(dir, resolution);
}

namespace {

long run_loop(const TrainConfig& cfg, const std::string& data_dir, const std::string& out_dir,
              DsrganModel& model, long start_step) {
  cfg.validate();
  fs::create_directories(out_dir);
  const std::uint64_t cfg_hash = fnv1a64(canonical_config_text(cfg));

  DomainStream target(load_domain_images(data_dir, "target", cfg.resolution), cfg.batch_size,
                      mix_seed(cfg.seed, 0x7a26));
  std::optional<DomainStream> aux;
  if (!cfg.ablation.no_aux)
    aux.emplace(load_domain_images(data_dir, "aux", cfg.resolution), cfg.batch_size,
                mix_seed(cfg.seed, 0xa0a));

  std::ofstream csv(fs::path(out_dir) / "training_log.csv");
  csv << StepReport::csv_header() << "\n";

  auto save = [&](long step) {
    const std::string name = "step_" + std::to_string(step) + ".ckpt";
    save_checkpoint((fs::path(out_dir) / name).string(), model, cfg_hash,
                    static_cast<std::uint64_t>(step));
    std::ofstream latest(fs::path(out_dir) / "latest");
    latest << step << "\n";
  };

  if (start_step == 0) save(0);
  for (long step = start_step + 1; step <= cfg.total_steps; ++step) {
    StepReport rep = train_step(model, cfg, target, aux ? &*aux : nullptr, step);
    csv << rep.csv_row() << "\n";
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.total_steps)
      save(step);
  }
  if (cfg.total_steps > start_step) save(cfg.total_steps);
  csv.flush();
  if (!csv) throw std::runtime_error("failed writing training log under " + out_dir);
  return cfg.total_steps;
}

}  // namespace

long run_training(const TrainConfig& cfg, const std::string& data_dir,
                  const std::string& out_dir) {
  DsrganModel model(cfg.model_config(), cfg.seed);
  return run_loop(cfg, data_dir, out_dir, model, 0);
}

long resume_training(const TrainConfig& cfg, const std::string& data_dir,
                     const std::string& out_dir, const std::string& checkpoint_file) {
  DsrganModel model(cfg.model_config(), cfg.seed);
  const std::uint64_t cfg_hash = fnv1a64(canonical_config_text(cfg));
  const long step = static_cast<long>(load_checkpoint(checkpoint_file, model, cfg_hash));
  return run_loop(cfg, data_dir, out_dir, model, step);
}

}  // namespace dsrgan
