// Command-line front end: dataset generation, training, grid emission and
// ND evaluation, each a pure function of its flags, config file and input
// bytes. Exit codes: 0 success, 2 usage/config error, 1 runtime failure.
#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "dsrgan/checkpoint.hpp"
#include "dsrgan/eval.hpp"
#include "dsrgan/metrics.hpp"
#include "dsrgan/parallel.hpp"
#include "dsrgan/png_io.hpp"
#include "dsrgan/run_config.hpp"
#include "dsrgan/synth.hpp"
#include "dsrgan/training.hpp"

namespace fs = std::filesystem;
using namespace dsrgan;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int cmd_make_dataset(const std::string& out, int count, std::uint64_t seed, int resolution,
                     bool force) {
  if (count < 1) throw UsageError("--count must be at least 1");
  BuildResult res = build_dataset(out, count, seed, resolution, force);
  std::cout << "wrote " << res.count << " target + " << res.count
            << " auxiliary images\nmanifest: " << res.manifest_path << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data, const std::string& out) {
  TrainConfig cfg = parse_run_config_file(config_path);
  const std::string resolved = canonical_config_text(cfg);
  fs::create_directories(out);
  {
    std::ofstream snap(fs::path(out) / "config_resolved.cfg");
    snap << resolved;
  }
  {
    std::ofstream meta(fs::path(out) / "run_meta.txt");
    meta << "threads = " << worker_count() << "\n";
  }
  std::cout << "resolved config:\n" << resolved;
  run_training(cfg, data, out);
  std::cout << "finished " << cfg.total_steps << " steps; log: "
            << (fs::path(out) / "training_log.csv").string() << "\n";
  return 0;
}

// The resolved config snapshot written by `train` lives beside its
// checkpoints; grid and eval reconstruct the model from it and verify the
// checkpoint's config hash.
std::pair<TrainConfig, std::uint64_t> sibling_config(const std::string& checkpoint) {
  const fs::path cfg_path = fs::path(checkpoint).parent_path() / "config_resolved.cfg";
  if (!fs::exists(cfg_path))
    throw std::runtime_error("no config_resolved.cfg beside checkpoint " + checkpoint);
  TrainConfig cfg = parse_run_config_file(cfg_path.string());
  return {cfg, fnv1a64(canonical_config_text(cfg))};
}

std::vector<double> draw_vec(Rng& rng, int dim) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (double& x : v) x = rng.uniform_pm1();
  return v;
}

int cmd_grid(const std::string& checkpoint, int rows, int cols, std::uint64_t seed,
             const std::string& domain_name, const std::string& out) {
  if (rows < 1 || cols < 1) throw UsageError("--rows and --cols must be at least 1");
  Domain domain;
  if (domain_name == "target")
    domain = Domain::Target;
  else if (domain_name == "auxiliary")
    domain = Domain::Auxiliary;
  else
    throw UsageError("--domain must be 'target' or 'auxiliary'");

  auto [cfg, hash] = sibling_config(checkpoint);
  DsrganModel model(cfg.model_config(), cfg.seed);
  load_checkpoint(checkpoint, model, hash);

  std::vector<std::vector<double>> z_rows, z_cols;
  for (int r = 0; r < rows; ++r) {
    Rng rng(mix_seed(seed, 0x5205, static_cast<std::uint64_t>(r)));
    z_rows.push_back(draw_vec(rng, cfg.ds_dim));
  }
  for (int c = 0; c < cols; ++c) {
    Rng rng(mix_seed(seed, 0xc015, static_cast<std::uint64_t>(c)));
    z_cols.push_back(draw_vec(rng, cfg.dr_dim));
  }

  fs::create_directories(out);
  {
    std::ofstream lat(fs::path(out) / "latents.csv");
    char num[32];
    for (int r = 0; r < rows; ++r) {
      lat << "row," << r;
      for (double v : z_rows[static_cast<std::size_t>(r)]) {
        std::snprintf(num, sizeof num, ",%.17g", v);
        lat << num;
      }
      lat << "\n";
    }
    for (int c = 0; c < cols; ++c) {
      lat << "col," << c;
      for (double v : z_cols[static_cast<std::size_t>(c)]) {
        std::snprintf(num, sizeof num, ",%.17g", v);
        lat << num;
      }
      lat << "\n";
    }
  }

  const int res = cfg.resolution;
  const int gutter = 2;
  Image composite = Image::filled(cols * res + (cols + 1) * gutter,
                                  rows * res + (rows + 1) * gutter, 1.0, 1.0, 1.0);
  GenSampler sampler = model_sampler(model, domain);
  char name[64];
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      Image cell = sampler.sample(z_rows[static_cast<std::size_t>(r)],
                                  z_cols[static_cast<std::size_t>(c)]);
      std::snprintf(name, sizeof name, "r%d_c%d.png", r, c);
      write_png((fs::path(out) / name).string(), cell);
      const int oy = gutter + r * (res + gutter);
      const int ox = gutter + c * (res + gutter);
      for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x)
          for (int ch = 0; ch < 3; ++ch)
            composite.at(oy + y, ox + x, ch) = cell.at(y, x, ch);
    }
  }
  write_png((fs::path(out) / "grid.png").string(), composite);
  std::cout << "wrote " << rows * cols << " cells and grid.png under " << out << "\n";
  return 0;
}

DistanceFn resolve_dr(const std::string& name) {
  if (name == "hist") return make_color_distance(Region::Full);
  if (name == "hist13") return make_color_distance(Region::UpperThird);
  throw UsageError("--dr must be one of hist|hist13");
}

int cmd_eval_nd(const std::string& checkpoint, const std::string& grid_dir,
                const std::string& ds_name, const std::string& dr_name, long pairs,
                std::uint64_t seed, const std::string& baseline_data) {
  if (checkpoint.empty() == grid_dir.empty())
    throw UsageError("exactly one of --checkpoint or --grid-dir is required");
  if (ds_name != "hog" && ds_name != "fbpd" && ds_name != "embed")
    throw UsageError("--ds must be one of hog|fbpd|embed");
  DistanceFn dr = resolve_dr(dr_name);

  NdReport report;
  fs::path out_dir;
  int resolution = 0;

  if (!checkpoint.empty()) {
    if (ds_name == "embed")
      throw UsageError(
          "--ds embed needs per-image feature files; it is only available with --grid-dir");
    DistanceFn ds = ds_name == "hog" ? make_hog_distance() : make_fbpd_distance();
    auto [cfg, hash] = sibling_config(checkpoint);
    DsrganModel model(cfg.model_config(), cfg.seed);
    load_checkpoint(checkpoint, model, hash);
    GenSampler sampler = model_sampler(model, Domain::Target);
    report = estimate_nd(sampler, ds, dr, pairs, seed);
    out_dir = fs::path(checkpoint).parent_path();
    resolution = cfg.resolution;
  } else {
    std::vector<std::vector<Image>> grid = load_grid_dir(grid_dir);
    DistanceFn ds;
    std::unordered_map<const Image*, Eigen::VectorXd> features;
    if (ds_name == "embed") {
      for (std::size_t r = 0; r < grid.size(); ++r)
        for (std::size_t c = 0; c < grid[r].size(); ++c) {
          char name[64];
          std::snprintf(name, sizeof name, "r%zu_c%zu.feat", r, c);
          const fs::path fpath = fs::path(grid_dir) / name;
          if (!fs::exists(fpath))
            throw UsageError("--ds embed: missing feature file " + fpath.string());
          std::vector<double> v = read_feature_file(fpath.string());
          features[&grid[r][c]] =
              Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<long>(v.size()));
        }
      ds = make_embedding_distance([features](const Image& im) {
        auto it = features.find(&im);
        if (it == features.end())
          throw std::runtime_error("no features registered for this image");
        return it->second;
      });
    } else {
      ds = ds_name == "hog" ? make_hog_distance() : make_fbpd_distance();
    }
    report = grid_nd(grid, ds, dr);
    out_dir = grid_dir;
    resolution = grid[0][0].width;
  }

  std::string csv = report.to_csv();
  if (!baseline_data.empty()) {
    std::vector<Image> imgs = ingest_folder(baseline_data, resolution);
    DistanceFn ds = ds_name == "hog" ? make_hog_distance() : make_fbpd_distance();
    DataBaseline base = data_baseline(imgs, ds, dr, pairs, seed);
    char buf[128];
    std::snprintf(buf, sizeof buf, "E_ds_data,%.17g,%.17g\n", base.e_ds, base.se_ds);
    csv += buf;
    std::snprintf(buf, sizeof buf, "E_dr_data,%.17g,%.17g\n", base.e_dr, base.se_dr);
    csv += buf;
  }
  const fs::path csv_path = out_dir / "nd_report.csv";
  {
    std::ofstream f(csv_path);
    f << csv;
  }
  std::cout << report.to_text() << "report: " << csv_path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DSRGAN laboratory: paired GANs disentangling structure from rendering"};
  app.require_subcommand(1);

  auto* mk = app.add_subcommand("make-dataset", "generate the synthetic two-domain dataset");
  std::string mk_out;
  int mk_count = 0;
  std::uint64_t mk_seed = 1;
  int mk_resolution = 32;
  bool mk_force = false;
  mk->add_option("--out", mk_out, "output directory")->required();
  mk->add_option("--count", mk_count, "number of images per domain")->required();
  mk->add_option("--seed", mk_seed, "dataset seed");
  mk->add_option("--resolution", mk_resolution, "square image extent");
  mk->add_flag("--force", mk_force, "overwrite a non-empty output directory");

  auto* tr = app.add_subcommand("train", "train a model from a run config file");
  std::string tr_config, tr_data, tr_out;
  tr->add_option("--config", tr_config, "key = value run config")->required();
  tr->add_option("--data", tr_data, "dataset directory (target/ and aux/)")->required();
  tr->add_option("--out", tr_out, "output directory for checkpoints and logs")->required();

  auto* gr = app.add_subcommand("grid", "emit a z_s x z_r traversal grid from a checkpoint");
  std::string gr_ckpt, gr_domain = "target", gr_out;
  int gr_rows = 4, gr_cols = 4;
  std::uint64_t gr_seed = 1;
  gr->add_option("--checkpoint", gr_ckpt, "checkpoint file")->required();
  gr->add_option("--rows", gr_rows, "rows (shared z_s per row)");
  gr->add_option("--cols", gr_cols, "columns (shared z_r per column)");
  gr->add_option("--seed", gr_seed, "latent seed");
  gr->add_option("--domain", gr_domain, "target|auxiliary");
  gr->add_option("--out", gr_out, "output directory")->required();

  auto* ev = app.add_subcommand("eval-nd", "estimate Normalized Disentanglability");
  std::string ev_ckpt, ev_grid, ev_ds = "fbpd", ev_dr = "hist", ev_baseline;
  long ev_pairs = 10000;
  std::uint64_t ev_seed = 1;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file (Monte Carlo estimate)");
  ev->add_option("--grid-dir", ev_grid, "directory of r<row>_c<col>.png cells");
  ev->add_option("--ds", ev_ds, "structure distance: hog|fbpd|embed");
  ev->add_option("--dr", ev_dr, "rendering distance: hist|hist13");
  ev->add_option("--pairs", ev_pairs, "Monte Carlo pair count");
  ev->add_option("--seed", ev_seed, "evaluation seed");
  ev->add_option("--baseline-data", ev_baseline, "image folder for the real-data baseline");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (mk->parsed()) return cmd_make_dataset(mk_out, mk_count, mk_seed, mk_resolution, mk_force);
    if (tr->parsed()) return cmd_train(tr_config, tr_data, tr_out);
    if (gr->parsed()) return cmd_grid(gr_ckpt, gr_rows, gr_cols, gr_seed, gr_domain, gr_out);
    if (ev->parsed())
      return cmd_eval_nd(ev_ckpt, ev_grid, ev_ds, ev_dr, ev_pairs, ev_seed, ev_baseline);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
