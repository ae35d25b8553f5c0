#include "dsrgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "dsrgan/png_io.hpp"
#include "dsrgan/rng.hpp"

namespace fs = std::filesystem;

namespace dsrgan {

namespace {

void require_same_size(const Image& a, const Image& b, const char* what) {
  if (!a.same_size(b))
    throw std::invalid_argument(std::string(what) + ": image dimensions disagree (" +
                                std::to_string(a.width) + "x" + std::to_string(a.height) +
                                " vs " + std::to_string(b.width) + "x" +
                                std::to_string(b.height) + ")");
}

struct Welford {
  long n = 0;
  double mean = 0.0, m2 = 0.0;
  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double se() const {
    if (n < 2) return 0.0;
    const double var = m2 / static_cast<double>(n - 1);
    return std::sqrt(var / static_cast<double>(n));
  }
};

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s2 = 0.0;
  for (double x : v) s2 += (x - m) * (x - m);
  return std::sqrt(s2 / static_cast<double>(v.size() - 1));
}

}  // namespace

double normalized_euclidean(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("normalized_euclidean: vector lengths disagree");
  const double na = a.norm(), nb = b.norm();
  if (na + nb == 0.0) return 0.0;
  return (a - b).norm() / (na + nb);
}

// ---- HOG -------------------------------------------------------------------

Eigen::VectorXd hog_descriptor(const Image& img) {
  const int w = img.width, h = img.height;
  std::vector<double> gray(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      gray[static_cast<std::size_t>(y) * w + x] =
          luma601(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));

  auto g = [&](int y, int x) { return gray[static_cast<std::size_t>(y) * w + x]; };

  constexpr int kCell = 8;
  constexpr int kBins = 9;
  const int cells_y = h / kCell, cells_x = w / kCell;
  if (cells_y < 2 || cells_x < 2) return Eigen::VectorXd();  // too small for one block

  // per-cell orientation histograms; votes split linearly between the two
  // nearest unsigned-orientation bin centres (circular over 180 degrees)
  Eigen::MatrixXd cells = Eigen::MatrixXd::Zero(cells_y * cells_x, kBins);
  for (int y = 0; y < cells_y * kCell; ++y) {
    for (int x = 0; x < cells_x * kCell; ++x) {
      const double gx = x == 0 ? g(y, 1) - g(y, 0)
                       : x == w - 1 ? g(y, w - 1) - g(y, w - 2)
                                    : g(y, x + 1) - g(y, x - 1);
      const double gy = y == 0 ? g(1, x) - g(0, x)
                       : y == h - 1 ? g(h - 1, x) - g(h - 2, x)
                                    : g(y + 1, x) - g(y - 1, x);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double theta = std::atan2(gy, gx) * 57.295779513082323;  // degrees
      theta = std::fmod(theta, 180.0);
      if (theta < 0.0) theta += 180.0;
      const double p = theta / 20.0 - 0.5;  // bin centres at 10,30,...,170
      const double fl = std::floor(p);
      const double frac = p - fl;
      const int b0 = (static_cast<int>(fl) + kBins) % kBins;
      const int b1 = (b0 + 1) % kBins;
      const int cell = (y / kCell) * cells_x + (x / kCell);
      cells(cell, b0) += (1.0 - frac) * mag;
      cells(cell, b1) += frac * mag;
    }
  }

  // 2x2-cell blocks at one-cell stride, L2-Hys normalized
  const int by = cells_y - 1, bx = cells_x - 1;
  Eigen::VectorXd desc(static_cast<long>(by) * bx * 4 * kBins);
  long at = 0;
  for (int y = 0; y < by; ++y) {
    for (int x = 0; x < bx; ++x) {
      Eigen::VectorXd block(4 * kBins);
      block.segment(0, kBins) = cells.row(y * cells_x + x);
      block.segment(kBins, kBins) = cells.row(y * cells_x + x + 1);
      block.segment(2 * kBins, kBins) = cells.row((y + 1) * cells_x + x);
      block.segment(3 * kBins, kBins) = cells.row((y + 1) * cells_x + x + 1);
      block /= std::sqrt(block.squaredNorm() + 1e-12);
      block = block.cwiseMin(0.2);
      block /= std::sqrt(block.squaredNorm() + 1e-12);
      desc.segment(at, 4 * kBins) = block;
      at += 4 * kBins;
    }
  }
  return desc;
}

double hog_distance(const Image& a, const Image& b) {
  require_same_size(a, b, "hog_distance");
  return normalized_euclidean(hog_descriptor(a), hog_descriptor(b));
}

// ---- FBPD ------------------------------------------------------------------

double fbpd_distance(const Image& a, const Image& b) {
  require_same_size(a, b, "fbpd_distance");
  long sym = 0, uni = 0;
  const std::size_t n = a.data.size() / 3;
  for (std::size_t i = 0; i < n; ++i) {
    const double la = luma601(a.data[3 * i], a.data[3 * i + 1], a.data[3 * i + 2]);
    const double lb = luma601(b.data[3 * i], b.data[3 * i + 1], b.data[3 * i + 2]);
    const int qa = static_cast<int>(std::lround(std::clamp(la, 0.0, 1.0) * 255.0));
    const int qb = static_cast<int>(std::lround(std::clamp(lb, 0.0, 1.0) * 255.0));
    const bool fa = qa < 250;  // [250,255] is background
    const bool fb = qb < 250;
    if (fa || fb) ++uni;
    if (fa != fb) ++sym;
  }
  if (uni == 0) return 0.0;
  return static_cast<double>(sym) / static_cast<double>(uni);
}

// ---- HSV histogram -----------------------------------------------------------

Eigen::VectorXd hsv_histogram(const Image& img, Region region) {
  int rows = img.height;
  if (region == Region::UpperThird) {
    rows = img.height / 3;
    if (rows < 1)
      throw std::invalid_argument("hsv_histogram: upper-third region taller than image (height " +
                                  std::to_string(img.height) + ")");
  }
  Eigen::VectorXd hist = Eigen::VectorXd::Zero(18 * 8 * 8);
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double h, s, v;
      rgb_to_hsv(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2), &h, &s, &v);
      const int hb = std::min(17, static_cast<int>(h / 20.0));
      const int sb = std::min(7, static_cast<int>(s * 8.0));
      const int vb = std::min(7, static_cast<int>(v * 8.0));
      hist[(hb * 8 + sb) * 8 + vb] += 1.0;
    }
  }
  const double total = hist.sum();
  if (total > 0.0) hist /= total;
  return hist;
}

double color_distance(const Image& a, const Image& b, Region region) {
  require_same_size(a, b, "color_distance");
  return normalized_euclidean(hsv_histogram(a, region), hsv_histogram(b, region));
}

DistanceFn make_hog_distance() {
  return DistanceFn{"hog", Region::Full, [](const Image& a, const Image& b) {
                      return hog_distance(a, b);
                    }};
}

DistanceFn make_fbpd_distance() {
  return DistanceFn{"fbpd", Region::Full, [](const Image& a, const Image& b) {
                      return fbpd_distance(a, b);
                    }};
}

DistanceFn make_color_distance(Region region) {
  return DistanceFn{region == Region::Full ? "hist" : "hist13", region,
                    [region](const Image& a, const Image& b) {
                      return color_distance(a, b, region);
                    }};
}

// ---- embedding plug-in -------------------------------------------------------

std::vector<double> read_feature_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open feature file: " + path);
  std::uint64_t count = 0;
  unsigned char hdr[8];
  if (!in.read(reinterpret_cast<char*>(hdr), 8))
    throw std::runtime_error("feature file too short: " + path);
  for (int i = 7; i >= 0; --i) count = (count << 8) | hdr[i];
  if (count > (1ull << 24)) throw std::runtime_error("implausible feature count in " + path);
  std::vector<double> v(count);
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * 8)))
    throw std::runtime_error("feature file truncated: " + path);
  return v;
}

void write_feature_file(const std::string& path, const std::vector<double>& v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write feature file: " + path);
  const std::uint64_t count = v.size();
  unsigned char hdr[8];
  for (int i = 0; i < 8; ++i) hdr[i] = static_cast<unsigned char>((count >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(hdr), 8);
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
  if (!out) throw std::runtime_error("feature file write failed: " + path);
}

DistanceFn make_embedding_distance(std::function<Eigen::VectorXd(const Image&)> features) {
  return DistanceFn{"embed", Region::Full,
                    [features](const Image& a, const Image& b) {
                      return normalized_euclidean(features(a), features(b));
                    }};
}

// ---- ND estimation -----------------------------------------------------------

std::string NdReport::to_csv() const {
  char buf[256];
  std::string out = "term,value,stderr\n";
  auto row = [&](const char* name, double v, double se) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g\n", name, v, se);
    out += buf;
  };
  row("E_ds_vary_s", e_ds_vary_s, se_ds_vary_s);
  row("E_ds_vary_r", e_ds_vary_r, se_ds_vary_r);
  row("E_dr_vary_r", e_dr_vary_r, se_dr_vary_r);
  row("E_dr_vary_s", e_dr_vary_s, se_dr_vary_s);
  row("delta_ds", delta_ds, se_delta_ds);
  row("delta_dr", delta_dr, se_delta_dr);
  row("nd", nd, se_nd);
  std::snprintf(buf, sizeof buf, "num_pairs,%ld,0\n", num_pairs);
  out += buf;
  out += "d_s," + ds_name + ",0\n";
  out += "d_r," + dr_name + ",0\n";
  return out;
}

std::string NdReport::to_text() const {
  char buf[512];
  std::string out;
  std::snprintf(buf, sizeof buf, "ND report  (d_s=%s, d_r=%s, pairs=%ld)\n", ds_name.c_str(),
                dr_name.c_str(), num_pairs);
  out += buf;
  auto row = [&](const char* name, double v, double se) {
    std::snprintf(buf, sizeof buf, "  %-12s %10.4f  +/- %.4f\n", name, v, se);
    out += buf;
  };
  row("E[ds|vary s]", e_ds_vary_s, se_ds_vary_s);
  row("E[ds|vary r]", e_ds_vary_r, se_ds_vary_r);
  row("E[dr|vary r]", e_dr_vary_r, se_dr_vary_r);
  row("E[dr|vary s]", e_dr_vary_s, se_dr_vary_s);
  row("delta_ds", delta_ds, se_delta_ds);
  row("delta_dr", delta_dr, se_delta_dr);
  row("ND", nd, se_nd);
  return out;
}

NdReport estimate_nd(const GenSampler& gen, const DistanceFn& ds, const DistanceFn& dr,
                     long num_pairs, std::uint64_t seed) {
  if (num_pairs < 1) throw std::invalid_argument("estimate_nd: num_pairs must be >= 1");
  if (gen.ds_dim < 1 || gen.dr_dim < 1)
    throw std::invalid_argument("estimate_nd: sampler latent dimensions not set");

  Welford w_ds_s, w_ds_r, w_dr_r, w_dr_s, w_dds, w_ddr, w_nd;
  for (long i = 0; i < num_pairs; ++i) {
    Rng rng(mix_seed(seed, 0x6e64, static_cast<std::uint64_t>(i)));
    auto draw = [&rng](int n) {
      std::vector<double> z(static_cast<std::size_t>(n));
      for (double& x : z) x = rng.uniform_pm1();
      return z;
    };
    const auto z_s = draw(gen.ds_dim);
    const auto z_s2 = draw(gen.ds_dim);
    const auto z_r = draw(gen.dr_dim);
    const auto z_r2 = draw(gen.dr_dim);
    const Image base = gen.sample(z_s, z_r);
    const Image vary_s = gen.sample(z_s2, z_r);
    const Image vary_r = gen.sample(z_s, z_r2);

    const double ds_s = ds(base, vary_s);
    const double ds_r = ds(base, vary_r);
    const double dr_r = dr(base, vary_r);
    const double dr_s = dr(base, vary_s);
    w_ds_s.add(ds_s);
    w_ds_r.add(ds_r);
    w_dr_r.add(dr_r);
    w_dr_s.add(dr_s);
    w_dds.add(ds_s - ds_r);
    w_ddr.add(dr_r - dr_s);
    w_nd.add(ds_s - ds_r + dr_r - dr_s);
  }

  NdReport r;
  r.num_pairs = num_pairs;
  r.ds_name = ds.name;
  r.dr_name = dr.name;
  r.e_ds_vary_s = w_ds_s.mean;
  r.e_ds_vary_r = w_ds_r.mean;
  r.e_dr_vary_r = w_dr_r.mean;
  r.e_dr_vary_s = w_dr_s.mean;
  r.se_ds_vary_s = w_ds_s.se();
  r.se_ds_vary_r = w_ds_r.se();
  r.se_dr_vary_r = w_dr_r.se();
  r.se_dr_vary_s = w_dr_s.se();
  r.delta_ds = r.e_ds_vary_s - r.e_ds_vary_r;
  r.delta_dr = r.e_dr_vary_r - r.e_dr_vary_s;
  r.nd = r.delta_ds + r.delta_dr;
  r.se_delta_ds = w_dds.se();
  r.se_delta_dr = w_ddr.se();
  r.se_nd = w_nd.se();
  return r;
}

DataBaseline data_baseline(const std::vector<Image>& images, const DistanceFn& ds,
                           const DistanceFn& dr, long num_pairs, std::uint64_t seed) {
  if (images.size() < 2)
    throw std::invalid_argument("data_baseline: need at least two images, got " +
                                std::to_string(images.size()));
  if (num_pairs < 1) throw std::invalid_argument("data_baseline: num_pairs must be >= 1");
  Welford w_ds, w_dr;
  Rng rng(mix_seed(seed, 0xba5e));
  const std::uint64_t n = images.size();
  for (long p = 0; p < num_pairs; ++p) {
    const std::uint64_t i = rng.below(n);
    std::uint64_t j = rng.below(n - 1);
    if (j >= i) ++j;
    w_ds.add(ds(images[i], images[j]));
    w_dr.add(dr(images[i], images[j]));
  }
  DataBaseline b;
  b.e_ds = w_ds.mean;
  b.e_dr = w_dr.mean;
  b.se_ds = w_ds.se();
  b.se_dr = w_dr.se();
  b.num_pairs = num_pairs;
  return b;
}

namespace {

// Pair values for one expectation term over a grid: v[g][(a,b)] is the
// distance between cells a and b of group g (group = row for the vary-z_r
// terms, column for the vary-z_s terms).
struct GridTerm {
  std::size_t groups = 0, members = 0;
  double total = 0.0;
  long count = 0;
  std::vector<double> group_sum;            // per group
  std::vector<double> member_sum;           // pairs touching member m, all groups
  std::vector<long> group_cnt, member_cnt;

  void init(std::size_t g, std::size_t m) {
    groups = g;
    members = m;
    group_sum.assign(g, 0.0);
    member_sum.assign(m, 0.0);
    group_cnt.assign(g, 0);
    member_cnt.assign(m, 0);
  }
  void add(std::size_t g, std::size_t a, std::size_t b, double v) {
    total += v;
    ++count;
    group_sum[g] += v;
    ++group_cnt[g];
    member_sum[a] += v;
    ++member_cnt[a];
    member_sum[b] += v;
    ++member_cnt[b];
  }
  double mean() const { return total / static_cast<double>(count); }
  // Both latent samples are finite: delete-one jackknife over the groups
  // (shared-factor draws) and over the members (varied-factor draws),
  // combined in quadrature.
  double se() const {
    auto jack = [](const std::vector<double>& sums, const std::vector<long>& cnts, double total,
                   long count) {
      const std::size_t n = sums.size();
      std::vector<double> reps(n);
      for (std::size_t i = 0; i < n; ++i)
        reps[i] = (total - sums[i]) / static_cast<double>(count - cnts[i]);
      double m = 0;
      for (double v : reps) m += v;
      m /= static_cast<double>(n);
      double s2 = 0;
      for (double v : reps) s2 += (v - m) * (v - m);
      return std::sqrt(s2 * static_cast<double>(n - 1) / static_cast<double>(n));
    };
    return std::hypot(jack(group_sum, group_cnt, total, count),
                      jack(member_sum, member_cnt, total, count));
  }
};

}  // namespace

NdReport grid_nd(const std::vector<std::vector<Image>>& grid, const DistanceFn& ds,
                 const DistanceFn& dr) {
  const std::size_t rows = grid.size();
  if (rows < 2) throw std::invalid_argument("grid_nd: need at least 2 rows");
  const std::size_t cols = grid[0].size();
  if (cols < 2) throw std::invalid_argument("grid_nd: need at least 2 columns");
  for (const auto& row : grid)
    if (row.size() != cols) throw std::invalid_argument("grid_nd: ragged grid");

  // same-row pairs share z_s (z_r varies); same-column pairs share z_r
  GridTerm t_ds_vr, t_dr_vr, t_ds_vs, t_dr_vs;
  t_ds_vr.init(rows, cols);
  t_dr_vr.init(rows, cols);
  t_ds_vs.init(cols, rows);
  t_dr_vs.init(cols, rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t a = 0; a < cols; ++a)
      for (std::size_t b = a + 1; b < cols; ++b) {
        t_ds_vr.add(r, a, b, ds(grid[r][a], grid[r][b]));
        t_dr_vr.add(r, a, b, dr(grid[r][a], grid[r][b]));
      }
  for (std::size_t c = 0; c < cols; ++c)
    for (std::size_t a = 0; a < rows; ++a)
      for (std::size_t b = a + 1; b < rows; ++b) {
        t_ds_vs.add(c, a, b, ds(grid[a][c], grid[b][c]));
        t_dr_vs.add(c, a, b, dr(grid[a][c], grid[b][c]));
      }

  NdReport r;
  r.num_pairs = t_ds_vr.count + t_ds_vs.count;
  r.ds_name = ds.name;
  r.dr_name = dr.name;
  r.e_ds_vary_r = t_ds_vr.mean();
  r.e_dr_vary_r = t_dr_vr.mean();
  r.e_ds_vary_s = t_ds_vs.mean();
  r.e_dr_vary_s = t_dr_vs.mean();
  r.se_ds_vary_r = t_ds_vr.se();
  r.se_dr_vary_r = t_dr_vr.se();
  r.se_ds_vary_s = t_ds_vs.se();
  r.se_dr_vary_s = t_dr_vs.se();
  r.delta_ds = r.e_ds_vary_s - r.e_ds_vary_r;
  r.delta_dr = r.e_dr_vary_r - r.e_dr_vary_s;
  r.nd = r.delta_ds + r.delta_dr;
  r.se_delta_ds = std::hypot(r.se_ds_vary_s, r.se_ds_vary_r);
  r.se_delta_dr = std::hypot(r.se_dr_vary_r, r.se_dr_vary_s);
  r.se_nd = std::hypot(r.se_delta_ds, r.se_delta_dr);
  return r;
}

std::vector<std::vector<Image>> load_grid_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
  std::map<std::pair<int, int>, Image> cells;
  int max_r = -1, max_c = -1;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".png") continue;
    int r, c;
    if (std::sscanf(e.path().filename().string().c_str(), "r%d_c%d.png", &r, &c) != 2) continue;
    Image im;
    if (!read_png(e.path().string(), &im))
      throw std::runtime_error("cannot decode grid cell: " + e.path().string());
    cells[{r, c}] = std::move(im);
    max_r = std::max(max_r, r);
    max_c = std::max(max_c, c);
  }
  if (max_r < 0) throw std::runtime_error("no r<row>_c<col>.png cells under " + dir);
  std::vector<std::vector<Image>> grid(static_cast<std::size_t>(max_r + 1));
  for (int r = 0; r <= max_r; ++r) {
    for (int c = 0; c <= max_c; ++c) {
      auto it = cells.find({r, c});
      if (it == cells.end())
        throw std::runtime_error("grid cell missing: r" + std::to_string(r) + "_c" +
                                 std::to_string(c) + ".png under " + dir);
      grid[static_cast<std::size_t>(r)].push_back(std::move(it->second));
    }
  }
  return grid;
}

}  // namespace dsrgan
