#ifndef DSRGAN_METRICS_HPP
#define DSRGAN_METRICS_HPP

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsrgan/image.hpp"

namespace dsrgan {

enum class Region { Full, UpperThird };

// Symmetric image distance into [0,1] with d(x,x) = 0.
struct DistanceFn {
  std::string name;
  Region region = Region::Full;
  std::function<double(const Image&, const Image&)> fn;
  double operator()(const Image& a, const Image& b) const { return fn(a, b); }
};

// ||a-b|| / (||a|| + ||b||), with 0/0 defined as 0. Symmetric, zero at
// equality and bounded by 1 through the triangle inequality.
double normalized_euclidean(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Histogram of Oriented Gradients distance. 8x8 pixel cells, 2x2-cell
// blocks at 1-cell stride, 9 unsigned orientation bins with linear
// interpolation between neighbours, L2-Hys block normalization (clip 0.2).
// Images are converted to grayscale first.
double hog_distance(const Image& a, const Image& b);
Eigen::VectorXd hog_descriptor(const Image& img);

// Foreground Binary Pixel Disagreement: grayscale 8-bit values in
// [250,255] count as background; the distance is the symmetric difference
// of the two foregrounds over their union, 0 when both are empty.
double fbpd_distance(const Image& a, const Image& b);

// Joint HSV histogram with [18,8,8] bins (1152 total), L1-normalized.
// S == 0 pixels land in hue bin 0. UpperThird histograms rows [0, H/3).
Eigen::VectorXd hsv_histogram(const Image& img, Region region = Region::Full);
double color_distance(const Image& a, const Image& b, Region region = Region::Full);

DistanceFn make_hog_distance();
DistanceFn make_fbpd_distance();
DistanceFn make_color_distance(Region region);

// Feature files: u64 little-endian count followed by that many f64 values.
std::vector<double> read_feature_file(const std::string& path);
void write_feature_file(const std::string& path, const std::vector<double>& v);
// Distance over externally supplied per-image features; lookup is keyed by
// image address, so the images must outlive the DistanceFn.
DistanceFn make_embedding_distance(
    std::function<Eigen::VectorXd(const Image&)> features);

struct NdReport {
  double e_ds_vary_s = 0, e_ds_vary_r = 0, e_dr_vary_r = 0, e_dr_vary_s = 0;
  double se_ds_vary_s = 0, se_ds_vary_r = 0, se_dr_vary_r = 0, se_dr_vary_s = 0;
  double delta_ds = 0, delta_dr = 0, nd = 0;
  double se_delta_ds = 0, se_delta_dr = 0, se_nd = 0;
  long num_pairs = 0;
  std::string ds_name, dr_name;

  std::string to_csv() const;
  std::string to_text() const;
};

// Deterministic generator under evaluation: an image per latent pair.
struct GenSampler {
  int ds_dim = 0;
  int dr_dim = 0;
  std::function<Image(const std::vector<double>& z_s, const std::vector<double>& z_r)> sample;
};

// Monte Carlo estimate of the four expectation terms and ND. Latents are
// drawn uniformly from [-1,1] with a per-pair seed derivation, so the
// result is independent of evaluation order.
NdReport estimate_nd(const GenSampler& gen, const DistanceFn& ds, const DistanceFn& dr,
                     long num_pairs, std::uint64_t seed);

struct DataBaseline {
  double e_ds = 0, e_dr = 0;
  double se_ds = 0, se_dr = 0;
  long num_pairs = 0;
};

// Mean pairwise distances over uniformly drawn unordered image pairs; the
// upper bounds for the corresponding delta terms.
DataBaseline data_baseline(const std::vector<Image>& images, const DistanceFn& ds,
                           const DistanceFn& dr, long num_pairs, std::uint64_t seed);

// Exhaustive ND over an R x C image grid where rows share z_s and columns
// share z_r: same-row pairs estimate the vary-z_r terms, same-column pairs
// the vary-z_s terms. Standard errors come from the spread of per-row /
// per-column means.
NdReport grid_nd(const std::vector<std::vector<Image>>& grid, const DistanceFn& ds,
                 const DistanceFn& dr);

// Loads a directory of r<row>_c<col>.png cells into a grid.
std::vector<std::vector<Image>> load_grid_dir(const std::string& dir);

}  // namespace dsrgan

#endif
