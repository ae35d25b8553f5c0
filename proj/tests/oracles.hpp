// Independent reference implementations used as test oracles. These stay
// deliberately naive (straight loops, no shared code with src/) so that a
// defect in the library cannot hide in its own oracle.
#ifndef DSRGAN_TESTS_ORACLES_HPP
#define DSRGAN_TESTS_ORACLES_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "dsrgan/image.hpp"
#include "dsrgan/tensor.hpp"

namespace oracles {

// y[n][f][oy][ox] = sum_c sum_ky sum_kx x[n][c][oy*s-p+ky][ox*s-p+kx] * k[f][c][ky][kx]
inline dsrgan::Tensor loop_conv2d(const dsrgan::Tensor& x, const dsrgan::Tensor& k, int stride,
                                  int pad) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int f = k.dim(0), ks = k.dim(2);
  const int ho = (h + 2 * pad - ks) / stride + 1;
  const int wo = (w + 2 * pad - ks) / stride + 1;
  dsrgan::Tensor out = dsrgan::Tensor::zeros({n, f, ho, wo});
  auto xat = [&](int b, int ch, int y, int xx) {
    return x.values[((static_cast<long>(b) * c + ch) * h + y) * w + xx];
  };
  for (int b = 0; b < n; ++b)
    for (int of = 0; of < f; ++of)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = 0.0;
          for (int ch = 0; ch < c; ++ch)
            for (int ky = 0; ky < ks; ++ky)
              for (int kx = 0; kx < ks; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += xat(b, ch, iy, ix) *
                       k.values[((static_cast<long>(of) * c + ch) * ks + ky) * ks + kx];
              }
          out.values[((static_cast<long>(b) * f + of) * ho + oy) * wo + ox] = acc;
        }
  return out;
}

// Zero-stuffed transposed convolution: every input tap scatters a copy of
// the kernel onto the output.
inline dsrgan::Tensor loop_conv2d_transposed(const dsrgan::Tensor& x, const dsrgan::Tensor& k,
                                             int stride, int pad) {
  const int n = x.dim(0), f = x.dim(1), hi = x.dim(2), wi = x.dim(3);
  const int c = k.dim(1), ks = k.dim(2);
  const int ho = (hi - 1) * stride - 2 * pad + ks;
  const int wo = (wi - 1) * stride - 2 * pad + ks;
  dsrgan::Tensor out = dsrgan::Tensor::zeros({n, c, ho, wo});
  for (int b = 0; b < n; ++b)
    for (int ff = 0; ff < f; ++ff)
      for (int y = 0; y < hi; ++y)
        for (int xx = 0; xx < wi; ++xx) {
          const double v = x.values[((static_cast<long>(b) * f + ff) * hi + y) * wi + xx];
          for (int ch = 0; ch < c; ++ch)
            for (int ky = 0; ky < ks; ++ky)
              for (int kx = 0; kx < ks; ++kx) {
                const int oy = y * stride - pad + ky;
                const int ox = xx * stride - pad + kx;
                if (oy < 0 || oy >= ho || ox < 0 || ox >= wo) continue;
                out.values[((static_cast<long>(b) * c + ch) * ho + oy) * wo + ox] +=
                    v * k.values[((static_cast<long>(ff) * c + ch) * ks + ky) * ks + kx];
              }
        }
  return out;
}

inline dsrgan::Tensor loop_dense(const dsrgan::Tensor& x, const dsrgan::Tensor& w,
                                 const dsrgan::Tensor& b) {
  const int n = x.dim(0), d = x.dim(1), m = w.dim(1);
  dsrgan::Tensor out = dsrgan::Tensor::zeros({n, m});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      double acc = b.values[j];
      for (int kk = 0; kk < d; ++kk)
        acc += x.values[static_cast<long>(i) * d + kk] * w.values[static_cast<long>(kk) * m + j];
      out.values[static_cast<long>(i) * m + j] = acc;
    }
  return out;
}

// Central finite differences of a scalar-valued function at x.
// step is the spec-pinned 1e-4 unless a test overrides it.
inline Eigen::ArrayXd fd_gradient(const std::function<double(const dsrgan::Tensor&)>& f,
                                  dsrgan::Tensor x, double step = 1e-4) {
  Eigen::ArrayXd grad(x.size());
  for (long i = 0; i < x.size(); ++i) {
    const double keep = x.values[i];
    x.values[i] = keep + step;
    const double fp = f(x);
    x.values[i] = keep - step;
    const double fm = f(x);
    x.values[i] = keep;
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

// Worst-case relative error between two gradients, with a floor so that
// coordinates where both are essentially zero compare absolutely.
inline double max_rel_err(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b,
                          double floor = 1e-3) {
  double worst = 0.0;
  for (long i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

inline double max_abs_diff(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
  return (a - b).abs().maxCoeff();
}

// Straight-loop HOG, written independently of the library implementation:
// 8x8 cells, 9 unsigned bins with linear votes, 2x2-cell blocks, L2-Hys.
inline std::vector<double> loop_hog(const dsrgan::Image& img) {
  const int w = img.width, h = img.height;
  std::vector<std::vector<double>> gray(h, std::vector<double>(w));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
      if (r == g && g == b)
        gray[y][x] = r;
      else {
        double v = 0.299 * r + 0.587 * g + 0.114 * b;
        gray[y][x] = v < 0 ? 0 : (v > 1 ? 1 : v);
      }
    }
  const int cy = h / 8, cx = w / 8;
  if (cy < 2 || cx < 2) return {};
  std::vector<std::vector<std::vector<double>>> hist(
      cy, std::vector<std::vector<double>>(cx, std::vector<double>(9, 0.0)));
  for (int y = 0; y < cy * 8; ++y)
    for (int x = 0; x < cx * 8; ++x) {
      double gx, gy;
      if (x == 0)
        gx = gray[y][1] - gray[y][0];
      else if (x == w - 1)
        gx = gray[y][w - 1] - gray[y][w - 2];
      else
        gx = gray[y][x + 1] - gray[y][x - 1];
      if (y == 0)
        gy = gray[1][x] - gray[0][x];
      else if (y == h - 1)
        gy = gray[h - 1][x] - gray[h - 2][x];
      else
        gy = gray[y + 1][x] - gray[y - 1][x];
      const double mag = std::sqrt(gx * gx + gy * gy);
      if (mag == 0.0) continue;
      double deg = std::atan2(gy, gx) * 180.0 / 3.14159265358979323846;
      while (deg < 0) deg += 180.0;
      while (deg >= 180.0) deg -= 180.0;
      const double p = deg / 20.0 - 0.5;
      int b0 = static_cast<int>(std::floor(p));
      const double frac = p - std::floor(p);
      b0 = ((b0 % 9) + 9) % 9;
      const int b1 = (b0 + 1) % 9;
      hist[y / 8][x / 8][b0] += (1.0 - frac) * mag;
      hist[y / 8][x / 8][b1] += frac * mag;
    }
  std::vector<double> desc;
  for (int by = 0; by + 1 < cy; ++by)
    for (int bx = 0; bx + 1 < cx; ++bx) {
      std::vector<double> v;
      for (auto [dy, dx] : {std::pair{0, 0}, std::pair{0, 1}, std::pair{1, 0}, std::pair{1, 1}})
        for (int b = 0; b < 9; ++b) v.push_back(hist[by + dy][bx + dx][b]);
      double ss = 0.0;
      for (double e : v) ss += e * e;
      const double n1 = std::sqrt(ss + 1e-12);
      for (double& e : v) {
        e /= n1;
        if (e > 0.2) e = 0.2;
      }
      ss = 0.0;
      for (double e : v) ss += e * e;
      const double n2 = std::sqrt(ss + 1e-12);
      for (double& e : v) e /= n2;
      desc.insert(desc.end(), v.begin(), v.end());
    }
  return desc;
}

}  // namespace oracles

#endif
