#include <Eigen/Core>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsrgan/graph.hpp"
#include "dsrgan/parallel.hpp"

namespace dsrgan {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColMat = Eigen::MatrixXd;

// Geometry of a conv2d between an image plane [C,H,W] and output positions
// [Ho,Wo]. conv2d_transposed reuses it with the roles of image and
// positions swapped.
struct ConvGeom {
  int C, H, W, K, S, P, Ho, Wo;
  long ckk() const { return static_cast<long>(C) * K * K; }
  long positions() const { return static_cast<long>(Ho) * Wo; }
  long plane() const { return static_cast<long>(H) * W; }
};

// col is (C*K*K) x (Ho*Wo), column-major, one column per output position.
// Positions whose receptive field lies fully inside the image take a
// branch-free unrolled path; only the padding fringe pays bounds checks.
template <int K>
void im2col_k(const double* img, const ConvGeom& g, double* col) {
  const long ckk = g.ckk();
  const long plane = g.plane();
  for (int oy = 0; oy < g.Ho; ++oy) {
    const int iy0 = oy * g.S - g.P;
    const bool rows_ok = iy0 >= 0 && iy0 + K <= g.H;
    for (int ox = 0; ox < g.Wo; ++ox) {
      const int ix0 = ox * g.S - g.P;
      double* c = col + ckk * (static_cast<long>(oy) * g.Wo + ox);
      if (rows_ok && ix0 >= 0 && ix0 + K <= g.W) {
        const double* base = img + static_cast<long>(iy0) * g.W + ix0;
        for (int ch = 0; ch < g.C; ++ch) {
          const double* p = base + ch * plane;
          double* dst = c + static_cast<long>(ch) * K * K;
          for (int ky = 0; ky < K; ++ky) {
            const double* row = p + static_cast<long>(ky) * g.W;
            for (int kx = 0; kx < K; ++kx) dst[ky * K + kx] = row[kx];
          }
        }
        continue;
      }
      for (int ch = 0; ch < g.C; ++ch) {
        const double* pl = img + static_cast<long>(ch) * plane;
        for (int ky = 0; ky < K; ++ky) {
          const int iy = iy0 + ky;
          double* dst = c + (static_cast<long>(ch) * K + ky) * K;
          if (iy < 0 || iy >= g.H) {
            for (int kx = 0; kx < K; ++kx) dst[kx] = 0.0;
            continue;
          }
          const double* row = pl + static_cast<long>(iy) * g.W;
          for (int kx = 0; kx < K; ++kx) {
            const int ix = ix0 + kx;
            dst[kx] = (ix >= 0 && ix < g.W) ? row[ix] : 0.0;
          }
        }
      }
    }
  }
}

void im2col_generic(const double* img, const ConvGeom& g, double* col) {
  const long ckk = g.ckk();
  for (int oy = 0; oy < g.Ho; ++oy)
    for (int ox = 0; ox < g.Wo; ++ox) {
      double* c = col + ckk * (static_cast<long>(oy) * g.Wo + ox);
      for (int ch = 0; ch < g.C; ++ch) {
        const double* pl = img + static_cast<long>(ch) * g.plane();
        for (int ky = 0; ky < g.K; ++ky) {
          const int iy = oy * g.S - g.P + ky;
          double* dst = c + (static_cast<long>(ch) * g.K + ky) * g.K;
          for (int kx = 0; kx < g.K; ++kx) {
            const int ix = ox * g.S - g.P + kx;
            dst[kx] = (iy >= 0 && iy < g.H && ix >= 0 && ix < g.W) ? pl[iy * g.W + ix] : 0.0;
          }
        }
      }
    }
}

void im2col(const double* img, const ConvGeom& g, double* col) {
  switch (g.K) {
    case 1: im2col_k<1>(img, g, col); return;
    case 2: im2col_k<2>(img, g, col); return;
    case 3: im2col_k<3>(img, g, col); return;
    case 4: im2col_k<4>(img, g, col); return;
    case 5: im2col_k<5>(img, g, col); return;
    default: im2col_generic(img, g, col); return;
  }
}

// Adjoint of im2col: scatter-add the columns back onto the image plane.
template <int K>
void col2im_add_k(const double* col, const ConvGeom& g, double* img) {
  const long ckk = g.ckk();
  const long plane = g.plane();
  for (int oy = 0; oy < g.Ho; ++oy) {
    const int iy0 = oy * g.S - g.P;
    const bool rows_ok = iy0 >= 0 && iy0 + K <= g.H;
    for (int ox = 0; ox < g.Wo; ++ox) {
      const int ix0 = ox * g.S - g.P;
      const double* c = col + ckk * (static_cast<long>(oy) * g.Wo + ox);
      if (rows_ok && ix0 >= 0 && ix0 + K <= g.W) {
        double* base = img + static_cast<long>(iy0) * g.W + ix0;
        for (int ch = 0; ch < g.C; ++ch) {
          double* p = base + ch * plane;
          const double* src = c + static_cast<long>(ch) * K * K;
          for (int ky = 0; ky < K; ++ky) {
            double* row = p + static_cast<long>(ky) * g.W;
            for (int kx = 0; kx < K; ++kx) row[kx] += src[ky * K + kx];
          }
        }
        continue;
      }
      for (int ch = 0; ch < g.C; ++ch) {
        double* pl = img + static_cast<long>(ch) * plane;
        for (int ky = 0; ky < K; ++ky) {
          const int iy = iy0 + ky;
          if (iy < 0 || iy >= g.H) continue;
          const double* src = c + (static_cast<long>(ch) * K + ky) * K;
          double* row = pl + static_cast<long>(iy) * g.W;
          for (int kx = 0; kx < K; ++kx) {
            const int ix = ix0 + kx;
            if (ix >= 0 && ix < g.W) row[ix] += src[kx];
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeom& g, double* img) {
  switch (g.K) {
    case 3: col2im_add_k<3>(col, g, img); return;
    case 4: col2im_add_k<4>(col, g, img); return;
    case 1: col2im_add_k<1>(col, g, img); return;
    case 2: col2im_add_k<2>(col, g, img); return;
    case 5: col2im_add_k<5>(col, g, img); return;
    default: break;
  }
  for (int oy = 0; oy < g.Ho; ++oy)
    for (int ox = 0; ox < g.Wo; ++ox) {
      const double* c = col + g.ckk() * (static_cast<long>(oy) * g.Wo + ox);
      for (int ch = 0; ch < g.C; ++ch) {
        double* pl = img + static_cast<long>(ch) * g.plane();
        for (int ky = 0; ky < g.K; ++ky) {
          const int iy = oy * g.S - g.P + ky;
          if (iy < 0 || iy >= g.H) continue;
          const double* src = c + (static_cast<long>(ch) * g.K + ky) * g.K;
          for (int kx = 0; kx < g.K; ++kx) {
            const int ix = ox * g.S - g.P + kx;
            if (ix >= 0 && ix < g.W) pl[iy * g.W + ix] += src[kx];
          }
        }
      }
    }
}

void check_kernel(const Tensor& k, const char* op) {
  if (k.ndim() != 4 || k.dim(2) != k.dim(3))
    throw std::invalid_argument(std::string(op) + ": kernel must be [F,C,k,k], got " +
                                shape_str(k.shape));
}

}  // namespace

Var conv2d(Var input, Var kernel, int stride, int pad) {
  Graph& g = *input.graph;
  if (kernel.graph != &g) throw std::logic_error("conv2d: operands from different graphs");
  const Tensor &tx = g.value(input), &tk = g.value(kernel);
  if (tx.ndim() != 4)
    throw std::invalid_argument("conv2d: input must be [N,C,H,W], got " + shape_str(tx.shape));
  check_kernel(tk, "conv2d");
  if (tk.dim(1) != tx.dim(1))
    throw std::invalid_argument("conv2d: kernel channels " + std::to_string(tk.dim(1)) +
                                " do not match input channels " + std::to_string(tx.dim(1)));
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: require stride >= 1, pad >= 0");
  const int n = tx.dim(0), c = tx.dim(1), h = tx.dim(2), w = tx.dim(3);
  const int f = tk.dim(0), k = tk.dim(2);
  if (k > h + 2 * pad || k > w + 2 * pad)
    throw std::invalid_argument("conv2d: kernel extent " + std::to_string(k) +
                                " exceeds padded input " + shape_str(tx.shape));
  if ((h + 2 * pad - k) % stride != 0 || (w + 2 * pad - k) % stride != 0)
    throw std::invalid_argument("conv2d: non-exact output extent for input " +
                                shape_str(tx.shape) + ", kernel " + shape_str(tk.shape) +
                                ", stride " + std::to_string(stride) + ", pad " +
                                std::to_string(pad));
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (w + 2 * pad - k) / stride + 1;
  const ConvGeom geom{c, h, w, k, stride, pad, ho, wo};
  const long ckk = geom.ckk(), pos = geom.positions();
  const long in_item = static_cast<long>(c) * h * w;
  const long out_item = static_cast<long>(f) * pos;

  Tensor out = Tensor::zeros({n, f, ho, wo});
  {
    double* optr = out.values.data();
    const double* xptr = tx.values.data();
    const double* kptr = tk.values.data();
    parallel_for(n, [&](long i) {
      ColMat col(ckk, pos);
      im2col(xptr + i * in_item, geom, col.data());
      Eigen::Map<const RowMat> K(kptr, f, ckk);
      Eigen::Map<RowMat> O(optr + i * out_item, f, pos);
      O.noalias() = K * col;
    });
  }

  bool nx = g.needs_grad(input), nk = g.needs_grad(kernel);
  int o = g.add_node(std::move(out), nx || nk);
  int xi = input.index, ki = kernel.index;
  g.set_backward(o, [&g, o, xi, ki, geom, n, f, ckk, pos, in_item, out_item, nx, nk]() {
    const double* dout = g.grad_ref(o).data();
    const double* xptr = g.node_value(xi).values.data();
    const double* kptr = g.node_value(ki).values.data();
    double* dx = nx ? g.grad_buffer(xi).data() : nullptr;
    std::vector<Eigen::ArrayXd> dk_items;
    if (nk) dk_items.assign(static_cast<std::size_t>(n), Eigen::ArrayXd());
    parallel_for(n, [&](long i) {
      Eigen::Map<const RowMat> dO(dout + i * out_item, f, pos);
      if (nx) {
        Eigen::Map<const RowMat> K(kptr, f, ckk);
        ColMat dcol(ckk, pos);
        dcol.noalias() = K.transpose() * dO;
        col2im_add(dcol.data(), geom, dx + i * in_item);
      }
      if (nk) {
        ColMat col(ckk, pos);
        im2col(xptr + i * in_item, geom, col.data());
        dk_items[static_cast<std::size_t>(i)] = Eigen::ArrayXd::Zero(f * ckk);
        Eigen::Map<RowMat> dK(dk_items[static_cast<std::size_t>(i)].data(), f, ckk);
        dK.noalias() = dO * col.transpose();
      }
    });
    if (nk) {
      Eigen::ArrayXd& dk = g.grad_buffer(ki);
      for (long i = 0; i < n; ++i) dk += dk_items[static_cast<std::size_t>(i)];
    }
  });
  return Var{&g, o};
}

Var conv2d_transposed(Var input, Var kernel, int stride, int pad) {
  Graph& g = *input.graph;
  if (kernel.graph != &g)
    throw std::logic_error("conv2d_transposed: operands from different graphs");
  const Tensor &tx = g.value(input), &tk = g.value(kernel);
  if (tx.ndim() != 4)
    throw std::invalid_argument("conv2d_transposed: input must be [N,F,h,w], got " +
                                shape_str(tx.shape));
  check_kernel(tk, "conv2d_transposed");
  if (tk.dim(0) != tx.dim(1))
    throw std::invalid_argument("conv2d_transposed: kernel leading extent " +
                                std::to_string(tk.dim(0)) + " does not match input channels " +
                                std::to_string(tx.dim(1)));
  if (stride < 1 || pad < 0)
    throw std::invalid_argument("conv2d_transposed: require stride >= 1, pad >= 0");
  const int n = tx.dim(0), f = tx.dim(1), hi = tx.dim(2), wi = tx.dim(3);
  const int c = tk.dim(1), k = tk.dim(2);
  const int ho = (hi - 1) * stride - 2 * pad + k;
  const int wo = (wi - 1) * stride - 2 * pad + k;
  if (ho < 1 || wo < 1)
    throw std::invalid_argument("conv2d_transposed: output extent would be empty for input " +
                                shape_str(tx.shape) + ", kernel " + shape_str(tk.shape));
  // Same geometry as the conv2d that maps [C,ho,wo] onto positions [hi,wi].
  const ConvGeom geom{c, ho, wo, k, stride, pad, hi, wi};
  const long ckk = geom.ckk(), pos = geom.positions();
  const long in_item = static_cast<long>(f) * pos;
  const long out_item = static_cast<long>(c) * ho * wo;

  Tensor out = Tensor::zeros({n, c, ho, wo});
  {
    double* optr = out.values.data();
    const double* xptr = tx.values.data();
    const double* kptr = tk.values.data();
    parallel_for(n, [&](long i) {
      Eigen::Map<const RowMat> K(kptr, f, ckk);
      Eigen::Map<const RowMat> X(xptr + i * in_item, f, pos);
      ColMat col(ckk, pos);
      col.noalias() = K.transpose() * X;
      col2im_add(col.data(), geom, optr + i * out_item);
    });
  }

  bool nx = g.needs_grad(input), nk = g.needs_grad(kernel);
  int o = g.add_node(std::move(out), nx || nk);
  int xi = input.index, ki = kernel.index;
  g.set_backward(o, [&g, o, xi, ki, geom, n, f, ckk, pos, in_item, out_item, nx, nk]() {
    const double* dout = g.grad_ref(o).data();
    const double* xptr = g.node_value(xi).values.data();
    const double* kptr = g.node_value(ki).values.data();
    double* dx = nx ? g.grad_buffer(xi).data() : nullptr;
    std::vector<Eigen::ArrayXd> dk_items;
    if (nk) dk_items.assign(static_cast<std::size_t>(n), Eigen::ArrayXd());
    parallel_for(n, [&](long i) {
      ColMat dcol(ckk, pos);
      im2col(dout + i * out_item, geom, dcol.data());
      if (nx) {
        Eigen::Map<const RowMat> K(kptr, f, ckk);
        Eigen::Map<RowMat> dX(dx + i * in_item, f, pos);
        dX.noalias() += K * dcol;
      }
      if (nk) {
        Eigen::Map<const RowMat> X(xptr + i * in_item, f, pos);
        dk_items[static_cast<std::size_t>(i)] = Eigen::ArrayXd::Zero(f * ckk);
        Eigen::Map<RowMat> dK(dk_items[static_cast<std::size_t>(i)].data(), f, ckk);
        dK.noalias() = X * dcol.transpose();
      }
    });
    if (nk) {
      Eigen::ArrayXd& dk = g.grad_buffer(ki);
      for (long i = 0; i < n; ++i) dk += dk_items[static_cast<std::size_t>(i)];
    }
  });
  return Var{&g, o};
}

}  // namespace dsrgan
