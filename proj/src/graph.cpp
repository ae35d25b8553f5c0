#include "dsrgan/graph.hpp"

#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace dsrgan {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

int Graph::check(Var v) const {
  if (v.graph != this || v.index < 0 || static_cast<std::size_t>(v.index) >= nodes_.size())
    throw std::logic_error("Var does not belong to this graph");
  return v.index;
}

Var Graph::leaf(Tensor* bound) {
  Node n;
  n.val = *bound;  // snapshot of the current values
  n.val.grad.resize(0);
  n.needs_grad = bound->requires_grad;
  n.bound = bound;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::constant(Tensor value) {
  Node n;
  n.val = std::move(value);
  n.val.grad.resize(0);
  n.needs_grad = false;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

int Graph::add_node(Tensor val, bool needs_grad) {
  Node n;
  n.val = std::move(val);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Eigen::ArrayXd& Graph::grad_buffer(int i) {
  Node& n = nodes_[static_cast<std::size_t>(i)];
  if (n.grad.size() != n.val.size()) n.grad = Eigen::ArrayXd::Zero(n.val.size());
  return n.grad;
}

Eigen::ArrayXd Graph::grad_of(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(check(v))];
  if (n.grad.size() > 0) return n.grad;
  return Eigen::ArrayXd::Zero(n.val.size());
}

void Graph::backward(Var loss) {
  int li = check(loss);
  if (nodes_[static_cast<std::size_t>(li)].val.size() != 1)
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                shape_str(nodes_[static_cast<std::size_t>(li)].val.shape));
  if (consumed_) throw std::logic_error("graph already consumed by a backward pass");
  consumed_ = true;

  grad_buffer(li)[0] = 1.0;
  for (int i = li; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() > 0 && n.back) n.back();
  }
  for (Node& n : nodes_) {
    if (n.bound && n.bound->requires_grad && n.grad.size() > 0)
      n.bound->grad_buffer() += n.grad;
  }
}

namespace {

Graph& same_graph(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph)
    throw std::logic_error("operands belong to different graphs");
  return *a.graph;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape)
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
}

}  // namespace

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor &ta = g.value(a), &tb = g.value(b);
  require_same_shape(ta, tb, "add");
  bool na = g.needs_grad(a), nb = g.needs_grad(b);
  int out = g.add_node(Tensor(ta.shape, ta.values + tb.values), na || nb);
  int ai = a.index, bi = b.index;
  g.set_backward(out, [&g, out, ai, bi, na, nb]() {
    const Eigen::ArrayXd& go = g.grad_ref(out);
    if (na) g.grad_buffer(ai) += go;
    if (nb) g.grad_buffer(bi) += go;
  });
  return Var{&g, out};
}

Var sub(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor &ta = g.value(a), &tb = g.value(b);
  require_same_shape(ta, tb, "sub");
  bool na = g.needs_grad(a), nb = g.needs_grad(b);
  int out = g.add_node(Tensor(ta.shape, ta.values - tb.values), na || nb);
  int ai = a.index, bi = b.index;
  g.set_backward(out, [&g, out, ai, bi, na, nb]() {
    const Eigen::ArrayXd& go = g.grad_ref(out);
    if (na) g.grad_buffer(ai) += go;
    if (nb) g.grad_buffer(bi) -= go;
  });
  return Var{&g, out};
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor &ta = g.value(a), &tb = g.value(b);
  require_same_shape(ta, tb, "mul");
  bool na = g.needs_grad(a), nb = g.needs_grad(b);
  int out = g.add_node(Tensor(ta.shape, ta.values * tb.values), na || nb);
  int ai = a.index, bi = b.index;
  g.set_backward(out, [&g, out, ai, bi, na, nb]() {
    const Eigen::ArrayXd& go = g.grad_ref(out);
    if (na) g.grad_buffer(ai) += go * g.node_value(bi).values;
    if (nb) g.grad_buffer(bi) += go * g.node_value(ai).values;
  });
  return Var{&g, out};
}

Var affine(Var x, double a, double b) {
  Graph& g = *x.graph;
  const Tensor& tx = g.value(x);
  bool needs = g.needs_grad(x);
  int out = g.add_node(Tensor(tx.shape, a * tx.values + b), needs);
  int xi = x.index;
  g.set_backward(out, [&g, out, xi, a]() { g.grad_buffer(xi) += a * g.grad_ref(out); });
  return Var{&g, out};
}

Var mul_scalar(Var x, double a) { return affine(x, a, 0.0); }
Var one_minus(Var x) { return affine(x, -1.0, 1.0); }

namespace {
const double kOneBelow = std::nextafter(1.0, 0.0);
}

Var activation(Var x, Activation kind, double alpha) {
  Graph& g = *x.graph;
  const Tensor& tx = g.value(x);
  if (kind == Activation::LeakyRelu && !(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("leaky_relu: alpha must be in (0,1)");
  const long n = tx.size();
  Eigen::ArrayXd y(n);
  const double* in = tx.values.data();
  double* out_p = y.data();
  switch (kind) {
    case Activation::Relu:
      for (long i = 0; i < n; ++i) out_p[i] = in[i] > 0.0 ? in[i] : 0.0;
      break;
    case Activation::LeakyRelu:
      for (long i = 0; i < n; ++i) out_p[i] = in[i] > 0.0 ? in[i] : alpha * in[i];
      break;
    case Activation::Tanh:
      // keep the codomain open even where double rounding saturates
      for (long i = 0; i < n; ++i) {
        double v = std::tanh(in[i]);
        out_p[i] = v >= 1.0 ? kOneBelow : (v <= -1.0 ? -kOneBelow : v);
      }
      break;
    case Activation::Sigmoid:
      for (long i = 0; i < n; ++i) {
        double v = 0.5 * std::tanh(0.5 * in[i]) + 0.5;
        out_p[i] = v >= 1.0 ? kOneBelow : (v <= 0.0 ? 1.0 - kOneBelow : v);
      }
      break;
  }
  if (g.recording_branches() && (kind == Activation::Relu || kind == Activation::LeakyRelu))
    for (long i = 0; i < n; ++i) g.note_branch(in[i] > 0.0);
  bool needs = g.needs_grad(x);
  int out = g.add_node(Tensor(tx.shape, std::move(y)), needs);
  int xi = x.index;
  g.set_backward(out, [&g, out, xi, kind, alpha]() {
    const Eigen::ArrayXd& go = g.grad_ref(out);
    const double* gp = go.data();
    const double* xin = g.node_value(xi).values.data();
    const double* yv = g.node_value(out).values.data();
    Eigen::ArrayXd& dst = g.grad_buffer(xi);
    double* d = dst.data();
    const long n = go.size();
    switch (kind) {
      case Activation::Relu:
        for (long i = 0; i < n; ++i)
          if (xin[i] > 0.0) d[i] += gp[i];
        break;
      case Activation::LeakyRelu:
        for (long i = 0; i < n; ++i) d[i] += xin[i] > 0.0 ? gp[i] : alpha * gp[i];
        break;
      case Activation::Tanh:
        for (long i = 0; i < n; ++i) d[i] += gp[i] * (1.0 - yv[i] * yv[i]);
        break;
      case Activation::Sigmoid:
        for (long i = 0; i < n; ++i) d[i] += gp[i] * yv[i] * (1.0 - yv[i]);
        break;
    }
  });
  return Var{&g, out};
}

Var relu(Var x) { return activation(x, Activation::Relu); }
Var leaky_relu(Var x, double alpha) { return activation(x, Activation::LeakyRelu, alpha); }
Var tanh_of(Var x) { return activation(x, Activation::Tanh); }
Var sigmoid_of(Var x) { return activation(x, Activation::Sigmoid); }

Var dense(Var input, Var weight, Var bias) {
  Graph& g = same_graph(input, weight);
  same_graph(weight, bias);
  const Tensor &tx = g.value(input), &tw = g.value(weight), &tb = g.value(bias);
  if (tx.ndim() != 2 || tw.ndim() != 2 || tb.ndim() != 1)
    throw std::invalid_argument("dense: expected input [N,D], weight [D,M], bias [M]; got " +
                                shape_str(tx.shape) + ", " + shape_str(tw.shape) + ", " +
                                shape_str(tb.shape));
  const int n = tx.dim(0), d = tx.dim(1), m = tw.dim(1);
  if (tw.dim(0) != d || tb.dim(0) != m)
    throw std::invalid_argument("dense: inner extents disagree: input " + shape_str(tx.shape) +
                                ", weight " + shape_str(tw.shape) + ", bias " +
                                shape_str(tb.shape));

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> X(tx.values.data(), n, d);
  Eigen::Map<const RowMat> W(tw.values.data(), d, m);
  Tensor out = Tensor::zeros({n, m});
  Eigen::Map<RowMat> Y(out.values.data(), n, m);
  Y.noalias() = X * W;
  Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(tb.values.data(), m);

  bool nx = g.needs_grad(input), nw = g.needs_grad(weight), nb = g.needs_grad(bias);
  int o = g.add_node(std::move(out), nx || nw || nb);
  int xi = input.index, wi = weight.index, bi = bias.index;
  g.set_backward(o, [&g, o, xi, wi, bi, n, d, m, nx, nw, nb]() {
    Eigen::Map<const RowMat> dY(g.grad_ref(o).data(), n, m);
    if (nx) {
      Eigen::Map<const RowMat> W(g.node_value(wi).values.data(), d, m);
      Eigen::Map<RowMat> dX(g.grad_buffer(xi).data(), n, d);
      dX.noalias() += dY * W.transpose();
    }
    if (nw) {
      Eigen::Map<const RowMat> X(g.node_value(xi).values.data(), n, d);
      Eigen::Map<RowMat> dW(g.grad_buffer(wi).data(), d, m);
      dW.noalias() += X.transpose() * dY;
    }
    if (nb) {
      Eigen::Map<Eigen::RowVectorXd> dB(g.grad_buffer(bi).data(), m);
      dB += dY.colwise().sum();
    }
  });
  return Var{&g, o};
}

Var batch_norm(Var input, Var gamma, Var beta, BnMode mode, Tensor* running_mean,
               Tensor* running_var, double momentum, double eps) {
  Graph& g = same_graph(input, gamma);
  same_graph(gamma, beta);
  const Tensor &tx = g.value(input), &tg = g.value(gamma), &tb = g.value(beta);
  if (tx.ndim() != 4)
    throw std::invalid_argument("batch_norm: expected [N,C,H,W], got " + shape_str(tx.shape));
  const int n = tx.dim(0), c = tx.dim(1), h = tx.dim(2), w = tx.dim(3);
  if (tg.shape != Shape{c} || tb.shape != Shape{c})
    throw std::invalid_argument("batch_norm: gamma/beta must be [" + std::to_string(c) +
                                "], got " + shape_str(tg.shape) + " and " + shape_str(tb.shape));
  if (running_mean->shape != Shape{c} || running_var->shape != Shape{c})
    throw std::invalid_argument("batch_norm: running stats must be [C]");

  const long plane = static_cast<long>(h) * w;
  const long per_channel = static_cast<long>(n) * plane;
  const long cstride = static_cast<long>(c) * plane;

  Eigen::ArrayXd mu(c), var(c);
  if (mode == BnMode::Train) {
    for (int ch = 0; ch < c; ++ch) {
      double s = 0.0, s2 = 0.0;
      for (int b0 = 0; b0 < n; ++b0) {
        const double* p = tx.values.data() + b0 * cstride + ch * plane;
        for (long i = 0; i < plane; ++i) {
          s += p[i];
          s2 += p[i] * p[i];
        }
      }
      mu[ch] = s / static_cast<double>(per_channel);
      var[ch] = s2 / static_cast<double>(per_channel) - mu[ch] * mu[ch];
      if (var[ch] < 0.0) var[ch] = 0.0;  // guard against cancellation
    }
    running_mean->values = (1.0 - momentum) * running_mean->values + momentum * mu;
    running_var->values = (1.0 - momentum) * running_var->values + momentum * var;
  } else {
    mu = running_mean->values;
    var = running_var->values;
  }
  Eigen::ArrayXd inv_std = (var + eps).sqrt().inverse();

  Tensor out = Tensor::zeros(tx.shape);
  auto xhat = std::make_shared<Eigen::ArrayXd>(tx.values.size());
  for (int b0 = 0; b0 < n; ++b0) {
    for (int ch = 0; ch < c; ++ch) {
      const long off = b0 * cstride + ch * plane;
      auto xs = tx.values.segment(off, plane);
      auto hs = xhat->segment(off, plane);
      hs = (xs - mu[ch]) * inv_std[ch];
      out.values.segment(off, plane) = tg.values[ch] * hs + tb.values[ch];
    }
  }

  bool nx = g.needs_grad(input), ng = g.needs_grad(gamma), nb = g.needs_grad(beta);
  int o = g.add_node(std::move(out), nx || ng || nb);
  int xi = input.index, gi = gamma.index, bi = beta.index;
  bool train = mode == BnMode::Train;
  g.set_backward(o, [&g, o, xi, gi, bi, n, c, plane, cstride, per_channel, xhat,
                     inv_std = std::move(inv_std), nx, ng, nb, train]() {
    const Eigen::ArrayXd& go = g.grad_ref(o);
    const Eigen::ArrayXd& gam = g.node_value(gi).values;
    for (int ch = 0; ch < c; ++ch) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int b0 = 0; b0 < n; ++b0) {
        const long off = b0 * cstride + ch * plane;
        sum_dy += go.segment(off, plane).sum();
        sum_dy_xhat += (go.segment(off, plane) * xhat->segment(off, plane)).sum();
      }
      if (nb) g.grad_buffer(bi)[ch] += sum_dy;
      if (ng) g.grad_buffer(gi)[ch] += sum_dy_xhat;
      if (nx) {
        const double m = static_cast<double>(per_channel);
        for (int b0 = 0; b0 < n; ++b0) {
          const long off = b0 * cstride + ch * plane;
          auto dy = go.segment(off, plane);
          auto xh = xhat->segment(off, plane);
          if (train) {
            g.grad_buffer(xi).segment(off, plane) +=
                gam[ch] * inv_std[ch] * (dy - sum_dy / m - xh * (sum_dy_xhat / m));
          } else {
            g.grad_buffer(xi).segment(off, plane) += gam[ch] * inv_std[ch] * dy;
          }
        }
      }
    }
  });
  return Var{&g, o};
}

Var channel_bias(Var x, Var bias) {
  Graph& g = same_graph(x, bias);
  const Tensor &tx = g.value(x), &tb = g.value(bias);
  if (tx.ndim() != 4 || tb.ndim() != 1 || tb.dim(0) != tx.dim(1))
    throw std::invalid_argument("channel_bias: expected [N,C,H,W] and [C], got " +
                                shape_str(tx.shape) + " and " + shape_str(tb.shape));
  const int n = tx.dim(0), c = tx.dim(1);
  const long plane = static_cast<long>(tx.dim(2)) * tx.dim(3);
  Tensor out = tx;
  out.requires_grad = false;
  for (int b0 = 0; b0 < n; ++b0)
    for (int ch = 0; ch < c; ++ch)
      out.values.segment((static_cast<long>(b0) * c + ch) * plane, plane) += tb.values[ch];
  bool nx = g.needs_grad(x), nb = g.needs_grad(bias);
  int o = g.add_node(std::move(out), nx || nb);
  int xi = x.index, bi = bias.index;
  g.set_backward(o, [&g, o, xi, bi, n, c, plane, nx, nb]() {
    const Eigen::ArrayXd& go = g.grad_ref(o);
    if (nx) g.grad_buffer(xi) += go;
    if (nb) {
      Eigen::ArrayXd& db = g.grad_buffer(bi);
      for (int b0 = 0; b0 < n; ++b0)
        for (int ch = 0; ch < c; ++ch)
          db[ch] += go.segment((static_cast<long>(b0) * c + ch) * plane, plane).sum();
    }
  });
  return Var{&g, o};
}

Var channel_concat(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor &ta = g.value(a), &tb = g.value(b);
  if (ta.ndim() != 4 || tb.ndim() != 4)
    throw std::invalid_argument("channel_concat: expected [N,C,H,W] operands, got " +
                                shape_str(ta.shape) + " and " + shape_str(tb.shape));
  if (ta.dim(0) != tb.dim(0) || ta.dim(2) != tb.dim(2) || ta.dim(3) != tb.dim(3))
    throw std::invalid_argument("channel_concat: batch/spatial mismatch " + shape_str(ta.shape) +
                                " vs " + shape_str(tb.shape));
  const int n = ta.dim(0), c1 = ta.dim(1), c2 = tb.dim(1), h = ta.dim(2), w = ta.dim(3);
  const long plane = static_cast<long>(h) * w;
  Tensor out = Tensor::zeros({n, c1 + c2, h, w});
  for (int b0 = 0; b0 < n; ++b0) {
    out.values.segment(b0 * (c1 + c2) * plane, c1 * plane) =
        ta.values.segment(b0 * c1 * plane, c1 * plane);
    if (c2 > 0)
      out.values.segment(b0 * (c1 + c2) * plane + c1 * plane, c2 * plane) =
          tb.values.segment(b0 * c2 * plane, c2 * plane);
  }
  bool na = g.needs_grad(a), nb = g.needs_grad(b);
  int o = g.add_node(std::move(out), na || nb);
  int ai = a.index, bi = b.index;
  g.set_backward(o, [&g, o, ai, bi, n, c1, c2, plane, na, nb]() {
    const Eigen::ArrayXd& go = g.grad_ref(o);
    for (int b0 = 0; b0 < n; ++b0) {
      if (na)
        g.grad_buffer(ai).segment(b0 * c1 * plane, c1 * plane) +=
            go.segment(b0 * (c1 + c2) * plane, c1 * plane);
      if (nb && c2 > 0)
        g.grad_buffer(bi).segment(b0 * c2 * plane, c2 * plane) +=
            go.segment(b0 * (c1 + c2) * plane + c1 * plane, c2 * plane);
    }
  });
  return Var{&g, o};
}

Var reshape(Var x, Shape shape) {
  Graph& g = *x.graph;
  const Tensor& tx = g.value(x);
  if (numel(shape) != tx.size())
    throw std::invalid_argument("reshape: cannot view " + shape_str(tx.shape) + " as " +
                                shape_str(shape));
  bool needs = g.needs_grad(x);
  int o = g.add_node(Tensor(std::move(shape), tx.values), needs);
  int xi = x.index;
  g.set_backward(o, [&g, o, xi]() { g.grad_buffer(xi) += g.grad_ref(o); });
  return Var{&g, o};
}

Var sum(Var x) {
  Graph& g = *x.graph;
  const Tensor& tx = g.value(x);
  bool needs = g.needs_grad(x);
  int o = g.add_node(Tensor::scalar(tx.values.sum()), needs);
  int xi = x.index;
  g.set_backward(o, [&g, o, xi]() { g.grad_buffer(xi) += g.grad_ref(o)[0]; });
  return Var{&g, o};
}

Var mean(Var x) {
  Graph& g = *x.graph;
  const Tensor& tx = g.value(x);
  if (tx.size() == 0) throw std::invalid_argument("mean of an empty tensor");
  const double inv = 1.0 / static_cast<double>(tx.size());
  bool needs = g.needs_grad(x);
  int o = g.add_node(Tensor::scalar(tx.values.mean()), needs);
  int xi = x.index;
  g.set_backward(o, [&g, o, xi, inv]() { g.grad_buffer(xi) += g.grad_ref(o)[0] * inv; });
  return Var{&g, o};
}

Var absolute(Var x) {
  Graph& g = *x.graph;
  const Tensor& tx = g.value(x);
  if (g.recording_branches())
    for (long i = 0; i < tx.size(); ++i) g.note_branch(tx.values[i] >= 0.0);
  bool needs = g.needs_grad(x);
  int o = g.add_node(Tensor(tx.shape, tx.values.abs()), needs);
  int xi = x.index;
  g.set_backward(o, [&g, o, xi]() {
    const Eigen::ArrayXd& xin = g.node_value(xi).values;
    g.grad_buffer(xi) += g.grad_ref(o) * xin.sign();
  });
  return Var{&g, o};
}

Var log_clamped(Var x, double eps) {
  Graph& g = *x.graph;
  const Tensor& tx = g.value(x);
  if (g.recording_branches())
    for (long i = 0; i < tx.size(); ++i)
      g.note_branch(tx.values[i] > eps && tx.values[i] < 1.0 - eps);
  Eigen::ArrayXd clamped = tx.values.max(eps).min(1.0 - eps);
  bool needs = g.needs_grad(x);
  int o = g.add_node(Tensor(tx.shape, clamped.log()), needs);
  int xi = x.index;
  g.set_backward(o, [&g, o, xi, eps]() {
    const Eigen::ArrayXd& xin = g.node_value(xi).values;
    Eigen::ArrayXd inside =
        ((xin > eps) && (xin < 1.0 - eps)).select(xin.inverse(), Eigen::ArrayXd::Zero(xin.size()));
    g.grad_buffer(xi) += g.grad_ref(o) * inside;
  });
  return Var{&g, o};
}

Var row_l2_norm(Var x) {
  Graph& g = *x.graph;
  const Tensor& tx = g.value(x);
  if (tx.ndim() != 2)
    throw std::invalid_argument("row_l2_norm: expected [N,D], got " + shape_str(tx.shape));
  const int n = tx.dim(0), d = tx.dim(1);
  Tensor out = Tensor::zeros({n});
  for (int i = 0; i < n; ++i)
    out.values[i] = std::sqrt(tx.values.segment(static_cast<long>(i) * d, d).square().sum());
  if (g.recording_branches())
    for (int i = 0; i < n; ++i) g.note_branch(out.values[i] > 0.0);
  bool needs = g.needs_grad(x);
  int o = g.add_node(std::move(out), needs);
  int xi = x.index;
  g.set_backward(o, [&g, o, xi, n, d]() {
    const Eigen::ArrayXd& go = g.grad_ref(o);
    const Eigen::ArrayXd& xin = g.node_value(xi).values;
    const Eigen::ArrayXd& norms = g.node_value(o).values;
    for (int i = 0; i < n; ++i) {
      if (norms[i] > 0.0)
        g.grad_buffer(xi).segment(static_cast<long>(i) * d, d) +=
            (go[i] / norms[i]) * xin.segment(static_cast<long>(i) * d, d);
    }
  });
  return Var{&g, o};
}

}  // namespace dsrgan
