#ifndef DSRGAN_GRAPH_HPP
#define DSRGAN_GRAPH_HPP

#include <deque>
#include <new>
#include <type_traits>
#include <utility>
#include <vector>

#include "dsrgan/tensor.hpp"

namespace dsrgan {

class Graph;

namespace detail {

// Move-only callable with inline storage; the tape stores one per node and
// a heap-allocating std::function would dominate graph-building time.
class BackFn {
 public:
  static constexpr std::size_t kCapacity = 192;

  BackFn() = default;
  template <typename F, typename = std::enable_if_t<!std::is_same_v<std::decay_t<F>, BackFn>>>
  BackFn(F&& f) {  // NOLINT(google-explicit-constructor)
    using Fn = std::decay_t<F>;
    static_assert(sizeof(Fn) <= kCapacity, "closure exceeds inline capacity");
    ::new (buf_) Fn(std::forward<F>(f));
    invoke_ = [](void* p) { (*static_cast<Fn*>(p))(); };
    relocate_ = [](void* dst, void* src) {
      Fn* s = static_cast<Fn*>(src);
      ::new (dst) Fn(std::move(*s));
      s->~Fn();
    };
    destroy_ = [](void* p) { static_cast<Fn*>(p)->~Fn(); };
  }
  BackFn(BackFn&& o) noexcept { move_from(o); }
  BackFn& operator=(BackFn&& o) noexcept {
    if (this != &o) {
      reset();
      move_from(o);
    }
    return *this;
  }
  BackFn(const BackFn&) = delete;
  BackFn& operator=(const BackFn&) = delete;
  ~BackFn() { reset(); }

  explicit operator bool() const { return invoke_ != nullptr; }
  void operator()() { invoke_(buf_); }

 private:
  void reset() {
    if (destroy_) destroy_(buf_);
    invoke_ = nullptr;
    relocate_ = nullptr;
    destroy_ = nullptr;
  }
  void move_from(BackFn& o) {
    if (o.invoke_) {
      o.relocate_(buf_, o.buf_);
      invoke_ = o.invoke_;
      relocate_ = o.relocate_;
      destroy_ = o.destroy_;
      o.invoke_ = nullptr;
      o.relocate_ = nullptr;
      o.destroy_ = nullptr;
    }
  }

  alignas(std::max_align_t) unsigned char buf_[kCapacity];
  void (*invoke_)(void*) = nullptr;
  void (*relocate_)(void*, void*) = nullptr;
  void (*destroy_)(void*) = nullptr;
};

}  // namespace detail

// Handle to a node in a Graph. Cheap to copy; valid for the graph's lifetime.
struct Var {
  Graph* graph = nullptr;
  int index = -1;
};

enum class Activation { Relu, LeakyRelu, Tanh, Sigmoid };
enum class BnMode { Train, Eval };

// Reverse-mode tape. Built once per forward pass and consumed by a single
// backward() call; no higher-order derivatives.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf bound to external storage. Gradients accumulate into bound->grad
  // after backward() when bound->requires_grad is set at bind time.
  Var leaf(Tensor* bound);
  // Unbound constant input.
  Var constant(Tensor value);

  const Tensor& value(Var v) const { return nodes_[check(v)].val; }
  // Gradient of the node; zero tensor if backward never reached it.
  Eigen::ArrayXd grad_of(Var v) const;
  bool needs_grad(Var v) const { return nodes_[check(v)].needs_grad; }

  // Reverse accumulation from a scalar loss. Each node is visited exactly
  // once, in reverse creation order.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Branch recording: when enabled, kinked operations (relu, leaky_relu,
  // absolute, log_clamped, row_l2_norm at zero) fold their branch choices
  // into a signature. Two evaluations with equal signatures lie on the
  // same smooth piece of the computation, which is what makes a finite
  // difference between them a valid derivative estimate.
  void record_branches(bool on) { record_branches_ = on; }
  bool recording_branches() const { return record_branches_; }
  void note_branch(bool taken) {
    sig_ = (sig_ ^ (taken ? 0x9e3779b97f4a7c15ULL : 0xc2b2ae3d27d4eb4fULL)) * 0x100000001b3ULL;
  }
  std::uint64_t branch_signature() const { return sig_; }

  // --- low-level node construction used by the operator free functions ---
  int add_node(Tensor val, bool needs_grad);
  template <typename F>
  void set_backward(int i, F&& back) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.needs_grad) n.back = detail::BackFn(std::forward<F>(back));
  }
  Eigen::ArrayXd& grad_buffer(int i);
  bool grad_present(int i) const { return nodes_[static_cast<std::size_t>(i)].grad.size() > 0; }
  const Eigen::ArrayXd& grad_ref(int i) const { return nodes_[static_cast<std::size_t>(i)].grad; }
  const Tensor& node_value(int i) const { return nodes_[static_cast<std::size_t>(i)].val; }

 private:
  struct Node {
    Tensor val;
    Eigen::ArrayXd grad;  // lazily allocated during backward
    bool needs_grad = false;
    Tensor* bound = nullptr;
    detail::BackFn back;  // empty for leaves/constants
  };

  int check(Var v) const;

  std::deque<Node> nodes_;  // deque: node references stay valid as the tape grows
  bool consumed_ = false;
  bool record_branches_ = false;
  std::uint64_t sig_ = 1469598103934665603ULL;
};

// ---- operators -------------------------------------------------------------
// All free functions append one node to the graph of their operands and
// return a handle to it. Shape violations throw std::invalid_argument with
// the offending shapes spelled out.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// a*x + b elementwise.
Var affine(Var x, double a, double b);
Var mul_scalar(Var x, double a);
Var one_minus(Var x);

Var activation(Var x, Activation kind, double alpha = 0.01);
Var relu(Var x);
Var leaky_relu(Var x, double alpha);
Var tanh_of(Var x);
Var sigmoid_of(Var x);

// input [N,C,H,W] * kernel [F,C,k,k] -> [N,F,H',W'], H' = (H+2p-k)/s + 1.
// The output extent must divide exactly.
Var conv2d(Var input, Var kernel, int stride, int pad);
// input [N,F,h,w] * kernel [F,C,k,k] -> [N,C,H,W], H = (h-1)s - 2p + k.
// Forward equals the backward-data pass of conv2d with the same kernel.
Var conv2d_transposed(Var input, Var kernel, int stride, int pad);

// input [N,D] * weight [D,M] + bias [M] -> [N,M].
Var dense(Var input, Var weight, Var bias);

// Per-channel batch normalization over [N,C,H,W]. In Train mode the batch
// statistics are used and the running statistics (external storage, [C]
// each) are updated in place by EMA; in Eval mode the running statistics
// are read. Never divides by zero: eps guards the variance.
Var batch_norm(Var input, Var gamma, Var beta, BnMode mode, Tensor* running_mean,
               Tensor* running_var, double momentum = 0.1, double eps = 1e-5);

// [N,C,H,W] + [C] broadcast over batch and space.
Var channel_bias(Var x, Var bias);

// [N,C1,H,W] ++ [N,C2,H,W] -> [N,C1+C2,H,W]; a occupies the first C1 channels.
Var channel_concat(Var a, Var b);

Var reshape(Var x, Shape shape);

Var sum(Var x);
Var mean(Var x);
Var absolute(Var x);
// log(clamp(x, eps, 1-eps)); gradient is passed through only inside the
// clamp region.
Var log_clamped(Var x, double eps = 1e-7);
// [N,D] -> [N]; per-row Euclidean norm, with zero gradient at exactly zero.
Var row_l2_norm(Var x);

}  // namespace dsrgan

#endif
