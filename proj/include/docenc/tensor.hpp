#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "docenc/common.hpp"

namespace docenc {

using Shape = std::vector<size_t>;

std::string shape_str(const Shape& s);
size_t shape_numel(const Shape& s);

// Dense tensor handle with shared storage. Gradients live next to the values;
// a tensor created as a constant never accumulates gradient.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real v);
  static Tensor from(Shape shape, std::vector<real> values, bool requires_grad = false);
  static Tensor scalar(real v);
  // Learnable parameter, uniform init in [lo, hi).
  static Tensor param(Shape shape, Rng& rng, real lo = static_cast<real>(-0.05),
                      real hi = static_cast<real>(0.05));
  // Fan-in-scaled uniform init, +/- 1/sqrt(last extent). Flat +/-0.05 loses
  // the input signal across the stacked LSTMs at desk-scale widths.
  static Tensor fan_in_param(Shape shape, Rng& rng);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  size_t rank() const { return d_->shape.size(); }
  size_t dim(size_t i) const { return d_->shape[i]; }
  size_t numel() const { return d_->value.size(); }

  std::vector<real>& value() { return d_->value; }
  const std::vector<real>& value() const { return d_->value; }
  real item() const;

  bool requires_grad() const { return d_->requires_grad; }
  bool has_grad() const { return !d_->grad.empty(); }
  // Grad buffer, zero-allocated on first touch. Only valid on tensors that
  // participate in differentiation.
  std::vector<real>& grad();
  const std::vector<real>& grad() const;
  void zero_grad();

  // Identity (shared storage), used as key in graphs and stores.
  const void* id() const { return d_.get(); }
  bool same(const Tensor& o) const { return d_ == o.d_; }

 private:
  friend class Graph;
  struct Data {
    Shape shape;
    std::vector<real> value;
    std::vector<real> grad;
    bool requires_grad = false;
    bool is_node = false;  // produced by a graph operation
  };
  std::shared_ptr<Data> d_;
  static Tensor wrap(std::shared_ptr<Data> d);
};

enum class EwiseKind { add, sub, mul };
enum class ActKind { sigmoid, tanh, relu };
enum class PoolKind { max, avg };

// Reverse-mode differentiation tape. Nodes are appended in execution order;
// inputs of a node always precede it, so backward is a single reverse sweep.
// Graphs are rebuilt per training step (define-by-run).
class Graph {
 public:
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor matvec(const Tensor& a, const Tensor& x);
  Tensor ewise(EwiseKind kind, const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b) { return ewise(EwiseKind::add, a, b); }
  Tensor sub(const Tensor& a, const Tensor& b) { return ewise(EwiseKind::sub, a, b); }
  Tensor mul(const Tensor& a, const Tensor& b) { return ewise(EwiseKind::mul, a, b); }
  Tensor activation(ActKind kind, const Tensor& a);
  Tensor sigmoid(const Tensor& a) { return activation(ActKind::sigmoid, a); }
  Tensor tanh(const Tensor& a) { return activation(ActKind::tanh, a); }
  Tensor relu(const Tensor& a) { return activation(ActKind::relu, a); }

  Tensor concat(std::span<const Tensor> ts, size_t axis);
  Tensor concat(std::initializer_list<Tensor> ts, size_t axis);
  // Stack T vectors of equal length d into a [T x d] matrix.
  Tensor stack_rows(std::span<const Tensor> rows);
  Tensor row(const Tensor& m, size_t i);
  Tensor slice(const Tensor& v, size_t begin, size_t len);

  Tensor pool(PoolKind kind, const Tensor& seq);
  Tensor pool_max(const Tensor& seq) { return pool(PoolKind::max, seq); }
  Tensor pool_avg(const Tensor& seq) { return pool(PoolKind::avg, seq); }

  Tensor reduce_sum(const Tensor& a);
  Tensor softmax(const Tensor& v);
  Tensor softmax_xent(const Tensor& logits, size_t target);
  Tensor scale(const Tensor& a, real c);
  // Vector times 1-element tensor, differentiable in both.
  Tensor smul(const Tensor& v, const Tensor& s);
  Tensor gather_rows(const Tensor& table, std::span<const int> ids);
  // in: [L x E], kernel: [F x (width*E)], bias: [F] -> [L-width+1 x F]
  Tensor conv1d(const Tensor& in, const Tensor& kernel, const Tensor& bias, size_t width);
  Tensor vsum(std::span<const Tensor> scalars);

  // dot(a, b) as a scalar tensor.
  Tensor dot(const Tensor& a, const Tensor& b) { return reduce_sum(mul(a, b)); }
  // x[k] -> W[m x k] * x + b[m]
  Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add(matvec(w, x), b);
  }

  // Populates grads of every tensor reachable from loss. Loss must be a
  // scalar produced by this graph. Repeated parameter uses accumulate.
  void backward(const Tensor& loss);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    const char* kind;
    std::vector<Tensor> ins;
    Tensor out;
    std::function<void(Node&)> back;
  };
  std::vector<Node> nodes_;

  Tensor emit(const char* kind, std::vector<Tensor> ins, Shape out_shape,
              std::function<void(Node&)> back);
  static bool wants_grad(const Tensor& t) {
    return t.d_->requires_grad || t.d_->is_node;
  }
  static void accum(const Tensor& t, size_t i, real v) {
    if (!wants_grad(t)) return;
    auto& g = t.d_->grad;
    if (g.empty()) g.assign(t.d_->value.size(), 0);
    g[i] += v;
  }
};

// Ordered named-parameter registry. Insertion order is the deterministic
// iteration order used by the optimizer and the checkpoint writer.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor t);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  size_t size() const { return items_.size(); }
  void zero_grad();
  // Names with any of the given prefixes.
  std::vector<std::string> names_with_prefix(std::span<const std::string> prefixes) const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

struct AdamConfig {
  real lr = static_cast<real>(1e-3);
  real beta1 = static_cast<real>(0.9);
  real beta2 = static_cast<real>(0.999);
  real eps = static_cast<real>(1e-8);
};

// Bias-corrected adaptive-moment optimizer over a ParamStore.
class Adam {
 public:
  Adam(const ParamStore& params, AdamConfig cfg);
  void step();
  uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  // Moment buffers aligned with params(), for checkpointing.
  std::vector<real>& moment1(size_t i) { return m_[i]; }
  std::vector<real>& moment2(size_t i) { return v_[i]; }
  const std::vector<real>& moment1(size_t i) const { return m_[i]; }
  const std::vector<real>& moment2(size_t i) const { return v_[i]; }
  const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
  void set_steps(uint64_t t) { t_ = t; }

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::vector<real>> m_, v_;
  uint64_t t_ = 0;
  AdamConfig cfg_;
};

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
real clip_grad_norm(const ParamStore& params, real max_norm);

}  // namespace docenc
