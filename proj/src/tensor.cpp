#include "docenc/tensor.hpp"
#include <cstdlib>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace docenc {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (size_t d : s) n *= d;
  return n;
}

std::string Rng::state() const {
  std::ostringstream os;
  os << eng_;
  return os.str();
}

void Rng::restore(const std::string& s) {
  std::istringstream is(s);
  is >> eng_;
  if (!is) throw DataError("bad rng state string");
}

Tensor Tensor::wrap(std::shared_ptr<Data> d) {
  Tensor t;
  t.d_ = std::move(d);
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto d = std::make_shared<Data>();
  d->value.assign(shape_numel(shape), 0);
  d->shape = std::move(shape);
  d->requires_grad = requires_grad;
  return wrap(std::move(d));
}

Tensor Tensor::full(Shape shape, real v) {
  Tensor t = zeros(std::move(shape));
  std::fill(t.value().begin(), t.value().end(), v);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<real> values, bool requires_grad) {
  if (shape_numel(shape) != values.size())
    throw DimError("tensor init: shape " + shape_str(shape) + " does not match " +
                   std::to_string(values.size()) + " values");
  auto d = std::make_shared<Data>();
  d->shape = std::move(shape);
  d->value = std::move(values);
  d->requires_grad = requires_grad;
  return wrap(std::move(d));
}

Tensor Tensor::scalar(real v) { return from({1}, {v}); }

Tensor Tensor::param(Shape shape, Rng& rng, real lo, real hi) {
  Tensor t = zeros(std::move(shape), true);
  for (real& v : t.value()) v = rng.uniform(lo, hi);
  return t;
}

namespace {
real init_gain() {
  static const real g = [] {
    const char* s = std::getenv("DOCENC_INIT_GAIN");
    return s ? static_cast<real>(std::atof(s)) : real(1);
  }();
  return g;
}
}  // namespace

Tensor Tensor::fan_in_param(Shape shape, Rng& rng) {
  const real bound = init_gain() / std::sqrt(static_cast<real>(shape.back()));
  return param(std::move(shape), rng, -bound, bound);
}

real Tensor::item() const {
  if (numel() != 1) throw DimError("item() on tensor of shape " + shape_str(shape()));
  return d_->value[0];
}

std::vector<real>& Tensor::grad() {
  if (d_->grad.empty()) d_->grad.assign(d_->value.size(), 0);
  return d_->grad;
}

const std::vector<real>& Tensor::grad() const { return d_->grad; }

void Tensor::zero_grad() {
  if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0);
}

// ---------------------------------------------------------------------------
// Graph

Tensor Graph::emit(const char* kind, std::vector<Tensor> ins, Shape out_shape,
                   std::function<void(Node&)> back) {
  Tensor out = Tensor::zeros(std::move(out_shape));
  out.d_->is_node = true;
  nodes_.push_back(Node{kind, std::move(ins), out, std::move(back)});
  return out;
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
  const size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = emit("matmul", {a, b}, {m, n}, [m, k, n](Node& nd) {
    const Tensor &a = nd.ins[0], &b = nd.ins[1];
    const auto& dc = nd.out.grad();
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < n; ++j) {
        const real g = dc[i * n + j];
        if (g == 0) continue;
        for (size_t p = 0; p < k; ++p) {
          accum(a, i * k + p, g * b.value()[p * n + j]);
          accum(b, p * n + j, g * a.value()[i * k + p]);
        }
      }
  });
  auto& c = out.value();
  for (size_t i = 0; i < m; ++i)
    for (size_t p = 0; p < k; ++p) {
      const real av = a.value()[i * k + p];
      if (av == 0) continue;
      for (size_t j = 0; j < n; ++j) c[i * n + j] += av * b.value()[p * n + j];
    }
  return out;
}

Tensor Graph::matvec(const Tensor& a, const Tensor& x) {
  if (a.rank() != 2 || x.rank() != 1 || a.dim(1) != x.dim(0))
    throw DimError("matvec: incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(x.shape()));
  const size_t m = a.dim(0), k = a.dim(1);
  Tensor out = emit("matvec", {a, x}, {m}, [m, k](Node& nd) {
    const Tensor &a = nd.ins[0], &x = nd.ins[1];
    const auto& dy = nd.out.grad();
    for (size_t i = 0; i < m; ++i) {
      const real g = dy[i];
      if (g == 0) continue;
      for (size_t p = 0; p < k; ++p) {
        accum(a, i * k + p, g * x.value()[p]);
        accum(x, p, g * a.value()[i * k + p]);
      }
    }
  });
  auto& y = out.value();
  for (size_t i = 0; i < m; ++i) {
    real s = 0;
    for (size_t p = 0; p < k; ++p) s += a.value()[i * k + p] * x.value()[p];
    y[i] = s;
  }
  return out;
}

Tensor Graph::ewise(EwiseKind kind, const Tensor& a, const Tensor& b) {
  const bool same = a.shape() == b.shape();
  // Row broadcast: a is [m x n], b is [n], applied to every row.
  const bool bcast = !same && a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0);
  if (!same && !bcast)
    throw DimError("ewise: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                   " neither match nor broadcast");
  const size_t n = a.numel();
  const size_t bn = b.numel();
  const char* kname = kind == EwiseKind::add ? "add" : kind == EwiseKind::sub ? "sub" : "mul";
  Tensor out = emit(kname, {a, b}, a.shape(), [kind, n, bn](Node& nd) {
    const Tensor &a = nd.ins[0], &b = nd.ins[1];
    const auto& dc = nd.out.grad();
    for (size_t i = 0; i < n; ++i) {
      const size_t j = i % bn;
      switch (kind) {
        case EwiseKind::add:
          accum(a, i, dc[i]);
          accum(b, j, dc[i]);
          break;
        case EwiseKind::sub:
          accum(a, i, dc[i]);
          accum(b, j, -dc[i]);
          break;
        case EwiseKind::mul:
          accum(a, i, dc[i] * b.value()[j]);
          accum(b, j, dc[i] * a.value()[i]);
          break;
      }
    }
  });
  auto& c = out.value();
  for (size_t i = 0; i < n; ++i) {
    const real bv = b.value()[i % bn];
    switch (kind) {
      case EwiseKind::add: c[i] = a.value()[i] + bv; break;
      case EwiseKind::sub: c[i] = a.value()[i] - bv; break;
      case EwiseKind::mul: c[i] = a.value()[i] * bv; break;
    }
  }
  return out;
}

Tensor Graph::activation(ActKind kind, const Tensor& a) {
  const size_t n = a.numel();
  const char* kname =
      kind == ActKind::sigmoid ? "sigmoid" : kind == ActKind::tanh ? "tanh" : "relu";
  Tensor out = emit(kname, {a}, a.shape(), [kind, n](Node& nd) {
    const Tensor& a = nd.ins[0];
    const auto& dy = nd.out.grad();
    const auto& y = nd.out.value();
    for (size_t i = 0; i < n; ++i) {
      real d = 0;
      switch (kind) {
        case ActKind::sigmoid: d = y[i] * (1 - y[i]); break;
        case ActKind::tanh: d = 1 - y[i] * y[i]; break;
        case ActKind::relu: d = a.value()[i] > 0 ? real(1) : real(0); break;
      }
      accum(a, i, dy[i] * d);
    }
  });
  auto& y = out.value();
  for (size_t i = 0; i < n; ++i) {
    const real x = a.value()[i];
    switch (kind) {
      case ActKind::sigmoid: y[i] = 1 / (1 + std::exp(-x)); break;
      case ActKind::tanh: y[i] = std::tanh(x); break;
      case ActKind::relu: y[i] = x > 0 ? x : 0; break;
    }
  }
  return out;
}

Tensor Graph::concat(std::initializer_list<Tensor> ts, size_t axis) {
  std::vector<Tensor> v(ts);
  return concat(std::span<const Tensor>(v), axis);
}

Tensor Graph::concat(std::span<const Tensor> ts, size_t axis) {
  if (ts.empty()) throw DimError("concat: no inputs");
  const size_t rank = ts[0].rank();
  if (axis >= rank) throw DimError("concat: axis out of range");
  Shape out_shape = ts[0].shape();
  for (size_t t = 1; t < ts.size(); ++t) {
    if (ts[t].rank() != rank) throw DimError("concat: mixed ranks");
    for (size_t d = 0; d < rank; ++d) {
      if (d == axis) continue;
      if (ts[t].dim(d) != out_shape[d])
        throw DimError("concat: extent mismatch off axis, " + shape_str(ts[t].shape()) +
                       " vs " + shape_str(ts[0].shape()));
    }
    out_shape[axis] += ts[t].dim(axis);
  }
  // Treat each tensor as [outer x inner] blocks around the axis.
  size_t outer = 1, inner = 1;
  for (size_t d = 0; d < axis; ++d) outer *= out_shape[d];
  for (size_t d = axis + 1; d < rank; ++d) inner *= out_shape[d];
  const size_t out_axis = out_shape[axis];
  std::vector<Tensor> ins(ts.begin(), ts.end());
  Tensor out = emit("concat", std::move(ins), out_shape,
                    [outer, inner, out_axis, axis](Node& nd) {
                      const auto& dy = nd.out.grad();
                      size_t off = 0;
                      for (const Tensor& t : nd.ins) {
                        const size_t ax = t.dim(axis);
                        for (size_t o = 0; o < outer; ++o)
                          for (size_t a = 0; a < ax; ++a)
                            for (size_t i = 0; i < inner; ++i)
                              accum(t, (o * ax + a) * inner + i,
                                    dy[(o * out_axis + off + a) * inner + i]);
                        off += ax;
                      }
                    });
  auto& y = out.value();
  size_t off = 0;
  for (const Tensor& t : ts) {
    const size_t ax = t.dim(axis);
    for (size_t o = 0; o < outer; ++o)
      for (size_t a = 0; a < ax; ++a)
        for (size_t i = 0; i < inner; ++i)
          y[(o * out_axis + off + a) * inner + i] = t.value()[(o * ax + a) * inner + i];
    off += ax;
  }
  return out;
}

Tensor Graph::stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw DimError("stack_rows: no inputs");
  const size_t d = rows[0].numel();
  for (const Tensor& r : rows)
    if (r.rank() != 1 || r.numel() != d) throw DimError("stack_rows: rows must be equal 1-D");
  const size_t t_count = rows.size();
  std::vector<Tensor> ins(rows.begin(), rows.end());
  Tensor out = emit("stack_rows", std::move(ins), {t_count, d}, [d](Node& nd) {
    const auto& dy = nd.out.grad();
    for (size_t t = 0; t < nd.ins.size(); ++t)
      for (size_t i = 0; i < d; ++i) accum(nd.ins[t], i, dy[t * d + i]);
  });
  auto& y = out.value();
  for (size_t t = 0; t < t_count; ++t)
    for (size_t i = 0; i < d; ++i) y[t * d + i] = rows[t].value()[i];
  return out;
}

Tensor Graph::row(const Tensor& m, size_t i) {
  if (m.rank() != 2) throw DimError("row: want 2-D, got " + shape_str(m.shape()));
  if (i >= m.dim(0)) throw DimError("row: index out of range");
  const size_t d = m.dim(1);
  Tensor out = emit("row", {m}, {d}, [i, d](Node& nd) {
    const auto& dy = nd.out.grad();
    for (size_t j = 0; j < d; ++j) accum(nd.ins[0], i * d + j, dy[j]);
  });
  std::copy_n(m.value().begin() + static_cast<ptrdiff_t>(i * d), d, out.value().begin());
  return out;
}

Tensor Graph::slice(const Tensor& v, size_t begin, size_t len) {
  if (v.rank() != 1 || begin + len > v.numel())
    throw DimError("slice: [" + std::to_string(begin) + ", +" + std::to_string(len) +
                   ") out of " + shape_str(v.shape()));
  Tensor out = emit("slice", {v}, {len}, [begin, len](Node& nd) {
    const auto& dy = nd.out.grad();
    for (size_t j = 0; j < len; ++j) accum(nd.ins[0], begin + j, dy[j]);
  });
  std::copy_n(v.value().begin() + static_cast<ptrdiff_t>(begin), len, out.value().begin());
  return out;
}

Tensor Graph::pool(PoolKind kind, const Tensor& seq) {
  if (seq.rank() != 2) throw DimError("pool: want 2-D, got " + shape_str(seq.shape()));
  const size_t t_len = seq.dim(0), d = seq.dim(1);
  if (t_len == 0) throw DimError("pool: empty sequence");
  if (kind == PoolKind::max) {
    // Ties broken by first index so gradients are deterministic.
    auto arg = std::make_shared<std::vector<size_t>>(d, 0);
    Tensor out = emit("pool_max", {seq}, {d}, [arg, d](Node& nd) {
      const auto& dy = nd.out.grad();
      for (size_t j = 0; j < d; ++j) accum(nd.ins[0], (*arg)[j] * d + j, dy[j]);
    });
    auto& y = out.value();
    for (size_t j = 0; j < d; ++j) {
      size_t best = 0;
      real bv = seq.value()[j];
      for (size_t t = 1; t < t_len; ++t) {
        const real v = seq.value()[t * d + j];
        if (v > bv) {
          bv = v;
          best = t;
        }
      }
      y[j] = bv;
      (*arg)[j] = best;
    }
    return out;
  }
  Tensor out = emit("pool_avg", {seq}, {d}, [t_len, d](Node& nd) {
    const auto& dy = nd.out.grad();
    const real inv = real(1) / static_cast<real>(t_len);
    for (size_t t = 0; t < t_len; ++t)
      for (size_t j = 0; j < d; ++j) accum(nd.ins[0], t * d + j, dy[j] * inv);
  });
  auto& y = out.value();
  for (size_t j = 0; j < d; ++j) {
    real s = 0;
    for (size_t t = 0; t < t_len; ++t) s += seq.value()[t * d + j];
    y[j] = s / static_cast<real>(t_len);
  }
  return out;
}

Tensor Graph::reduce_sum(const Tensor& a) {
  const size_t n = a.numel();
  Tensor out = emit("reduce_sum", {a}, {1}, [n](Node& nd) {
    const real g = nd.out.grad()[0];
    for (size_t i = 0; i < n; ++i) accum(nd.ins[0], i, g);
  });
  real s = 0;
  for (real v : a.value()) s += v;
  out.value()[0] = s;
  return out;
}

Tensor Graph::softmax(const Tensor& v) {
  if (v.rank() != 1) throw DimError("softmax: want 1-D, got " + shape_str(v.shape()));
  const size_t n = v.numel();
  Tensor out = emit("softmax", {v}, {n}, [n](Node& nd) {
    const auto& dy = nd.out.grad();
    const auto& s = nd.out.value();
    real dot = 0;
    for (size_t i = 0; i < n; ++i) dot += dy[i] * s[i];
    for (size_t i = 0; i < n; ++i) accum(nd.ins[0], i, s[i] * (dy[i] - dot));
  });
  auto& y = out.value();
  real mx = v.value()[0];
  for (real x : v.value()) mx = std::max(mx, x);
  real z = 0;
  for (size_t i = 0; i < n; ++i) z += (y[i] = std::exp(v.value()[i] - mx));
  for (size_t i = 0; i < n; ++i) y[i] /= z;
  return out;
}

Tensor Graph::softmax_xent(const Tensor& logits, size_t target) {
  if (logits.rank() != 1) throw DimError("softmax_xent: want 1-D logits");
  const size_t n = logits.numel();
  if (target >= n)
    throw DimError("softmax_xent: target " + std::to_string(target) + " out of range " +
                   std::to_string(n));
  auto probs = std::make_shared<std::vector<real>>(n);
  Tensor out = emit("softmax_xent", {logits}, {1}, [probs, target, n](Node& nd) {
    const real g = nd.out.grad()[0];
    for (size_t i = 0; i < n; ++i)
      accum(nd.ins[0], i, g * ((*probs)[i] - (i == target ? real(1) : real(0))));
  });
  real mx = logits.value()[0];
  for (real x : logits.value()) mx = std::max(mx, x);
  real z = 0;
  for (size_t i = 0; i < n; ++i) z += ((*probs)[i] = std::exp(logits.value()[i] - mx));
  real log_z = std::log(z);
  for (size_t i = 0; i < n; ++i) (*probs)[i] /= z;
  out.value()[0] = log_z - (logits.value()[target] - mx);
  return out;
}

Tensor Graph::scale(const Tensor& a, real c) {
  const size_t n = a.numel();
  Tensor out = emit("scale", {a}, a.shape(), [c, n](Node& nd) {
    const auto& dy = nd.out.grad();
    for (size_t i = 0; i < n; ++i) accum(nd.ins[0], i, c * dy[i]);
  });
  for (size_t i = 0; i < n; ++i) out.value()[i] = c * a.value()[i];
  return out;
}

Tensor Graph::smul(const Tensor& v, const Tensor& s) {
  if (s.numel() != 1) throw DimError("smul: scalar operand must have 1 element");
  const size_t n = v.numel();
  Tensor out = emit("smul", {v, s}, v.shape(), [n](Node& nd) {
    const Tensor &v = nd.ins[0], &s = nd.ins[1];
    const auto& dy = nd.out.grad();
    const real sv = s.value()[0];
    for (size_t i = 0; i < n; ++i) {
      accum(v, i, dy[i] * sv);
      accum(s, 0, dy[i] * v.value()[i]);
    }
  });
  const real sv = s.value()[0];
  for (size_t i = 0; i < n; ++i) out.value()[i] = sv * v.value()[i];
  return out;
}

Tensor Graph::gather_rows(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) throw DimError("gather_rows: want 2-D table");
  const size_t rows = table.dim(0), e = table.dim(1);
  for (int id : ids)
    if (id < 0 || static_cast<size_t>(id) >= rows)
      throw DimError("gather_rows: id " + std::to_string(id) + " out of " +
                     std::to_string(rows));
  auto idx = std::make_shared<std::vector<int>>(ids.begin(), ids.end());
  const size_t l = ids.size();
  Tensor out = emit("gather_rows", {table}, {l, e}, [idx, e](Node& nd) {
    const auto& dy = nd.out.grad();
    for (size_t t = 0; t < idx->size(); ++t) {
      const size_t r = static_cast<size_t>((*idx)[t]);
      for (size_t j = 0; j < e; ++j) accum(nd.ins[0], r * e + j, dy[t * e + j]);
    }
  });
  auto& y = out.value();
  for (size_t t = 0; t < l; ++t) {
    const size_t r = static_cast<size_t>(ids[t]);
    std::copy_n(table.value().begin() + static_cast<ptrdiff_t>(r * e), e,
                y.begin() + static_cast<ptrdiff_t>(t * e));
  }
  return out;
}

Tensor Graph::conv1d(const Tensor& in, const Tensor& kernel, const Tensor& bias, size_t width) {
  if (in.rank() != 2 || kernel.rank() != 2) throw DimError("conv1d: want 2-D input and kernel");
  const size_t l = in.dim(0), e = in.dim(1), f = kernel.dim(0);
  if (kernel.dim(1) != width * e)
    throw DimError("conv1d: kernel " + shape_str(kernel.shape()) + " does not match width " +
                   std::to_string(width) + " x embed " + std::to_string(e));
  if (bias.numel() != f) throw DimError("conv1d: bias size mismatch");
  if (l < width) throw DimError("conv1d: input shorter than filter width");
  const size_t out_l = l - width + 1;
  Tensor out = emit("conv1d", {in, kernel, bias}, {out_l, f}, [out_l, f, width, e](Node& nd) {
    const Tensor &in = nd.ins[0], &kernel = nd.ins[1], &bias = nd.ins[2];
    const auto& dy = nd.out.grad();
    for (size_t p = 0; p < out_l; ++p)
      for (size_t q = 0; q < f; ++q) {
        const real g = dy[p * f + q];
        if (g == 0) continue;
        accum(bias, q, g);
        for (size_t j = 0; j < width; ++j)
          for (size_t c = 0; c < e; ++c) {
            accum(kernel, q * (width * e) + j * e + c, g * in.value()[(p + j) * e + c]);
            accum(in, (p + j) * e + c, g * kernel.value()[q * (width * e) + j * e + c]);
          }
      }
  });
  auto& y = out.value();
  for (size_t p = 0; p < out_l; ++p)
    for (size_t q = 0; q < f; ++q) {
      real s = bias.value()[q];
      for (size_t j = 0; j < width; ++j)
        for (size_t c = 0; c < e; ++c)
          s += kernel.value()[q * (width * e) + j * e + c] * in.value()[(p + j) * e + c];
      y[p * f + q] = s;
    }
  return out;
}

Tensor Graph::vsum(std::span<const Tensor> scalars) {
  if (scalars.empty()) throw DimError("vsum: no inputs");
  for (const Tensor& t : scalars)
    if (t.numel() != 1) throw DimError("vsum: all inputs must be scalars");
  std::vector<Tensor> ins(scalars.begin(), scalars.end());
  Tensor out = emit("vsum", std::move(ins), {1}, [](Node& nd) {
    const real g = nd.out.grad()[0];
    for (const Tensor& t : nd.ins) accum(t, 0, g);
  });
  real s = 0;
  for (const Tensor& t : scalars) s += t.value()[0];
  out.value()[0] = s;
  return out;
}

void Graph::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw DimError("backward: loss must be a scalar tensor");
  if (!loss.d_->is_node) throw DimError("backward: loss was not produced by this graph");
  loss.d_->grad.assign(1, 1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->out.d_->grad.empty()) continue;  // no gradient flowed here
    it->back(*it);
  }
}

// ---------------------------------------------------------------------------
// ParamStore / Adam

Tensor ParamStore::add(const std::string& name, Tensor t) {
  if (has(name)) throw Error("duplicate parameter name: " + name);
  items_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return t;
  throw Error("unknown parameter: " + name);
}

bool ParamStore::has(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return true;
  return false;
}

void ParamStore::zero_grad() {
  for (auto& [n, t] : items_) t.zero_grad();
}

std::vector<std::string> ParamStore::names_with_prefix(
    std::span<const std::string> prefixes) const {
  std::vector<std::string> out;
  for (const auto& [n, t] : items_)
    for (const auto& p : prefixes)
      if (n.rfind(p, 0) == 0) {
        out.push_back(n);
        break;
      }
  return out;
}

Adam::Adam(const ParamStore& params, AdamConfig cfg) : params_(params.items()), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (auto& [n, t] : params_) {
    m_.emplace_back(t.numel(), 0);
    v_.emplace_back(t.numel(), 0);
  }
}

void Adam::step() {
  ++t_;
  const real b1t = std::pow(cfg_.beta1, static_cast<real>(t_));
  const real b2t = std::pow(cfg_.beta2, static_cast<real>(t_));
  for (size_t p = 0; p < params_.size(); ++p) {
    Tensor& t = params_[p].second;
    if (!t.has_grad()) continue;
    auto& val = t.value();
    const auto& g = t.grad();
    auto& m = m_[p];
    auto& v = v_[p];
    for (size_t i = 0; i < val.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * g[i] * g[i];
      const real mhat = m[i] / (1 - b1t);
      const real vhat = v[i] / (1 - b2t);
      val[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

real clip_grad_norm(const ParamStore& params, real max_norm) {
  real sq = 0;
  for (const auto& [n, t] : params.items()) {
    if (!t.has_grad()) continue;
    for (real g : t.grad()) sq += g * g;
  }
  const real norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const real s = max_norm / norm;
    for (const auto& [n, t] : params.items()) {
      Tensor h = t;  // shared handle
      if (!h.has_grad()) continue;
      for (real& g : h.grad()) g *= s;
    }
  }
  return norm;
}

}  // namespace docenc
