#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
// Values and gradients live on a shared node; ops build a DAG of nodes and
// backward() walks it in reverse topological order. Gradient accumulation is
// additive across fan-out; gradients are cleared only by the optimizer step
// or an explicit zero_grad().

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace attswin {

using Shape = std::vector<int>;
using IndexVec = std::vector<std::uint32_t>;
using IndexVecPtr = std::shared_ptr<const IndexVec>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ")";
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(s));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

namespace detail {

inline thread_local bool grad_mode = true;

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first written
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
  Node& parent(std::size_t i) { return *parents[i]; }
};

}  // namespace detail

// RAII guard disabling tape construction (evaluation, data generation).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::grad_mode) { detail::grad_mode = false; }
  ~NoGradGuard() { detail::grad_mode = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_mode_enabled() { return detail::grad_mode; }

template <typename T>
class Tensor {
 public:
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<detail::Node<T>>();
    n->value.assign(shape_numel(shape), T(0));
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from_values(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (shape_numel(shape) != values.size())
      throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                  " does not match shape " + shape_str(shape));
    auto n = std::make_shared<detail::Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(T v) { return from_values({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  int rank() const { return static_cast<int>(node_->shape.size()); }

  std::vector<T>& values() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }
  T item() const {
    if (numel() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<T>& grad() const { return node_->grad; }
  std::vector<T>& mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  // Reverse-mode sweep from a scalar loss. Every requires_grad tensor on the
  // path accumulates d(loss)/d(tensor); unreachable tensors are untouched.
  void backward() const {
    if (numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(shape()));
    if (!node_->requires_grad) return;
    using NodeT = detail::Node<T>;
    std::vector<NodeT*> order;
    std::unordered_set<NodeT*> visited;
    std::vector<std::pair<NodeT*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& top = stack.back();
      NodeT* n = top.first;
      if (top.second < n->parents.size()) {
        NodeT* p = n->parents[top.second++].get();
        if (p->requires_grad && !visited.count(p)) {
          visited.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->ensure_grad();
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      NodeT* n = *it;
      if (n->backward) {
        n->ensure_grad();
        n->backward(*n);
      }
    }
  }

  NodePtr node() const { return node_; }
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

 private:
  NodePtr node_;
};

namespace detail {

template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> value, std::vector<Tensor<T>> parents,
                  std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool rg = false;
  if (grad_mode) {
    for (const auto& p : parents) rg = rg || p.requires_grad();
  }
  n->requires_grad = rg;
  if (rg) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(backward);
  }
  return Tensor<T>(std::move(n));
}

inline void check_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b)
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "add");
  std::vector<T> out(a.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return detail::make_op<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& n) {
    for (int k = 0; k < 2; ++k) {
      auto& p = n.parent(k);
      if (!p.requires_grad) continue;
      p.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "sub");
  std::vector<T> out(a.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return detail::make_op<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& n) {
    auto& pa = n.parent(0);
    auto& pb = n.parent(1);
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] -= n.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return detail::make_op<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& n) {
    auto& pa = n.parent(0);
    auto& pb = n.parent(1);
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.value[i];
    }
  });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "div");
  std::vector<T> out(a.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
  return detail::make_op<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& n) {
    auto& pa = n.parent(0);
    auto& pb = n.parent(1);
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] / pb.value[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        pb.grad[i] -= n.grad[i] * pa.value[i] / (pb.value[i] * pb.value[i]);
    }
  });
}

// out = a*x + b, elementwise with scalar coefficients.
template <typename T>
Tensor<T> affine(const Tensor<T>& x, T a, T b) {
  std::vector<T> out(x.numel());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * xv[i] + b;
  return detail::make_op<T>(x.shape(), std::move(out), {x}, [a](detail::Node<T>& n) {
    auto& p = n.parent(0);
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += a * n.grad[i];
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T a) {
  return affine(x, a, T(0));
}

// Broadcast add: b's shape must be a suffix of a's shape; b repeats over the
// leading extents. Covers linear bias, position bias and residual tokens.
template <typename T>
Tensor<T> add_broadcast(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (bs.size() > as.size() ||
      !std::equal(bs.begin(), bs.end(), as.end() - static_cast<long>(bs.size())))
    throw std::invalid_argument("add_broadcast: " + shape_str(bs) + " is not a suffix of " + shape_str(as));
  const std::size_t inner = b.numel();
  const std::size_t reps = a.numel() / inner;
  std::vector<T> out(a.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t r = 0; r < reps; ++r) {
    const std::size_t base = r * inner;
    for (std::size_t i = 0; i < inner; ++i) out[base + i] = av[base + i] + bv[i];
  }
  return detail::make_op<T>(a.shape(), std::move(out), {a, b}, [inner, reps](detail::Node<T>& n) {
    auto& pa = n.parent(0);
    auto& pb = n.parent(1);
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t r = 0; r < reps; ++r) {
        const std::size_t base = r * inner;
        for (std::size_t i = 0; i < inner; ++i) pb.grad[i] += n.grad[base + i];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Structural ops

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  return detail::make_op<T>(std::move(shape), x.values(), {x}, [](detail::Node<T>& n) {
    auto& p = n.parent(0);
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
  });
}

// out[k] = x[index[k]] over flattened positions. Repeated indices are legal
// (gather); backward scatter-adds, so a bijective index is an exact permutation.
template <typename T>
Tensor<T> gather(const Tensor<T>& x, Shape out_shape, IndexVecPtr index) {
  const std::size_t n_out = shape_numel(out_shape);
  if (index->size() != n_out)
    throw std::invalid_argument("gather: index length " + std::to_string(index->size()) +
                                " does not match output shape " + shape_str(out_shape));
  const std::size_t n_in = x.numel();
  std::vector<T> out(n_out);
  const auto& xv = x.values();
  const auto& idx = *index;
  for (std::size_t k = 0; k < n_out; ++k) {
    if (idx[k] >= n_in) throw std::out_of_range("gather: index out of range");
    out[k] = xv[idx[k]];
  }
  return detail::make_op<T>(std::move(out_shape), std::move(out), {x},
                            [index](detail::Node<T>& n) {
                              auto& p = n.parent(0);
                              if (!p.requires_grad) return;
                              p.ensure_grad();
                              const auto& idx = *index;
                              for (std::size_t k = 0; k < n.grad.size(); ++k) p.grad[idx[k]] += n.grad[k];
                            });
}

// Concatenate along an axis; all other extents must agree.
template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, int axis) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != bs.size())
    throw std::invalid_argument("concat: rank mismatch " + shape_str(as) + " vs " + shape_str(bs));
  if (axis < 0) axis += static_cast<int>(as.size());
  if (axis < 0 || axis >= static_cast<int>(as.size())) throw std::invalid_argument("concat: bad axis");
  for (std::size_t i = 0; i < as.size(); ++i)
    if (static_cast<int>(i) != axis && as[i] != bs[i])
      throw std::invalid_argument("concat: shape mismatch " + shape_str(as) + " vs " + shape_str(bs) +
                                  " on axis " + std::to_string(axis));
  Shape os = as;
  os[axis] += bs[axis];
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(as[i]);
  for (std::size_t i = axis + 1; i < as.size(); ++i) inner *= static_cast<std::size_t>(as[i]);
  const std::size_t a_blk = static_cast<std::size_t>(as[axis]) * inner;
  const std::size_t b_blk = static_cast<std::size_t>(bs[axis]) * inner;
  std::vector<T> out(shape_numel(os));
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(av.begin() + o * a_blk, a_blk, out.begin() + o * (a_blk + b_blk));
    std::copy_n(bv.begin() + o * b_blk, b_blk, out.begin() + o * (a_blk + b_blk) + a_blk);
  }
  return detail::make_op<T>(std::move(os), std::move(out), {a, b},
                            [outer, a_blk, b_blk](detail::Node<T>& n) {
                              auto& pa = n.parent(0);
                              auto& pb = n.parent(1);
                              const std::size_t blk = a_blk + b_blk;
                              if (pa.requires_grad) {
                                pa.ensure_grad();
                                for (std::size_t o = 0; o < outer; ++o)
                                  for (std::size_t i = 0; i < a_blk; ++i) pa.grad[o * a_blk + i] += n.grad[o * blk + i];
                              }
                              if (pb.requires_grad) {
                                pb.ensure_grad();
                                for (std::size_t o = 0; o < outer; ++o)
                                  for (std::size_t i = 0; i < b_blk; ++i)
                                    pb.grad[o * b_blk + i] += n.grad[o * blk + a_blk + i];
                              }
                            });
}

template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw std::invalid_argument("transpose_last2: rank < 2, shape " + shape_str(s));
  const std::size_t r = static_cast<std::size_t>(s[s.size() - 2]);
  const std::size_t c = static_cast<std::size_t>(s[s.size() - 1]);
  const std::size_t batch = x.numel() / (r * c);
  Shape os = s;
  std::swap(os[os.size() - 2], os[os.size() - 1]);
  std::vector<T> out(x.numel());
  const auto& xv = x.values();
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t base = b * r * c;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[base + j * r + i] = xv[base + i * c + j];
  }
  return detail::make_op<T>(std::move(os), std::move(out), {x}, [r, c, batch](detail::Node<T>& n) {
    auto& p = n.parent(0);
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = b * r * c;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) p.grad[base + i * c + j] += n.grad[base + j * r + i];
    }
  });
}

// ---------------------------------------------------------------------------
// Matrix product

// a: [.., n, k], b: [.., k, m] with identical leading batch extents.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() != as.size())
    throw std::invalid_argument("matmul: rank mismatch " + shape_str(as) + " vs " + shape_str(bs));
  for (std::size_t i = 0; i + 2 < as.size(); ++i)
    if (as[i] != bs[i])
      throw std::invalid_argument("matmul: batch mismatch " + shape_str(as) + " vs " + shape_str(bs));
  const std::size_t n = static_cast<std::size_t>(as[as.size() - 2]);
  const std::size_t k = static_cast<std::size_t>(as[as.size() - 1]);
  const std::size_t k2 = static_cast<std::size_t>(bs[bs.size() - 2]);
  const std::size_t m = static_cast<std::size_t>(bs[bs.size() - 1]);
  if (k != k2)
    throw std::invalid_argument("matmul: inner extent mismatch " + shape_str(as) + " vs " + shape_str(bs));
  const std::size_t batch = a.numel() / (n * k);
  Shape os(as.begin(), as.end() - 2);
  os.push_back(static_cast<int>(n));
  os.push_back(static_cast<int>(m));
  std::vector<T> out(batch * n * m, T(0));
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const T* A = av.data() + bi * n * k;
    const T* B = bv.data() + bi * k * m;
    T* C = out.data() + bi * n * m;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t l = 0; l < k; ++l) {
        const T aa = A[i * k + l];
        const T* Br = B + l * m;
        T* Cr = C + i * m;
        for (std::size_t j = 0; j < m; ++j) Cr[j] += aa * Br[j];
      }
    }
  }
  return detail::make_op<T>(std::move(os), std::move(out), {a, b},
                            [batch, n, k, m](detail::Node<T>& n_) {
                              auto& pa = n_.parent(0);
                              auto& pb = n_.parent(1);
                              for (std::size_t bi = 0; bi < batch; ++bi) {
                                const T* G = n_.grad.data() + bi * n * m;
                                if (pa.requires_grad) {
                                  pa.ensure_grad();
                                  const T* B = pb.value.data() + bi * k * m;
                                  T* dA = pa.grad.data() + bi * n * k;
                                  // dA[i,l] += sum_j G[i,j] * B[l,j]
                                  for (std::size_t i = 0; i < n; ++i)
                                    for (std::size_t l = 0; l < k; ++l) {
                                      T acc = 0;
                                      const T* Gr = G + i * m;
                                      const T* Br = B + l * m;
                                      for (std::size_t j = 0; j < m; ++j) acc += Gr[j] * Br[j];
                                      dA[i * k + l] += acc;
                                    }
                                }
                                if (pb.requires_grad) {
                                  pb.ensure_grad();
                                  const T* A = pa.value.data() + bi * n * k;
                                  T* dB = pb.grad.data() + bi * k * m;
                                  // dB[l,j] += sum_i A[i,l] * G[i,j]
                                  for (std::size_t i = 0; i < n; ++i)
                                    for (std::size_t l = 0; l < k; ++l) {
                                      const T aa = A[i * k + l];
                                      const T* Gr = G + i * m;
                                      T* dBr = dB + l * m;
                                      for (std::size_t j = 0; j < m; ++j) dBr[j] += aa * Gr[j];
                                    }
                                }
                              }
                            });
}

// ---------------------------------------------------------------------------
// Nonlinearities and normalization

template <typename T>
Tensor<T> softmax_last(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.empty()) throw std::invalid_argument("softmax_last: rank 0");
  const std::size_t c = static_cast<std::size_t>(s.back());
  const std::size_t rows = x.numel() / c;
  std::vector<T> out(x.numel());
  const auto& xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * c;
    T* yr = out.data() + r * c;
    T mx = xr[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
    double sum = 0;
    for (std::size_t j = 0; j < c; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += static_cast<double>(yr[j]);
    }
    const T inv = static_cast<T>(1.0 / sum);
    for (std::size_t j = 0; j < c; ++j) yr[j] *= inv;
  }
  return detail::make_op<T>(x.shape(), std::move(out), {x}, [c, rows](detail::Node<T>& n) {
    auto& p = n.parent(0);
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = n.value.data() + r * c;
      const T* g = n.grad.data() + r * c;
      T* dx = p.grad.data() + r * c;
      double dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += static_cast<double>(g[j]) * y[j];
      for (std::size_t j = 0; j < c; ++j) dx[j] += y[j] * (g[j] - static_cast<T>(dot));
    }
  });
}

template <typename T>
Tensor<T> log_softmax_last(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.empty()) throw std::invalid_argument("log_softmax_last: rank 0");
  const std::size_t c = static_cast<std::size_t>(s.back());
  const std::size_t rows = x.numel() / c;
  std::vector<T> out(x.numel());
  const auto& xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * c;
    T* yr = out.data() + r * c;
    T mx = xr[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
    double sum = 0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(static_cast<double>(xr[j] - mx));
    const T lse = mx + static_cast<T>(std::log(sum));
    for (std::size_t j = 0; j < c; ++j) yr[j] = xr[j] - lse;
  }
  return detail::make_op<T>(x.shape(), std::move(out), {x}, [c, rows](detail::Node<T>& n) {
    auto& p = n.parent(0);
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = n.value.data() + r * c;
      const T* g = n.grad.data() + r * c;
      T* dx = p.grad.data() + r * c;
      double gsum = 0;
      for (std::size_t j = 0; j < c; ++j) gsum += static_cast<double>(g[j]);
      for (std::size_t j = 0; j < c; ++j) dx[j] += g[j] - static_cast<T>(std::exp(static_cast<double>(y[j])) * gsum);
    }
  });
}

// Per-row normalization over the last axis, eps inside the square root.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
  const Shape& s = x.shape();
  if (s.empty()) throw std::invalid_argument("layer_norm: rank 0");
  const std::size_t c = static_cast<std::size_t>(s.back());
  if (gamma.shape() != Shape{static_cast<int>(c)} || beta.shape() != Shape{static_cast<int>(c)})
    throw std::invalid_argument("layer_norm: gamma/beta must have shape (" + std::to_string(c) + "), got " +
                                shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
  const std::size_t rows = x.numel() / c;
  std::vector<T> out(x.numel());
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto inv_sigma = std::make_shared<std::vector<T>>(rows);
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * c;
    double mean = 0;
    for (std::size_t j = 0; j < c; ++j) mean += static_cast<double>(xr[j]);
    mean /= static_cast<double>(c);
    double var = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = static_cast<double>(xr[j]) - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    (*inv_sigma)[r] = inv;
    T* h = xhat->data() + r * c;
    T* yr = out.data() + r * c;
    for (std::size_t j = 0; j < c; ++j) {
      h[j] = (xr[j] - static_cast<T>(mean)) * inv;
      yr[j] = gv[j] * h[j] + bv[j];
    }
  }
  return detail::make_op<T>(x.shape(), std::move(out), {x, gamma, beta},
                            [c, rows, xhat, inv_sigma](detail::Node<T>& n) {
                              auto& px = n.parent(0);
                              auto& pg = n.parent(1);
                              auto& pb = n.parent(2);
                              if (pg.requires_grad) pg.ensure_grad();
                              if (pb.requires_grad) pb.ensure_grad();
                              if (px.requires_grad) px.ensure_grad();
                              for (std::size_t r = 0; r < rows; ++r) {
                                const T* g = n.grad.data() + r * c;
                                const T* h = xhat->data() + r * c;
                                if (pg.requires_grad)
                                  for (std::size_t j = 0; j < c; ++j) pg.grad[j] += g[j] * h[j];
                                if (pb.requires_grad)
                                  for (std::size_t j = 0; j < c; ++j) pb.grad[j] += g[j];
                                if (px.requires_grad) {
                                  double m1 = 0, m2 = 0;
                                  for (std::size_t j = 0; j < c; ++j) {
                                    const double hg = static_cast<double>(pg.value[j]) * g[j];
                                    m1 += hg;
                                    m2 += hg * h[j];
                                  }
                                  m1 /= static_cast<double>(c);
                                  m2 /= static_cast<double>(c);
                                  T* dx = px.grad.data() + r * c;
                                  const T inv = (*inv_sigma)[r];
                                  for (std::size_t j = 0; j < c; ++j)
                                    dx[j] += inv * (pg.value[j] * g[j] - static_cast<T>(m1) -
                                                    h[j] * static_cast<T>(m2));
                                }
                              }
                            });
}

// Exact error-function GELU: x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = static_cast<double>(xv[i]);
    out[i] = static_cast<T>(v * 0.5 * (1.0 + std::erf(v * M_SQRT1_2)));
  }
  return detail::make_op<T>(x.shape(), std::move(out), {x}, [](detail::Node<T>& n) {
    auto& p = n.parent(0);
    if (!p.requires_grad) return;
    p.ensure_grad();
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double v = static_cast<double>(p.value[i]);
      const double phi = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      p.grad[i] += n.grad[i] * static_cast<T>(phi + v * pdf);
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  double s = 0;
  for (const T v : x.values()) s += static_cast<double>(v);
  return detail::make_op<T>({1}, {static_cast<T>(s)}, {x}, [](detail::Node<T>& n) {
    auto& p = n.parent(0);
    if (!p.requires_grad) return;
    p.ensure_grad();
    const T g = n.grad[0];
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  return scale(sum_all(x), static_cast<T>(1.0 / static_cast<double>(x.numel())));
}

// x: [.., in] times W: [in, out], plus optional bias (pass a default-constructed
// tensor for none). Leading extents are preserved.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b = {}) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (ws.size() != 2) throw std::invalid_argument("linear: weight must be rank 2, got " + shape_str(ws));
  if (xs.empty() || xs.back() != ws[0])
    throw std::invalid_argument("linear: input " + shape_str(xs) + " incompatible with weight " + shape_str(ws));
  const int in = ws[0];
  const int out = ws[1];
  const int rows = static_cast<int>(x.numel()) / in;
  Tensor<T> y = matmul(reshape(x, {rows, in}), w);
  if (b.defined()) {
    if (b.shape() != Shape{out})
      throw std::invalid_argument("linear: bias shape " + shape_str(b.shape()) + " does not match out extent " +
                                  std::to_string(out));
    y = add_broadcast(y, b);
  }
  Shape os = xs;
  os.back() = out;
  return reshape(y, os);
}

// Channel-wise concatenation of token sequences [N, C1] + [N, C2] -> [N, C1+C2].
// An undefined second operand returns the first unchanged.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (!b.defined()) return a;
  return concat(a, b, -1);
}

// Arithmetic mean over the first axis: [N, C] -> [C].
template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 2) throw std::invalid_argument("mean_rows: expected rank-2 tensor, got " + shape_str(s));
  const std::size_t n = static_cast<std::size_t>(s[0]);
  const std::size_t c = static_cast<std::size_t>(s[1]);
  if (n == 0) throw std::invalid_argument("mean_rows: empty sequence");
  std::vector<T> out(c);
  const auto& xv = x.values();
  for (std::size_t j = 0; j < c; ++j) {
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(xv[i * c + j]);
    out[j] = static_cast<T>(acc / static_cast<double>(n));
  }
  return detail::make_op<T>({static_cast<int>(c)}, std::move(out), {x}, [n, c](detail::Node<T>& n_) {
    auto& p = n_.parent(0);
    if (!p.requires_grad) return;
    p.ensure_grad();
    const T inv = static_cast<T>(1.0 / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) p.grad[i * c + j] += n_.grad[j] * inv;
  });
}

// Per-channel mean over the tokens of a sequence [N, C] -> [C].
template <typename T>
Tensor<T> mean_tokens(const Tensor<T>& z) {
  return mean_rows(z);
}

}  // namespace attswin
