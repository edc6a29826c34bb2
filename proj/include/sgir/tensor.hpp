#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sgir/common.hpp"
#include "sgir/rng.hpp"

// Reverse-mode autodiff over dense Eigen matrices.  The op set is small and
// fixed on purpose: every primitive has a hand-written adjoint, and every
// forward result is checked for NaN/Inf so a numeric fault surfaces at the op
// that produced it instead of propagating silently into the optimizer.

namespace sgir {

namespace detail {

// Minimum distance of any relu/abs argument from its kink, recorded while a
// probe is installed.  Gradient-check tests use this to certify that an
// evaluation point is far enough from non-smooth corners for central
// differences to be trustworthy.
inline thread_local double* kink_probe = nullptr;

inline void probe_kink(double gap) {
  if (kink_probe && gap < *kink_probe) *kink_probe = gap;
}

// While false, new ops record no adjoints (inference mode).
inline thread_local bool grad_enabled = true;

template <typename S>
struct Node {
  using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  bool grad_ready = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  void ensure_grad() {
    if (!grad_ready) {
      grad = Matrix::Zero(value.rows(), value.cols());
      grad_ready = true;
    }
  }
};

}  // namespace detail

template <typename S>
class Tensor {
 public:
  using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  using Node = detail::Node<S>;
  using NodePtr = std::shared_ptr<Node>;

  Tensor() = default;

  static Tensor parameter(Matrix v) {
    Tensor t(std::make_shared<Node>());
    t.n_->value = std::move(v);
    t.n_->requires_grad = true;
    t.n_->op = "param";
    return t;
  }

  static Tensor constant(Matrix v) {
    Tensor t(std::make_shared<Node>());
    t.n_->value = std::move(v);
    t.n_->op = "const";
    return t;
  }

  static Tensor scalar(S v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  static Tensor wrap(NodePtr n) { return Tensor(std::move(n)); }

  bool defined() const { return static_cast<bool>(n_); }
  Eigen::Index rows() const { return n_->value.rows(); }
  Eigen::Index cols() const { return n_->value.cols(); }
  const Matrix& value() const { return n_->value; }
  Matrix& raw() { return n_->value; }  // parameter updates and fd probes only
  bool requires_grad() const { return n_->requires_grad; }
  const char* op() const { return n_->op; }

  const Matrix& grad() const {
    if (!n_->grad_ready) throw ShapeError("gradient read before backward pass");
    return n_->grad;
  }
  bool has_grad() const { return n_->grad_ready; }

  void zero_grad() {
    n_->grad_ready = false;
    n_->grad.resize(0, 0);
  }

  S item() const {
    if (rows() != 1 || cols() != 1) throw ShapeError("item() on non-scalar tensor");
    return n_->value(0, 0);
  }

  NodePtr node() const { return n_; }

 private:
  explicit Tensor(NodePtr n) : n_(std::move(n)) {}
  NodePtr n_;
};

using TensorD = Tensor<Real>;

namespace detail {

template <typename S>
Tensor<S> make_op(const char* op, typename Node<S>::Matrix value,
                  std::vector<Tensor<S>> parents,
                  std::function<void(Node<S>&)> backprop) {
  if (!value.allFinite())
    throw NumericFault(std::string("non-finite value produced by op '") + op + "'");
  auto node = std::make_shared<Node<S>>();
  node->value = std::move(value);
  node->op = op;
  if (grad_enabled) {
    for (const auto& p : parents) {
      node->parents.push_back(p.node());
      if (p.requires_grad()) node->requires_grad = true;
    }
    if (node->requires_grad) node->backprop = std::move(backprop);
  }
  return Tensor<S>::wrap(std::move(node));
}

template <typename S>
void require_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
}

}  // namespace detail

// ---- primitive ops ---------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + ")");
  auto an = a.node();
  auto bn = b.node();
  return detail::make_op<S>(
      "matmul", a.value() * b.value(), {a, b}, [an, bn](detail::Node<S>& out) {
        if (an->requires_grad) {
          an->ensure_grad();
          an->grad.noalias() += out.grad * bn->value.transpose();
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          bn->grad.noalias() += an->value.transpose() * out.grad;
        }
      });
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape("add", a, b);
  auto an = a.node();
  auto bn = b.node();
  return detail::make_op<S>("add", a.value() + b.value(), {a, b}, [an, bn](detail::Node<S>& out) {
    if (an->requires_grad) {
      an->ensure_grad();
      an->grad += out.grad;
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      bn->grad += out.grad;
    }
  });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape("sub", a, b);
  auto an = a.node();
  auto bn = b.node();
  return detail::make_op<S>("sub", a.value() - b.value(), {a, b}, [an, bn](detail::Node<S>& out) {
    if (an->requires_grad) {
      an->ensure_grad();
      an->grad += out.grad;
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      bn->grad -= out.grad;
    }
  });
}

// Elementwise product.
template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape("mul", a, b);
  auto an = a.node();
  auto bn = b.node();
  return detail::make_op<S>("mul", a.value().cwiseProduct(b.value()), {a, b},
                            [an, bn](detail::Node<S>& out) {
                              if (an->requires_grad) {
                                an->ensure_grad();
                                an->grad += out.grad.cwiseProduct(bn->value);
                              }
                              if (bn->requires_grad) {
                                bn->ensure_grad();
                                bn->grad += out.grad.cwiseProduct(an->value);
                              }
                            });
}

// Multiply by a compile-time-constant scalar (no gradient through c).
template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  auto an = a.node();
  return detail::make_op<S>("scale", a.value() * c, {a}, [an, c](detail::Node<S>& out) {
    if (an->requires_grad) {
      an->ensure_grad();
      an->grad += out.grad * c;
    }
  });
}

// Multiply every entry by a 1x1 tensor (gradient flows to both operands).
template <typename S>
Tensor<S> mul_scalar(const Tensor<S>& a, const Tensor<S>& s) {
  if (s.rows() != 1 || s.cols() != 1) throw ShapeError("mul_scalar: scale operand must be 1x1");
  auto an = a.node();
  auto sn = s.node();
  return detail::make_op<S>("mul_scalar", a.value() * s.value()(0, 0), {a, s},
                            [an, sn](detail::Node<S>& out) {
                              if (an->requires_grad) {
                                an->ensure_grad();
                                an->grad += out.grad * sn->value(0, 0);
                              }
                              if (sn->requires_grad) {
                                sn->ensure_grad();
                                sn->grad(0, 0) += out.grad.cwiseProduct(an->value).sum();
                              }
                            });
}

// Add a 1xC row vector to every row of a.
template <typename S>
Tensor<S> add_rowvec(const Tensor<S>& a, const Tensor<S>& r) {
  if (r.rows() != 1 || r.cols() != a.cols())
    throw ShapeError("add_rowvec: bias must be 1x" + std::to_string(a.cols()));
  auto an = a.node();
  auto rn = r.node();
  typename Tensor<S>::Matrix v = a.value();
  v.rowwise() += r.value().row(0);
  return detail::make_op<S>("add_rowvec", std::move(v), {a, r}, [an, rn](detail::Node<S>& out) {
    if (an->requires_grad) {
      an->ensure_grad();
      an->grad += out.grad;
    }
    if (rn->requires_grad) {
      rn->ensure_grad();
      rn->grad.row(0) += out.grad.colwise().sum();
    }
  });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  detail::probe_kink(a.value().cwiseAbs().minCoeff());
  auto an = a.node();
  return detail::make_op<S>("relu", a.value().cwiseMax(S(0)), {a}, [an](detail::Node<S>& out) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    an->grad += out.grad.cwiseProduct(
        (an->value.array() > S(0)).template cast<S>().matrix());
  });
}

// Numerically stable logistic; equals 0 or 1 exactly when exp underflows.
template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  auto an = a.node();
  typename Tensor<S>::Matrix v = a.value().unaryExpr([](S x) {
    if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
    const S e = std::exp(x);
    return e / (S(1) + e);
  });
  return detail::make_op<S>("sigmoid", std::move(v), {a}, [an](detail::Node<S>& out) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    an->grad += out.grad.cwiseProduct(
        out.value.cwiseProduct((S(1) - out.value.array()).matrix()));
  });
}

template <typename S>
Tensor<S> abs(const Tensor<S>& a) {
  detail::probe_kink(a.value().cwiseAbs().minCoeff());
  auto an = a.node();
  return detail::make_op<S>("abs", a.value().cwiseAbs(), {a}, [an](detail::Node<S>& out) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    an->grad += out.grad.cwiseProduct(an->value.unaryExpr([](S x) {
      return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0));
    }));
  });
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
  auto an = a.node();
  return detail::make_op<S>("transpose", a.value().transpose(), {a},
                            [an](detail::Node<S>& out) {
                              if (!an->requires_grad) return;
                              an->ensure_grad();
                              an->grad += out.grad.transpose();
                            });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  auto an = a.node();
  typename Tensor<S>::Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return detail::make_op<S>("sum", std::move(v), {a}, [an](detail::Node<S>& out) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    an->grad.array() += out.grad(0, 0);
  });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& a) {
  if (a.rows() == 0 || a.cols() == 0) throw ShapeError("mean: empty tensor");
  auto an = a.node();
  const S inv = S(1) / static_cast<S>(a.rows() * a.cols());
  typename Tensor<S>::Matrix v(1, 1);
  v(0, 0) = a.value().sum() * inv;
  return detail::make_op<S>("mean", std::move(v), {a}, [an, inv](detail::Node<S>& out) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    an->grad.array() += out.grad(0, 0) * inv;
  });
}

// Column sums: (N x C) -> (1 x C).  Sum pooling over nodes.
template <typename S>
Tensor<S> sum_rows(const Tensor<S>& a) {
  auto an = a.node();
  return detail::make_op<S>("sum_rows", a.value().colwise().sum(), {a},
                            [an](detail::Node<S>& out) {
                              if (!an->requires_grad) return;
                              an->ensure_grad();
                              an->grad.rowwise() += out.grad.row(0);
                            });
}

// Population variance over all entries -> 1x1.
template <typename S>
Tensor<S> variance(const Tensor<S>& a) {
  if (a.rows() == 0 || a.cols() == 0) throw ShapeError("variance: empty tensor");
  auto an = a.node();
  const S n = static_cast<S>(a.rows() * a.cols());
  const S mu = a.value().sum() / n;
  typename Tensor<S>::Matrix centered = a.value().array() - mu;
  typename Tensor<S>::Matrix v(1, 1);
  v(0, 0) = centered.squaredNorm() / n;
  return detail::make_op<S>("variance", std::move(v), {a},
                            [an, centered, n](detail::Node<S>& out) {
                              if (!an->requires_grad) return;
                              an->ensure_grad();
                              an->grad += centered * (S(2) / n * out.grad(0, 0));
                            });
}

// Softmax over a column vector (N x 1), numerically stabilized.
template <typename S>
Tensor<S> softmax(const Tensor<S>& a) {
  if (a.cols() != 1) throw ShapeError("softmax: expects a column vector");
  auto an = a.node();
  typename Tensor<S>::Matrix v = a.value();
  const S m = v.maxCoeff();
  v = (v.array() - m).exp().matrix();
  v /= v.sum();
  return detail::make_op<S>("softmax", std::move(v), {a}, [an](detail::Node<S>& out) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    const S dot = out.grad.cwiseProduct(out.value).sum();
    an->grad += out.value.cwiseProduct((out.grad.array() - dot).matrix());
  });
}

// Stack tensors with equal column counts vertically.
template <typename S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: empty input");
  Eigen::Index total = 0;
  const Eigen::Index c = parts[0].cols();
  for (const auto& p : parts) {
    if (p.cols() != c) throw ShapeError("concat_rows: column counts differ");
    total += p.rows();
  }
  typename Tensor<S>::Matrix v(total, c);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<typename Tensor<S>::NodePtr> nodes;
  nodes.reserve(parts.size());
  for (const auto& p : parts) nodes.push_back(p.node());
  return detail::make_op<S>("concat_rows", std::move(v), parts,
                            [nodes](detail::Node<S>& out) {
                              Eigen::Index at = 0;
                              for (const auto& n : nodes) {
                                const Eigen::Index r = n->value.rows();
                                if (n->requires_grad) {
                                  n->ensure_grad();
                                  n->grad += out.grad.middleRows(at, r);
                                }
                                at += r;
                              }
                            });
}

// Each row of a repeated k times consecutively: (N x C) -> (N*k x C).
template <typename S>
Tensor<S> repeat_rows(const Tensor<S>& a, Eigen::Index k) {
  if (k <= 0) throw ShapeError("repeat_rows: k must be positive");
  auto an = a.node();
  const Eigen::Index n = a.rows();
  typename Tensor<S>::Matrix v(n * k, a.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index t = 0; t < k; ++t) v.row(i * k + t) = a.value().row(i);
  return detail::make_op<S>("repeat_rows", std::move(v), {a}, [an, n, k](detail::Node<S>& out) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index t = 0; t < k; ++t) an->grad.row(i) += out.grad.row(i * k + t);
  });
}

// Whole matrix stacked k times: row r of output = row (r mod N) of a.
template <typename S>
Tensor<S> tile_rows(const Tensor<S>& a, Eigen::Index k) {
  if (k <= 0) throw ShapeError("tile_rows: k must be positive");
  auto an = a.node();
  const Eigen::Index n = a.rows();
  typename Tensor<S>::Matrix v(n * k, a.cols());
  for (Eigen::Index t = 0; t < k; ++t) v.middleRows(t * n, n) = a.value();
  return detail::make_op<S>("tile_rows", std::move(v), {a}, [an, n, k](detail::Node<S>& out) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (Eigen::Index t = 0; t < k; ++t) an->grad += out.grad.middleRows(t * n, n);
  });
}

// Row-major reshape (copy), used to view flat cross-prediction stacks as BxB.
template <typename S>
Tensor<S> reshape_rm(const Tensor<S>& a, Eigen::Index r, Eigen::Index c) {
  if (a.rows() * a.cols() != r * c) throw ShapeError("reshape_rm: element count mismatch");
  auto an = a.node();
  const Eigen::Index ac = a.cols();
  typename Tensor<S>::Matrix v(r, c);
  for (Eigen::Index i = 0; i < r * c; ++i) v(i / c, i % c) = a.value()(i / ac, i % ac);
  return detail::make_op<S>("reshape_rm", std::move(v), {a}, [an, ac, c](detail::Node<S>& out) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    const Eigen::Index total = out.value.rows() * out.value.cols();
    for (Eigen::Index i = 0; i < total; ++i)
      an->grad(i / ac, i % ac) += out.grad(i / c, i % c);
  });
}

// Directed scatter-add: out.row(dst) += a.row(src) for every (src, dst) pair.
// Neighbor aggregation for message passing; pairs are applied in given order.
template <typename S>
Tensor<S> scatter_add_rows(const Tensor<S>& a,
                           const std::vector<std::pair<int, int>>& pairs,
                           Eigen::Index out_rows) {
  auto an = a.node();
  const Eigen::Index in_rows = a.rows();
  for (const auto& [s, d] : pairs)
    if (s < 0 || s >= in_rows || d < 0 || d >= out_rows)
      throw ShapeError("scatter_add_rows: index out of range");
  typename Tensor<S>::Matrix v = Tensor<S>::Matrix::Zero(out_rows, a.cols());
  for (const auto& [s, d] : pairs) v.row(d) += a.value().row(s);
  return detail::make_op<S>("scatter_add_rows", std::move(v), {a},
                            [an, pairs](detail::Node<S>& out) {
                              if (!an->requires_grad) return;
                              an->ensure_grad();
                              for (const auto& [s, d] : pairs) an->grad.row(s) += out.grad.row(d);
                            });
}

// Row selection: out has rows a.row(idx[0]), a.row(idx[1]), ...
template <typename S>
Tensor<S> gather_rows(const Tensor<S>& a, const std::vector<int>& idx) {
  auto an = a.node();
  for (int i : idx)
    if (i < 0 || i >= a.rows()) throw ShapeError("gather_rows: index out of range");
  typename Tensor<S>::Matrix v(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (size_t r = 0; r < idx.size(); ++r) v.row(static_cast<Eigen::Index>(r)) = a.value().row(idx[r]);
  return detail::make_op<S>("gather_rows", std::move(v), {a}, [an, idx](detail::Node<S>& out) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t r = 0; r < idx.size(); ++r)
      an->grad.row(idx[r]) += out.grad.row(static_cast<Eigen::Index>(r));
  });
}

// Inverted dropout: zeroes entries with probability rate and scales survivors
// by 1/(1-rate) so the expected value is the identity.  rate 0 is the identity.
template <typename S>
Tensor<S> dropout(const Tensor<S>& a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ShapeError("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return a;
  auto an = a.node();
  typename Tensor<S>::Matrix mask(a.rows(), a.cols());
  const S keep_scale = S(1) / S(1 - rate);
  for (Eigen::Index i = 0; i < mask.rows(); ++i)
    for (Eigen::Index j = 0; j < mask.cols(); ++j)
      mask(i, j) = rng.uniform01() < rate ? S(0) : keep_scale;
  return detail::make_op<S>("dropout", a.value().cwiseProduct(mask), {a},
                            [an, mask](detail::Node<S>& out) {
                              if (!an->requires_grad) return;
                              an->ensure_grad();
                              an->grad += out.grad.cwiseProduct(mask);
                            });
}

// Mean absolute error between same-shape tensors -> 1x1.
template <typename S>
Tensor<S> mae(const Tensor<S>& pred, const Tensor<S>& target) {
  detail::require_same_shape("mae", pred, target);
  return mean(abs(sub(pred, target)));
}

// RAII inference-mode switch: ops created in scope carry no adjoints.
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// ---- backward --------------------------------------------------------------

// Reverse accumulation from a scalar loss.  Topological order is rebuilt per
// call; the graph is discarded afterwards (tensors keep only their values).
template <typename S>
void backward(const Tensor<S>& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) throw ShapeError("backward: loss must be 1x1");
  using Node = detail::Node<S>;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad(0, 0) = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->grad_ready) n->backprop(*n);
  }
}

}  // namespace sgir
