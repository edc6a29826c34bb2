#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sgir/tensor.hpp"

namespace sgir {

enum class Act { Identity, Relu, Sigmoid };

inline const char* act_name(Act a) {
  switch (a) {
    case Act::Identity: return "identity";
    case Act::Relu: return "relu";
    case Act::Sigmoid: return "sigmoid";
  }
  return "?";
}

template <typename S>
Tensor<S> apply_act(const Tensor<S>& x, Act a) {
  switch (a) {
    case Act::Identity: return x;
    case Act::Relu: return relu(x);
    case Act::Sigmoid: return sigmoid(x);
  }
  throw ShapeError("unknown activation");
}

// Named parameter handle; names key the checkpoint format.
template <typename S>
struct NamedParam {
  std::string name;
  Tensor<S> tensor;
};

// Glorot-style uniform init: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
template <typename S>
typename Tensor<S>::Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  typename Tensor<S>::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<S>(rng.uniform(-a, a));
  return m;
}

// Dense multilayer perceptron; one activation id per layer.
template <typename S>
struct Mlp {
  struct Layer {
    Tensor<S> w;  // in x out
    Tensor<S> b;  // 1 x out
    Act act = Act::Identity;
  };
  std::vector<Layer> layers;

  static Mlp make(const std::vector<Eigen::Index>& dims, const std::vector<Act>& acts, Rng& rng) {
    if (dims.size() < 2 || acts.size() != dims.size() - 1)
      throw ShapeError("mlp: dims/activations mismatch");
    Mlp m;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
      Layer layer;
      layer.w = Tensor<S>::parameter(glorot_uniform<S>(dims[l], dims[l + 1], rng));
      layer.b = Tensor<S>::parameter(Tensor<S>::Matrix::Zero(1, dims[l + 1]));
      layer.act = acts[l];
      m.layers.push_back(std::move(layer));
    }
    return m;
  }

  Tensor<S> forward(const Tensor<S>& x) const {
    Tensor<S> h = x;
    for (const auto& layer : layers)
      h = apply_act(add_rowvec(matmul(h, layer.w), layer.b), layer.act);
    return h;
  }

  // Forward with inverted dropout applied after each hidden activation.
  Tensor<S> forward_dropout(const Tensor<S>& x, double rate, Rng& rng) const {
    Tensor<S> h = x;
    for (size_t l = 0; l < layers.size(); ++l) {
      h = apply_act(add_rowvec(matmul(h, layers[l].w), layers[l].b), layers[l].act);
      if (l + 1 < layers.size()) h = dropout(h, rate, rng);
    }
    return h;
  }

  void collect(const std::string& prefix, std::vector<NamedParam<S>>& out) {
    for (size_t l = 0; l < layers.size(); ++l) {
      out.push_back({prefix + ".w" + std::to_string(l), layers[l].w});
      out.push_back({prefix + ".b" + std::to_string(l), layers[l].b});
    }
  }

  Eigen::Index in_dim() const { return layers.front().w.rows(); }
  Eigen::Index out_dim() const { return layers.back().w.cols(); }
};

// Graph isomorphism network encoder: per layer,
//   h_v <- MLP_l((1 + eps_l) * h_v + sum_{u in N(v)} h_u)
// with a learnable per-layer eps.  Each layer MLP is Linear-ReLU-Linear-ReLU.
template <typename S>
struct Gin {
  std::vector<Mlp<S>> layer_mlps;
  std::vector<Tensor<S>> eps;  // 1x1 each

  static Gin make(Eigen::Index in_dim, Eigen::Index hidden, int num_layers, Rng& rng) {
    if (num_layers < 1) throw ShapeError("gin: needs at least one layer");
    Gin g;
    for (int l = 0; l < num_layers; ++l) {
      const Eigen::Index d_in = (l == 0) ? in_dim : hidden;
      g.layer_mlps.push_back(
          Mlp<S>::make({d_in, hidden, hidden}, {Act::Relu, Act::Relu}, rng));
      g.eps.push_back(Tensor<S>::parameter(Tensor<S>::Matrix::Zero(1, 1)));
    }
    return g;
  }

  // x: (num_nodes x in_dim); pairs: directed edge list (both directions).
  Tensor<S> forward(const Tensor<S>& x, const std::vector<std::pair<int, int>>& pairs) const {
    Tensor<S> h = x;
    for (size_t l = 0; l < layer_mlps.size(); ++l) {
      Tensor<S> one_plus_eps = add(eps[l], Tensor<S>::scalar(S(1)));
      Tensor<S> agg = add(mul_scalar(h, one_plus_eps), scatter_add_rows(h, pairs, h.rows()));
      h = layer_mlps[l].forward(agg);
    }
    return h;
  }

  void collect(const std::string& prefix, std::vector<NamedParam<S>>& out) {
    for (size_t l = 0; l < layer_mlps.size(); ++l) {
      layer_mlps[l].collect(prefix + ".layer" + std::to_string(l), out);
      out.push_back({prefix + ".eps" + std::to_string(l), eps[l]});
    }
  }

  int num_layers() const { return static_cast<int>(layer_mlps.size()); }
  Eigen::Index hidden_dim() const { return layer_mlps.back().out_dim(); }
};

// Adam with bias correction.  State rows align with the parameter list order;
// step() asserts the pairing by shape.
template <typename S>
struct Adam {
  using Matrix = typename Tensor<S>::Matrix;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  std::vector<Matrix> m, v;

  void init(const std::vector<NamedParam<S>>& params) {
    t = 0;
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
      v.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
    }
  }

  void step(std::vector<NamedParam<S>>& params) {
    if (m.size() != params.size()) throw ShapeError("adam: state/parameter count mismatch");
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i].tensor;
      if (m[i].rows() != p.rows() || m[i].cols() != p.cols())
        throw ShapeError("adam: state shape mismatch at " + params[i].name);
      Matrix g = p.has_grad() ? p.grad() : Matrix::Zero(p.rows(), p.cols());
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g.cwiseProduct(g);
      const Matrix mhat = m[i] / bc1;
      const Matrix vhat = v[i] / bc2;
      p.raw() -= (lr * mhat.array() / (vhat.array().sqrt() + eps)).matrix();
      if (!p.raw().allFinite()) throw NumericFault("non-finite value produced by op 'adam_step'");
    }
  }

  void zero_grads(std::vector<NamedParam<S>>& params) {
    for (auto& p : params) p.tensor.zero_grad();
  }
};

}  // namespace sgir
