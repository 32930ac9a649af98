#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "risnoma/rng.hpp"

namespace risnoma::neural {

using Vector = std::vector<double>;

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

enum class Activation { identity, relu, tanh_fn, sigmoid };

double activate(Activation act, double z);
/// Derivative expressed through the activation output a = act(z).
double activate_grad_from_output(Activation act, double a);

struct DenseLayer {
  Matrix w;  // out x in
  Vector b;  // out
  Activation act = Activation::identity;

  std::size_t in_dim() const { return w.cols; }
  std::size_t out_dim() const { return w.rows; }
  std::size_t param_count() const { return w.data.size() + b.size(); }
};

DenseLayer make_layer(std::size_t in, std::size_t out, Activation act,
                      rng::Stream& stream);

/// y = act(W x + b). When `output` is passed the post-activation values are
/// needed later by layer_backward.
Vector layer_forward(const DenseLayer& layer, const Vector& x);

struct LayerGrad {
  Matrix dw;
  Vector db;
};

/// Accumulates parameter gradients of (upstream . y) into `grad` and returns
/// the gradient w.r.t. x. `output` must hold the forward result for `x`.
Vector layer_backward(const DenseLayer& layer, const Vector& x,
                      const Vector& output, const Vector& upstream,
                      LayerGrad& grad);

/// In-place update theta <- theta + lr * grad - lr * l2 * theta.
/// Throws when any parameter turns non-finite, naming the parameter path.
void apply_update(DenseLayer& layer, const LayerGrad& grad, double lr, double l2,
                  const std::string& path);

struct GradientTape {
  std::vector<LayerGrad> layers;
  Vector d_input;

  void add_scaled(const GradientTape& other, double scale);
  void scale(double factor);
};

/// Plain feed-forward stack. Single-writer; concurrent read-only evaluation
/// is safe.
class DenseNet {
 public:
  DenseNet() = default;
  DenseNet(const std::vector<std::size_t>& dims,
           const std::vector<Activation>& acts, rng::Stream& stream);

  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
  std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }
  std::size_t layer_count() const { return layers_.size(); }
  const DenseLayer& layer(std::size_t i) const { return layers_[i]; }
  DenseLayer& layer(std::size_t i) { return layers_[i]; }
  std::size_t param_count() const;

  Vector forward(const Vector& x) const;

  struct Cache {
    Vector input;
    std::vector<Vector> outputs;  // post-activation per layer
  };
  Vector forward_cached(const Vector& x, Cache& cache) const;

  GradientTape zero_tape() const;
  /// Exact reverse-mode gradients of (upstream . output) w.r.t. parameters
  /// and input, accumulated into `tape`.
  void backward(const Cache& cache, const Vector& upstream, GradientTape& tape) const;

  void sgd_step(const GradientTape& tape, double lr, double l2);

  void save(std::ostream& out) const;
  static DenseNet load(std::istream& in);

 private:
  std::vector<DenseLayer> layers_;
};

const char* to_string(Activation act);
Activation activation_from_string(const std::string& name);

}  // namespace risnoma::neural
