#include "risnoma/neural.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace risnoma::neural {

double activate(Activation act, double z) {
  switch (act) {
    case Activation::identity: return z;
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::tanh_fn: return std::tanh(z);
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
  }
  return z;
}

double activate_grad_from_output(Activation act, double a) {
  switch (act) {
    case Activation::identity: return 1.0;
    case Activation::relu: return a > 0.0 ? 1.0 : 0.0;
    case Activation::tanh_fn: return 1.0 - a * a;
    case Activation::sigmoid: return a * (1.0 - a);
  }
  return 1.0;
}

DenseLayer make_layer(std::size_t in, std::size_t out, Activation act,
                      rng::Stream& stream) {
  DenseLayer layer;
  layer.w = Matrix(out, in);
  layer.b.assign(out, 0.0);
  layer.act = act;
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& v : layer.w.data) v = stream.uniform(-bound, bound);
  for (double& v : layer.b) v = stream.uniform(-bound, bound);
  return layer;
}

Vector layer_forward(const DenseLayer& layer, const Vector& x) {
  if (x.size() != layer.in_dim())
    throw std::invalid_argument("layer_forward: input dimension mismatch");
  Vector y(layer.out_dim());
  for (std::size_t r = 0; r < layer.out_dim(); ++r) {
    double z = layer.b[r];
    const double* wr = &layer.w.data[r * layer.w.cols];
    for (std::size_t c = 0; c < layer.in_dim(); ++c) z += wr[c] * x[c];
    y[r] = activate(layer.act, z);
  }
  return y;
}

Vector layer_backward(const DenseLayer& layer, const Vector& x,
                      const Vector& output, const Vector& upstream,
                      LayerGrad& grad) {
  if (upstream.size() != layer.out_dim())
    throw std::invalid_argument("layer_backward: upstream dimension mismatch");
  if (grad.dw.rows == 0) {
    grad.dw = Matrix(layer.out_dim(), layer.in_dim());
    grad.db.assign(layer.out_dim(), 0.0);
  }
  Vector dx(layer.in_dim(), 0.0);
  for (std::size_t r = 0; r < layer.out_dim(); ++r) {
    double dz = upstream[r] * activate_grad_from_output(layer.act, output[r]);
    if (dz == 0.0) continue;
    grad.db[r] += dz;
    double* gw = &grad.dw.data[r * grad.dw.cols];
    const double* wr = &layer.w.data[r * layer.w.cols];
    for (std::size_t c = 0; c < layer.in_dim(); ++c) {
      gw[c] += dz * x[c];
      dx[c] += dz * wr[c];
    }
  }
  return dx;
}

void apply_update(DenseLayer& layer, const LayerGrad& grad, double lr, double l2,
                  const std::string& path) {
  for (std::size_t i = 0; i < layer.w.data.size(); ++i) {
    double v = layer.w.data[i] + lr * grad.dw.data[i] - lr * l2 * layer.w.data[i];
    if (!std::isfinite(v))
      throw std::runtime_error("non-finite update at " + path + ".w[" +
                               std::to_string(i / layer.w.cols) + "," +
                               std::to_string(i % layer.w.cols) + "]");
    layer.w.data[i] = v;
  }
  for (std::size_t i = 0; i < layer.b.size(); ++i) {
    double v = layer.b[i] + lr * grad.db[i] - lr * l2 * layer.b[i];
    if (!std::isfinite(v))
      throw std::runtime_error("non-finite update at " + path + ".b[" +
                               std::to_string(i) + "]");
    layer.b[i] = v;
  }
}

void GradientTape::add_scaled(const GradientTape& other, double scale) {
  if (layers.empty()) {
    layers = other.layers;
    for (LayerGrad& g : layers) {
      for (double& v : g.dw.data) v *= scale;
      for (double& v : g.db) v *= scale;
    }
    return;
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (std::size_t i = 0; i < layers[l].dw.data.size(); ++i)
      layers[l].dw.data[i] += scale * other.layers[l].dw.data[i];
    for (std::size_t i = 0; i < layers[l].db.size(); ++i)
      layers[l].db[i] += scale * other.layers[l].db[i];
  }
}

void GradientTape::scale(double factor) {
  for (LayerGrad& g : layers) {
    for (double& v : g.dw.data) v *= factor;
    for (double& v : g.db) v *= factor;
  }
}

DenseNet::DenseNet(const std::vector<std::size_t>& dims,
                   const std::vector<Activation>& acts, rng::Stream& stream) {
  if (dims.size() < 2 || acts.size() != dims.size() - 1)
    throw std::invalid_argument("DenseNet: dims/acts mismatch");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    layers_.push_back(make_layer(dims[i], dims[i + 1], acts[i], stream));
}

std::size_t DenseNet::param_count() const {
  std::size_t n = 0;
  for (const DenseLayer& l : layers_) n += l.param_count();
  return n;
}

Vector DenseNet::forward(const Vector& x) const {
  Vector v = x;
  for (const DenseLayer& layer : layers_) v = layer_forward(layer, v);
  return v;
}

Vector DenseNet::forward_cached(const Vector& x, Cache& cache) const {
  cache.input = x;
  cache.outputs.clear();
  cache.outputs.reserve(layers_.size());
  const Vector* cur = &cache.input;
  for (const DenseLayer& layer : layers_) {
    cache.outputs.push_back(layer_forward(layer, *cur));
    cur = &cache.outputs.back();
  }
  return cache.outputs.empty() ? x : cache.outputs.back();
}

GradientTape DenseNet::zero_tape() const {
  GradientTape tape;
  tape.layers.resize(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    tape.layers[l].dw = Matrix(layers_[l].out_dim(), layers_[l].in_dim());
    tape.layers[l].db.assign(layers_[l].out_dim(), 0.0);
  }
  tape.d_input.assign(input_dim(), 0.0);
  return tape;
}

void DenseNet::backward(const Cache& cache, const Vector& upstream,
                        GradientTape& tape) const {
  if (tape.layers.size() != layers_.size())
    throw std::invalid_argument("backward: tape shape mismatch");
  Vector up = upstream;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Vector& in = (l == 0) ? cache.input : cache.outputs[l - 1];
    up = layer_backward(layers_[l], in, cache.outputs[l], up, tape.layers[l]);
  }
  if (tape.d_input.size() != up.size()) tape.d_input.assign(up.size(), 0.0);
  for (std::size_t i = 0; i < up.size(); ++i) tape.d_input[i] += up[i];
}

void DenseNet::sgd_step(const GradientTape& tape, double lr, double l2) {
  if (tape.layers.size() != layers_.size())
    throw std::invalid_argument("sgd_step: tape shape mismatch");
  for (std::size_t l = 0; l < layers_.size(); ++l)
    apply_update(layers_[l], tape.layers[l], lr, l2, "layer " + std::to_string(l));
}

void DenseNet::save(std::ostream& out) const {
  out << "risnoma-net v1\n";
  out << "layers " << layers_.size() << "\n";
  for (const DenseLayer& l : layers_)
    out << "layer " << l.in_dim() << " " << l.out_dim() << " " << to_string(l.act)
        << "\n";
  out.precision(17);
  for (const DenseLayer& l : layers_) {
    for (double v : l.w.data) out << v << "\n";
    for (double v : l.b) out << v << "\n";
  }
}

DenseNet DenseNet::load(std::istream& in) {
  std::string magic, version;
  in >> magic >> version;
  if (magic != "risnoma-net" || version != "v1")
    throw std::runtime_error("checkpoint: unrecognized header");
  std::string word;
  std::size_t count = 0;
  in >> word >> count;
  if (word != "layers") throw std::runtime_error("checkpoint: missing layer count");
  DenseNet net;
  for (std::size_t l = 0; l < count; ++l) {
    std::size_t ind = 0, outd = 0;
    std::string act;
    in >> word >> ind >> outd >> act;
    if (word != "layer" || !in)
      throw std::runtime_error("checkpoint: malformed layer manifest");
    DenseLayer layer;
    layer.w = Matrix(outd, ind);
    layer.b.assign(outd, 0.0);
    layer.act = activation_from_string(act);
    net.layers_.push_back(layer);
  }
  for (DenseLayer& l : net.layers_) {
    for (double& v : l.w.data) in >> v;
    for (double& v : l.b) in >> v;
  }
  if (!in) throw std::runtime_error("checkpoint: parameter array truncated");
  return net;
}

const char* to_string(Activation act) {
  switch (act) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh_fn: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh_fn;
  if (name == "sigmoid") return Activation::sigmoid;
  throw std::runtime_error("checkpoint: unknown activation '" + name + "'");
}

}  // namespace risnoma::neural
