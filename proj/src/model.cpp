#include "softmoe/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace softmoe {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

std::vector<double> head_forward(const Head& head, const Matrix& y) {
  return std::visit(
      overloaded{
          [&](const SummationHead&) { return std::vector<double>{sum(y)}; },
          [&](const LinearHead& h) {
            if (y.size() != h.inputs())
              throw ShapeError("head_forward: linear head expects " + std::to_string(h.inputs()) +
                               " inputs, got " + y.shape_str());
            std::vector<double> logits = h.b;
            const auto flat = y.flat();
            for (std::size_t p = 0; p < flat.size(); ++p) {
              const double v = flat[p];
              const double* w = h.w.data() + p * h.classes();
              for (std::size_t c = 0; c < logits.size(); ++c) logits[c] += v * w[c];
            }
            return logits;
          },
      },
      head);
}

std::size_t Model::parameter_count() const {
  std::size_t total = 0;
  for (const auto& s : parameter_spans()) total += s.size();
  return total;
}

std::vector<std::span<double>> Model::parameter_spans() {
  std::vector<std::span<double>> out;
  for (auto& layer : layers) {
    out.push_back(layer.phi.flat());
    for (auto& e : layer.bank.experts)
      for (auto s : e.spans()) out.push_back(s);
  }
  if (auto* h = std::get_if<LinearHead>(&head)) {
    out.push_back(h->w.flat());
    out.push_back(h->b);
  }
  return out;
}

std::vector<std::span<const double>> Model::parameter_spans() const {
  std::vector<std::span<const double>> out;
  for (auto s : const_cast<Model*>(this)->parameter_spans()) out.push_back(s);
  return out;
}

Model build_model(const ModelSpec& spec, RngStream& init_stream) {
  if (spec.layers == 0 || spec.tokens == 0 || spec.dim == 0 || spec.experts == 0 ||
      spec.hidden_budget == 0)
    throw std::invalid_argument("build_model: all dimensions must be >= 1");
  Model model;
  model.tokens = spec.tokens;
  for (std::size_t l = 0; l < spec.layers; ++l) {
    RngStream s = init_stream.fork("layer" + std::to_string(l));
    model.layers.push_back(build_layer(spec.dim, spec.experts, spec.hidden_budget, s));
  }
  if (spec.classes == 0) {
    model.head = SummationHead{};
  } else {
    const std::size_t inputs = spec.tokens * spec.dim;
    LinearHead h{Matrix(inputs, spec.classes), std::vector<double>(spec.classes, 0.0)};
    RngStream s = init_stream.fork("head");
    const double std = 1.0 / std::sqrt(static_cast<double>(inputs));
    for (double& v : h.w.flat()) v = std * s.normal();
    model.head = std::move(h);
  }
  return model;
}

ModelTrace model_forward_masked(const Model& model, const Matrix& x, const SubsetMask& mask) {
  if (x.rows() != model.tokens)
    throw ShapeError("model_forward: expected " + std::to_string(model.tokens) + " tokens, got " +
                     x.shape_str());
  ModelTrace trace;
  trace.layers.reserve(model.layers.size());
  const Matrix* current = &x;
  for (const auto& layer : model.layers) {
    trace.layers.push_back(masked_forward(layer, *current, mask));
    current = &trace.layers.back().output;
  }
  trace.prediction = head_forward(model.head, *current);
  return trace;
}

ModelTrace model_forward(const Model& model, const Matrix& x) {
  return model_forward_masked(model, x, SubsetMask::full(model.experts()));
}

ModelGradients ModelGradients::zeros_like(const Model& model) {
  ModelGradients g;
  for (const auto& layer : model.layers) g.layers.push_back(LayerGradients::zeros_like(layer));
  if (const auto* h = std::get_if<LinearHead>(&model.head))
    g.head = LinearHead{Matrix(h->w.rows(), h->w.cols()), std::vector<double>(h->b.size(), 0.0)};
  return g;
}

std::vector<std::span<double>> ModelGradients::spans() {
  std::vector<std::span<double>> out;
  for (auto& layer : layers) {
    out.push_back(layer.phi.flat());
    for (auto& e : layer.experts)
      for (auto s : e.spans()) out.push_back(s);
  }
  if (head) {
    out.push_back(head->w.flat());
    out.push_back(head->b);
  }
  return out;
}

std::vector<std::span<const double>> ModelGradients::spans() const {
  std::vector<std::span<const double>> out;
  for (auto s : const_cast<ModelGradients*>(this)->spans()) out.push_back(s);
  return out;
}

void ModelGradients::scale(double factor) {
  for (auto s : spans())
    for (double& v : s) v *= factor;
}

void ModelGradients::add(const ModelGradients& other) {
  auto mine = spans();
  const auto theirs = other.spans();
  if (mine.size() != theirs.size()) throw ShapeError("ModelGradients::add: layout mismatch");
  for (std::size_t b = 0; b < mine.size(); ++b) {
    if (mine[b].size() != theirs[b].size())
      throw ShapeError("ModelGradients::add: block size mismatch");
    for (std::size_t i = 0; i < mine[b].size(); ++i) mine[b][i] += theirs[b][i];
  }
}

Matrix model_backward(const Model& model, const ModelTrace& trace,
                      std::span<const double> d_prediction, ModelGradients& grads) {
  if (trace.layers.size() != model.layers.size() || grads.layers.size() != model.layers.size())
    throw ShapeError("model_backward: trace does not match model depth");
  const Matrix& y = trace.output();
  Matrix upstream(y.rows(), y.cols());

  if (const auto* h = std::get_if<LinearHead>(&model.head)) {
    if (d_prediction.size() != h->classes() || !grads.head)
      throw ShapeError("model_backward: head gradient shape mismatch");
    const auto flat = y.flat();
    for (std::size_t c = 0; c < h->classes(); ++c) grads.head->b[c] += d_prediction[c];
    for (std::size_t p = 0; p < flat.size(); ++p) {
      const double* w = h->w.data() + p * h->classes();
      double* gw = grads.head->w.data() + p * h->classes();
      double acc = 0.0;
      for (std::size_t c = 0; c < h->classes(); ++c) {
        gw[c] += flat[p] * d_prediction[c];
        acc += w[c] * d_prediction[c];
      }
      upstream.flat()[p] = acc;
    }
  } else {
    if (d_prediction.size() != 1) throw ShapeError("model_backward: summation head is scalar");
    upstream.fill(d_prediction[0]);
  }

  for (std::size_t l = model.layers.size(); l-- > 0;)
    upstream = backward(model.layers[l], trace.layers[l], upstream, grads.layers[l]);
  return upstream;
}

LossValue mse_loss(double pred, double target) {
  const double diff = pred - target;
  return {diff * diff, {2.0 * diff}};
}

LossValue cross_entropy_loss(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size())
    throw std::out_of_range("cross_entropy_loss: label " + std::to_string(label) +
                            " out of range for " + std::to_string(logits.size()) + " classes");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - mx);
  const double log_z = mx + std::log(total);
  LossValue out{log_z - logits[label], std::vector<double>(logits.size())};
  for (std::size_t c = 0; c < logits.size(); ++c) out.grad[c] = std::exp(logits[c] - log_z);
  out.grad[label] -= 1.0;
  return out;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace softmoe
