#include "softmoe/experts.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace softmoe {

MlpExpert::MlpExpert(std::size_t d, std::size_t h)
    : w1(d, h), b1(h, 0.0), w2(h, d), b2(d, 0.0) {}

std::size_t MlpExpert::parameter_count() const noexcept {
  return w1.size() + b1.size() + w2.size() + b2.size();
}

std::vector<std::span<double>> MlpExpert::spans() { return {w1.flat(), b1, w2.flat(), b2}; }

std::vector<std::span<const double>> MlpExpert::spans() const {
  return {w1.flat(), b1, w2.flat(), b2};
}

void expert_forward(const MlpExpert& e, std::span<const double> z, std::span<double> out,
                    std::span<double> pre_activation) {
  const std::size_t d = e.dim();
  const std::size_t h = e.hidden();
  if (z.size() != d || out.size() != d || pre_activation.size() != h)
    throw ShapeError("expert_forward: expected input of length " + std::to_string(d) + ", got " +
                     std::to_string(z.size()));

  std::copy(e.b1.begin(), e.b1.end(), pre_activation.begin());
  for (std::size_t i = 0; i < d; ++i) {
    const double zi = z[i];
    const double* w = e.w1.data() + i * h;
    for (std::size_t j = 0; j < h; ++j) pre_activation[j] += zi * w[j];
  }

  std::copy(e.b2.begin(), e.b2.end(), out.begin());
  for (std::size_t j = 0; j < h; ++j) {
    const double r = pre_activation[j] > 0.0 ? pre_activation[j] : 0.0;
    const double* w = e.w2.data() + j * d;
    for (std::size_t c = 0; c < d; ++c) out[c] += r * w[c];
  }
}

std::vector<double> expert_forward(const MlpExpert& e, std::span<const double> z) {
  std::vector<double> out(e.dim());
  std::vector<double> pre(e.hidden());
  expert_forward(e, z, out, pre);
  return out;
}

void expert_backward(const MlpExpert& e, std::span<const double> z,
                     std::span<const double> pre_activation, std::span<const double> upstream,
                     MlpExpert& grads, std::span<double> dz) {
  const std::size_t d = e.dim();
  const std::size_t h = e.hidden();
  if (z.size() != d || upstream.size() != d || dz.size() != d || pre_activation.size() != h ||
      grads.dim() != d || grads.hidden() != h)
    throw ShapeError("expert_backward: shape mismatch");

  // d(out) / d(b2) = I, d(out) / d(W2) = r g^T.
  for (std::size_t c = 0; c < d; ++c) grads.b2[c] += upstream[c];

  std::vector<double> dpre(h);
  for (std::size_t j = 0; j < h; ++j) {
    const bool active = pre_activation[j] > 0.0;
    const double r = active ? pre_activation[j] : 0.0;
    const double* w = e.w2.data() + j * d;
    double* gw = grads.w2.data() + j * d;
    double dr = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      gw[c] += r * upstream[c];
      dr += w[c] * upstream[c];
    }
    dpre[j] = active ? dr : 0.0;
    grads.b1[j] += dpre[j];
  }

  for (std::size_t i = 0; i < d; ++i) {
    const double* w = e.w1.data() + i * h;
    double* gw = grads.w1.data() + i * h;
    double acc = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      gw[j] += z[i] * dpre[j];
      acc += w[j] * dpre[j];
    }
    dz[i] = acc;
  }
}

std::size_t hidden_width_for(std::size_t n, std::size_t hidden_budget) {
  return std::max<std::size_t>(1, hidden_budget / n);
}

ExpertBank build_bank(std::size_t d, std::size_t n, std::size_t hidden_budget,
                      RngStream& init_stream) {
  if (d == 0 || n == 0 || hidden_budget == 0)
    throw std::invalid_argument("build_bank: d, n and hidden budget must be >= 1");
  const std::size_t h = hidden_width_for(n, hidden_budget);
  ExpertBank bank;
  bank.hidden_budget = hidden_budget;
  bank.experts.reserve(n);
  const double std1 = std::sqrt(2.0 / static_cast<double>(d));
  const double std2 = std::sqrt(2.0 / static_cast<double>(h));
  for (std::size_t j = 0; j < n; ++j) {
    MlpExpert e(d, h);
    for (double& v : e.w1.flat()) v = std1 * init_stream.normal();
    for (double& v : e.w2.flat()) v = std2 * init_stream.normal();
    bank.experts.push_back(std::move(e));
  }
  return bank;
}

std::size_t parameter_count(const ExpertBank& bank) {
  std::size_t total = 0;
  for (const auto& e : bank.experts) total += e.parameter_count();
  return total;
}

std::size_t weight_parameter_count(const ExpertBank& bank) {
  std::size_t total = 0;
  for (const auto& e : bank.experts) total += e.w1.size() + e.w2.size();
  return total;
}

}  // namespace softmoe
