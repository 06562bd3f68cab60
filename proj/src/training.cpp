#include "softmoe/training.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace softmoe {

void adam_step(AdamState& state, std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient block count");
  for (std::size_t b = 0; b < params.size(); ++b)
    if (params[b].size() != grads[b].size())
      throw ShapeError("adam_step: block " + std::to_string(b) + " size mismatch");

  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  } else if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: moments do not match parameter layout");
  }

  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = state.m[b];
    auto& v = state.v[b];
    if (m.size() != params[b].size()) throw ShapeError("adam_step: moment size mismatch");
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      const double g = grads[b][i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      params[b][i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

void adam_step(AdamState& state, Model& model, const ModelGradients& grads) {
  const auto p = model.parameter_spans();
  const auto g = grads.spans();
  adam_step(state, p, g);
}

BatchGradient batch_gradient(const Model& model, std::span<const Matrix> inputs,
                             const SampleLoss& loss, Exec exec) {
  if (inputs.empty()) throw std::invalid_argument("batch_gradient: empty batch");
  const std::size_t blocks = (inputs.size() + kGradientBlock - 1) / kGradientBlock;
  std::vector<ModelGradients> block_grads(blocks);
  std::vector<double> block_loss(blocks, 0.0);

  parallel_for(blocks, exec, [&](std::size_t blk) {
    ModelGradients g = ModelGradients::zeros_like(model);
    double total = 0.0;
    const std::size_t end = std::min(inputs.size(), (blk + 1) * kGradientBlock);
    for (std::size_t i = blk * kGradientBlock; i < end; ++i) {
      const ModelTrace trace = model_forward(model, inputs[i]);
      const LossValue lv = loss(trace.prediction, i);
      total += lv.loss;
      model_backward(model, trace, lv.grad, g);
    }
    block_grads[blk] = std::move(g);
    block_loss[blk] = total;
  });

  BatchGradient out{0.0, std::move(block_grads.front())};
  double total = block_loss.front();
  for (std::size_t blk = 1; blk < blocks; ++blk) {
    out.grads.add(block_grads[blk]);
    total += block_loss[blk];
  }
  const double inv = 1.0 / static_cast<double>(inputs.size());
  out.grads.scale(inv);
  out.mean_loss = total * inv;
  return out;
}

double evaluate_accuracy(const Model& model, const LabeledSet& set, Exec exec) {
  if (set.size() == 0) throw std::invalid_argument("evaluate_accuracy: empty set");
  std::vector<unsigned char> hit(set.size(), 0);
  parallel_for(set.size(), exec, [&](std::size_t i) {
    hit[i] = argmax(model_forward(model, set.inputs[i]).prediction) == set.labels[i];
  });
  const auto correct = std::accumulate(hit.begin(), hit.end(), std::size_t{0});
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

TrainTrace train_classifier(Model& model, const LabeledSet& train, const LabeledSet& test,
                            const TrainConfig& cfg, const RngStream& shuffle_stream) {
  if (train.size() == 0) throw std::invalid_argument("train_classifier: empty training set");
  if (cfg.batch_size == 0) throw std::invalid_argument("train_classifier: batch_size must be >= 1");
  if (!model.is_classifier()) throw std::invalid_argument("train_classifier: model needs a linear head");

  TrainTrace trace;
  AdamState adam;
  adam.lr = cfg.lr;
  std::vector<std::size_t> order(train.size());
  std::vector<Matrix> batch;
  std::vector<std::size_t> batch_labels;

  const auto reached_target = [&] {
    trace.final_test_accuracy = evaluate_accuracy(model, test, cfg.exec);
    return *trace.final_test_accuracy >= *cfg.stop_at_accuracy;
  };

  if (cfg.stop_at_accuracy && cfg.epochs > 0 && reached_target()) {
    trace.stopped_early = true;
    return trace;
  }

  for (std::size_t epoch = 0; epoch < cfg.epochs && !trace.stopped_early; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    RngStream s = shuffle_stream.fork("epoch" + std::to_string(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[s.uniform_index(i)]);

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      batch_labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(train.inputs[order[i]]);
        batch_labels.push_back(train.labels[order[i]]);
      }
      auto bg = batch_gradient(
          model, batch,
          [&](std::span<const double> pred, std::size_t i) {
            return cross_entropy_loss(pred, batch_labels[i]);
          },
          cfg.exec);
      adam_step(adam, model, bg.grads);
      ++trace.steps;
      loss_sum += bg.mean_loss * static_cast<double>(batch.size());
      loss_count += batch.size();

      if (cfg.stop_at_accuracy && cfg.eval_every > 0 && trace.steps % cfg.eval_every == 0 &&
          reached_target()) {
        trace.stopped_early = true;
        break;
      }
    }

    EpochRecord rec{epoch, loss_sum / static_cast<double>(loss_count), std::nullopt};
    if (!trace.stopped_early) {
      trace.final_test_accuracy = evaluate_accuracy(model, test, cfg.exec);
      if (cfg.stop_at_accuracy && *trace.final_test_accuracy >= *cfg.stop_at_accuracy)
        trace.stopped_early = true;
    }
    rec.test_accuracy = trace.final_test_accuracy;
    trace.epochs.push_back(rec);
  }
  return trace;
}

TrainTrace train_norm_regressor(Model& model, const NormTaskConfig& task, const TrainConfig& cfg,
                                const RngStream& data_stream) {
  task.validate();
  if (model.is_classifier()) throw std::invalid_argument("train_norm_regressor: needs a summation head");
  if (model.tokens != task.tokens || model.dim() != task.dim)
    throw ShapeError("train_norm_regressor: model shape does not match the task tokenization");
  if (cfg.steps_per_epoch == 0)
    throw std::invalid_argument("train_norm_regressor: steps_per_epoch must be >= 1");

  TrainTrace trace;
  AdamState adam;
  adam.lr = cfg.lr;
  NormTaskConfig batch_cfg = task;
  batch_cfg.batch_size = cfg.batch_size;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream s = data_stream.fork("epoch" + std::to_string(epoch));
    double loss_sum = 0.0;
    for (std::size_t step = 0; step < cfg.steps_per_epoch; ++step) {
      const RegressionBatch batch = gen_norm_batch(batch_cfg, s);
      auto bg = batch_gradient(
          model, batch.inputs,
          [&](std::span<const double> pred, std::size_t i) {
            return mse_loss(pred[0], batch.targets[i]);
          },
          cfg.exec);
      adam_step(adam, model, bg.grads);
      ++trace.steps;
      loss_sum += bg.mean_loss;
    }
    trace.epochs.push_back({epoch, loss_sum / static_cast<double>(cfg.steps_per_epoch), std::nullopt});
  }
  return trace;
}

}  // namespace softmoe
