#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <vector>

#include "gradcheck.hpp"
#include "softmoe/datasets.hpp"
#include "softmoe/model.hpp"
#include "softmoe/training.hpp"

using namespace softmoe;

namespace {

bool same_params(const Model& a, const Model& b) {
  const auto pa = a.parameter_spans();
  const auto pb = b.parameter_spans();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!std::equal(pa[i].begin(), pa[i].end(), pb[i].begin(), pb[i].end())) return false;
  return true;
}

LabeledSet small_cluster(std::uint64_t seed, std::size_t train, std::size_t test, LabeledSet* test_out) {
  RngStream s(seed, "data");
  RngStream m = s.fork("means");
  const auto cfg = make_cluster_config(4, 3, 4, 2.0, 0.5, train, test, m);
  RngStream d = s.fork("draw");
  auto [tr, te] = gen_cluster_dataset(cfg, d);
  *test_out = std::move(te);
  return tr;
}

}  // namespace

TEST_CASE("losses and their gradients") {
  const auto mse = mse_loss(3.0, 1.0);
  CHECK(mse.loss == 4.0);
  CHECK(mse.grad[0] == 4.0);

  const std::vector<double> logits{1.0, 2.0, 3.0};
  const auto ce = cross_entropy_loss(logits, 2);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(ce.loss == doctest::Approx(-std::log(std::exp(3.0) / z)));
  CHECK(ce.grad[2] == doctest::Approx(std::exp(3.0) / z - 1.0));
  double g = 0.0;
  for (double v : ce.grad) g += v;
  CHECK(g == doctest::Approx(0.0).epsilon(1e-12));

  const std::vector<double> huge{1000.0, -1000.0};
  CHECK(std::isfinite(cross_entropy_loss(huge, 1).loss));
  CHECK_THROWS_AS(cross_entropy_loss(logits, 3), std::out_of_range);
}

TEST_CASE("argmax breaks ties toward the smaller index") {
  CHECK(argmax(std::vector<double>{1.0, 3.0, 3.0}) == 1);
  CHECK(argmax(std::vector<double>{-1.0}) == 0);
}

TEST_CASE("model gradients agree with finite differences for both heads and stacked layers") {
  RngStream s(1, "model-fd");
  double worst = 0.0;
  for (int trial = 0; trial < 24; ++trial) {
    const std::size_t layers = 1 + trial % 3;
    const std::size_t classes = trial % 2 ? 3 : 0;
    RngStream init = s.fork("init" + std::to_string(trial));
    Model model = build_model({layers, 3, 4, 1 + s.uniform_index(4), 12, classes}, init);
    gradcheck::jitter(model.parameter_spans(), s, 0.3);
    Matrix x = sample_gaussian(s, 3, 4, 0.0, 1.0);
    const std::size_t label = s.uniform_index(3);
    const double target = 2.0;
    const auto loss_of = [&](std::span<const double> pred) {
      return classes ? cross_entropy_loss(pred, label) : mse_loss(pred[0], target);
    };

    const ModelTrace trace = model_forward(model, x);
    ModelGradients grads = ModelGradients::zeros_like(model);
    const Matrix dx = model_backward(model, trace, loss_of(trace.prediction).grad, grads);

    const auto loss = [&] { return loss_of(model_forward(model, x).prediction).loss; };
    auto params = model.parameter_spans();
    const auto analytic = std::as_const(grads).spans();
    REQUIRE(params.size() == analytic.size());
    for (std::size_t b = 0; b < params.size(); ++b)
      worst = std::max(worst, gradcheck::rel_error(analytic[b], gradcheck::numeric(params[b], loss, 1e-5)));
    worst = std::max(worst, gradcheck::rel_error(dx.flat(), gradcheck::numeric(x.flat(), loss, 1e-5)));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("adam follows the bias-corrected update") {
  std::vector<double> p{1.0, -2.0};
  std::vector<double> g{0.5, -0.25};
  AdamState st;
  st.lr = 0.1;
  double m0 = 0.0, v0 = 0.0, ref = 1.0;
  for (int t = 1; t <= 3; ++t) {
    const std::vector<std::span<double>> ps{p};
    const std::vector<std::span<const double>> gs{g};
    adam_step(st, ps, gs);
    m0 = 0.9 * m0 + 0.1 * 0.5;
    v0 = 0.999 * v0 + 0.001 * 0.25;
    ref -= 0.1 * (m0 / (1 - std::pow(0.9, t))) / (std::sqrt(v0 / (1 - std::pow(0.999, t))) + 1e-8);
    CHECK(p[0] == doctest::Approx(ref).epsilon(1e-14));
  }
  CHECK(st.t == 3);
  std::vector<double> wrong{1.0};
  const std::vector<std::span<double>> ps{wrong};
  const std::vector<std::span<const double>> gs{g};
  CHECK_THROWS_AS(adam_step(st, ps, gs), ShapeError);
}

TEST_CASE("batch gradient is the mean of per-sample gradients and independent of threads") {
  RngStream s(2, "batch");
  const Model model = build_model({2, 2, 3, 3, 12, 0}, s);
  std::vector<Matrix> xs;
  std::vector<double> ys;
  for (int i = 0; i < 37; ++i) {
    xs.push_back(sample_gaussian(s, 2, 3, 0.0, 1.0));
    ys.push_back(s.normal());
  }
  const SampleLoss loss = [&](std::span<const double> p, std::size_t i) { return mse_loss(p[0], ys[i]); };

  ModelGradients ref = ModelGradients::zeros_like(model);
  double ref_loss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto tr = model_forward(model, xs[i]);
    const auto lv = loss(tr.prediction, i);
    ref_loss += lv.loss;
    model_backward(model, tr, lv.grad, ref);
  }
  ref.scale(1.0 / 37.0);

  const auto serial = batch_gradient(model, xs, loss, Exec::Serial);
  CHECK(serial.mean_loss == doctest::Approx(ref_loss / 37.0).epsilon(1e-13));
  const auto a = std::as_const(serial.grads).spans();
  const auto r = std::as_const(ref).spans();
  for (std::size_t b = 0; b < a.size(); ++b)
    for (std::size_t i = 0; i < a[b].size(); ++i) CHECK(a[b][i] == doctest::Approx(r[b][i]).epsilon(1e-12));

  for (int threads : {1, 2, 5}) {
    omp_set_num_threads(threads);
    const auto par = batch_gradient(model, xs, loss, Exec::Parallel);
    CHECK(par.mean_loss == serial.mean_loss);
    const auto p = std::as_const(par.grads).spans();
    for (std::size_t b = 0; b < p.size(); ++b)
      CHECK(std::equal(p[b].begin(), p[b].end(), a[b].begin()));
  }
  CHECK_THROWS_AS(batch_gradient(model, std::span<const Matrix>{}, loss, Exec::Serial), std::invalid_argument);
}

TEST_CASE("norm regression loss goes down") {
  RngStream s(3, "norm");
  Model model = build_model({1, 2, 5, 2, 50, 0}, s);
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 128;
  tc.lr = 3e-3;
  tc.steps_per_epoch = 4;
  const auto trace = train_norm_regressor(model, NormTaskConfig{}, tc, RngStream(3, "norm-data"));
  REQUIRE(trace.epochs.size() == 30);
  CHECK(trace.steps == 120);
  CHECK(trace.epochs.back().loss < 0.5 * trace.epochs.front().loss);
  Model wrong = build_model({1, 5, 2, 2, 50, 0}, s);
  CHECK_THROWS_AS(train_norm_regressor(wrong, NormTaskConfig{}, tc, RngStream(3, "x")), ShapeError);
}

TEST_CASE("classifier training stops at the target and is deterministic across exec modes") {
  LabeledSet test;
  const LabeledSet train = small_cluster(4, 400, 200, &test);
  TrainConfig tc;
  tc.epochs = 40;
  tc.batch_size = 32;
  tc.lr = 5e-3;
  tc.stop_at_accuracy = 0.9;
  tc.eval_every = 3;

  RngStream i1(5, "init"), i2(5, "init");
  Model a = build_model({1, 3, 4, 4, 16, 4}, i1);
  Model b = build_model({1, 3, 4, 4, 16, 4}, i2);
  tc.exec = Exec::Serial;
  const auto ta = train_classifier(a, train, test, tc, RngStream(6, "shuffle"));
  omp_set_num_threads(3);
  tc.exec = Exec::Parallel;
  const auto tb = train_classifier(b, train, test, tc, RngStream(6, "shuffle"));

  CHECK(ta.stopped_early);
  CHECK(*ta.final_test_accuracy >= 0.9);
  CHECK(ta.steps == tb.steps);
  CHECK(same_params(a, b));
  CHECK(evaluate_accuracy(a, test, Exec::Serial) == evaluate_accuracy(a, test, Exec::Parallel));
}

TEST_CASE("training needs a usable setup") {
  LabeledSet test;
  const LabeledSet train = small_cluster(7, 40, 20, &test);
  RngStream s(8, "init");
  Model reg = build_model({1, 3, 4, 2, 8, 0}, s);
  TrainConfig tc;
  CHECK_THROWS_AS(train_classifier(reg, train, test, tc, RngStream(1, "s")), std::invalid_argument);
  Model cls = build_model({1, 3, 4, 2, 8, 4}, s);
  tc.batch_size = 0;
  CHECK_THROWS_AS(train_classifier(cls, train, test, tc, RngStream(1, "s")), std::invalid_argument);
}
