#include <doctest.h>

#include <cmath>
#include <vector>

#include "gradcheck.hpp"
#include "softmoe/experts.hpp"
#include "softmoe/rng.hpp"

using namespace softmoe;

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

MlpExpert random_expert(std::size_t d, std::size_t h, RngStream& s) {
  MlpExpert e(d, h);
  for (auto block : e.spans())
    for (double& v : block) v = s.normal();
  return e;
}

}  // namespace

TEST_CASE("expert forward matches the closed form") {
  MlpExpert e(2, 2);
  e.w1 = Matrix{{1, -1}, {2, 0.5}};
  e.b1 = {0.0, -3.0};
  e.w2 = Matrix{{1, 0}, {0, 2}};
  e.b2 = {0.5, 0.0};
  // h = relu([1*1 + 2*1, -1 + 0.5 - 3]) = [3, 0]
  const auto y = expert_forward(e, std::vector<double>{1.0, 1.0});
  CHECK(y[0] == 3.5);
  CHECK(y[1] == 0.0);
}

TEST_CASE("expert backward agrees with finite differences on 50 random instances") {
  RngStream s(11, "expert-fd");
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 1 + s.uniform_index(6);
    const std::size_t h = 1 + s.uniform_index(9);
    MlpExpert e = random_expert(d, h, s);
    std::vector<double> z(d), g(d);
    for (auto& v : z) v = s.normal();
    for (auto& v : g) v = s.normal();

    std::vector<double> out(d), pre(h), dz(d, 0.0);
    expert_forward(e, z, out, pre);
    MlpExpert grads = e.zeros_like();
    expert_backward(e, z, pre, g, grads, dz);

    const auto loss = [&] { return dot(g, expert_forward(e, z)); };
    auto pe = e.spans();
    const auto ga = std::as_const(grads).spans();
    for (std::size_t b = 0; b < pe.size(); ++b)
      worst = std::max(worst, gradcheck::rel_error(ga[b], gradcheck::numeric(pe[b], loss, 1e-6)));
    worst = std::max(worst, gradcheck::rel_error(dz, gradcheck::numeric(z, loss, 1e-6)));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("relu derivative at exactly zero is zero") {
  MlpExpert e(1, 1);
  e.w1 = Matrix{{1.0}};
  e.b1 = {-2.0};
  e.w2 = Matrix{{1.0}};
  std::vector<double> z{2.0}, out(1), pre(1), dz{0.0};
  expert_forward(e, z, out, pre);
  REQUIRE(pre[0] == 0.0);
  MlpExpert grads = e.zeros_like();
  expert_backward(e, z, pre, std::vector<double>{1.0}, grads, dz);
  CHECK(dz[0] == 0.0);
  CHECK(grads.w1(0, 0) == 0.0);
}

TEST_CASE("hidden width splits the budget and never drops below one") {
  CHECK(hidden_width_for(1, 100) == 100);
  CHECK(hidden_width_for(4, 100) == 25);
  CHECK(hidden_width_for(3, 100) == 33);
  CHECK(hidden_width_for(8, 4) == 1);
}

TEST_CASE("bank weight count is 2 d H when n divides H") {
  RngStream s(1, "bank");
  const ExpertBank bank = build_bank(5, 5, 50, s);
  CHECK(bank.size() == 5);
  CHECK(bank.hidden_width() == 10);
  CHECK(weight_parameter_count(bank) == 2 * 5 * 50);
  CHECK(parameter_count(bank) == 2 * 5 * 50 + 5 * (10 + 5));
}

TEST_CASE("he init scale and zero biases") {
  RngStream s(2, "he");
  const ExpertBank bank = build_bank(64, 2, 512, s);
  double sq = 0.0;
  for (double v : bank.experts[0].w1.flat()) sq += v * v;
  const double sd = std::sqrt(sq / static_cast<double>(bank.experts[0].w1.size()));
  CHECK(sd == doctest::Approx(std::sqrt(2.0 / 64.0)).epsilon(0.03));
  for (double v : bank.experts[1].b1) CHECK(v == 0.0);
}

TEST_CASE("expert shapes are checked") {
  MlpExpert e(3, 2);
  CHECK_THROWS_AS(expert_forward(e, std::vector<double>{1.0, 2.0}), ShapeError);
}
