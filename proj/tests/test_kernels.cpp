#include <doctest.h>

#include <omp.h>

#include <atomic>
#include <stdexcept>
#include <vector>

#include "softmoe/kernels.hpp"
#include "softmoe/rng.hpp"

using namespace softmoe;

TEST_CASE("parallel matmul is bitwise identical to the serial reference") {
  omp_set_num_threads(4);  // exercise real concurrency even on one core
  RngStream s(1, "mm");
  const std::size_t shapes[][3] = {{1, 1, 1}, {7, 3, 5}, {64, 129, 33}};
  for (const auto& [r, k, c] : shapes) {
    const Matrix a = sample_gaussian(s, r, k, 0.0, 1.0);
    const Matrix b = sample_gaussian(s, k, c, 0.0, 1.0);
    const Matrix ref = matmul(a, b);
    CHECK(kernels::matmul(a, b, Exec::Serial) == ref);
    CHECK(kernels::matmul(a, b, Exec::Parallel) == ref);
  }
  CHECK_THROWS_AS(kernels::matmul(Matrix(2, 3), Matrix(2, 3), Exec::Parallel), ShapeError);
}

TEST_CASE("parallel_for visits every index once") {
  omp_set_num_threads(3);
  for (Exec e : {Exec::Serial, Exec::Parallel}) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), e, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) REQUIRE(h == 1);
  }
  std::atomic<int> calls{0};
  parallel_for(0, Exec::Parallel, [&](std::size_t) { ++calls; });
  CHECK(calls == 0);
}

TEST_CASE("exceptions escape the parallel loop") {
  omp_set_num_threads(2);
  CHECK_THROWS_AS(parallel_for(50, Exec::Parallel,
                               [](std::size_t i) {
                                 if (i == 17) throw std::out_of_range("boom");
                               }),
                  std::out_of_range);
}

TEST_CASE("exec names") {
  CHECK(to_string(Exec::Serial) == "serial");
  CHECK(to_string(Exec::Parallel) == "parallel");
  CHECK(parallel_threads() >= 1);
}
