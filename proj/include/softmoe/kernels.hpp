#pragma once

// Data-parallel loops come in two flavours: a serial reference and an OpenMP
// version. Both visit the same index space and write disjoint outputs, so for
// every kernel here the two produce bitwise-identical results. Tests pin that;
// bench/kernel_bench.cpp times them against each other.

#include <cstddef>
#include <exception>
#include <string_view>

#include "softmoe/tensor.hpp"

namespace softmoe {

enum class Exec { Serial, Parallel };

std::string_view to_string(Exec e);

/// Threads OpenMP would use for Exec::Parallel.
int parallel_threads();

/// Calls body(i) for i in [0, count). Under Exec::Parallel iterations may run
/// concurrently in any order, so body must only write state owned by i. The
/// first exception thrown by any iteration is rethrown after the loop.
template <class Body>
void parallel_for(std::size_t count, Exec exec, Body&& body) {
  if (exec == Exec::Serial) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  const auto n = static_cast<long long>(count);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1)
  for (long long i = 0; i < n; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(softmoe_parallel_for_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

namespace kernels {

/// Row-blocked a * b. Same summation order as softmoe::matmul.
Matrix matmul(const Matrix& a, const Matrix& b, Exec exec);

}  // namespace kernels
}  // namespace softmoe
