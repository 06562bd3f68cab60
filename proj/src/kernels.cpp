#include "softmoe/kernels.hpp"

#include <omp.h>

namespace softmoe {

std::string_view to_string(Exec e) { return e == Exec::Serial ? "serial" : "parallel"; }

int parallel_threads() { return omp_get_max_threads(); }

namespace kernels {

Matrix matmul(const Matrix& a, const Matrix& b, Exec exec) {
  if (a.cols() != b.rows())
    throw ShapeError("kernels::matmul: incompatible shapes " + a.shape_str() + " and " +
                     b.shape_str());
  Matrix out(a.rows(), b.cols());
  const std::size_t inner = a.cols();
  const std::size_t nc = b.cols();
  parallel_for(a.rows(), exec, [&](std::size_t i) {
    double* o = out.data() + i * nc;
    for (std::size_t p = 0; p < inner; ++p) {
      const double av = a(i, p);
      const double* br = b.data() + p * nc;
      for (std::size_t j = 0; j < nc; ++j) o[j] += av * br[j];
    }
  });
  return out;
}

}  // namespace kernels
}  // namespace softmoe
