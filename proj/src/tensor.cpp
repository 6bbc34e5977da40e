#include "gamf/tensor.hpp"

#include <cmath>

namespace gamf::nn {

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void matmul_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const int n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k || c.rows() != n || c.cols() != m)
    throw std::invalid_argument("matmul_acc: shape mismatch " + a.shape_str() + " * " +
                                b.shape_str() + " -> " + c.shape_str());
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (int i = 0; i < n; ++i) {
    const double* ai = pa + size_t(i) * k;
    double* ci = pc + size_t(i) * m;
    for (int kk = 0; kk < k; ++kk) {
      const double av = ai[kk];
      if (av == 0.0) continue;
      const double* bk = pb + size_t(kk) * m;
      for (int j = 0; j < m; ++j) ci[j] += av * bk[j];
    }
  }
}

}  // namespace gamf::nn
