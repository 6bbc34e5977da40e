#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace gamf::nn {

// Dense row-major matrix of 64-bit floats. Row vectors are 1 x n.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols) : rows_(rows), cols_(cols), data_(size_t(rows) * cols, 0.0) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Tensor: negative dimension");
  }
  Tensor(int rows, int cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != size_t(rows) * cols)
      throw std::invalid_argument("Tensor: data length does not match shape");
  }

  static Tensor zeros(int rows, int cols) { return Tensor(rows, cols); }
  static Tensor row(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Tensor(1, n, std::move(v));
  }
  static Tensor col(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Tensor(n, 1, std::move(v));
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& at(int r, int c) { return data_[size_t(r) * cols_ + c]; }
  double at(int r, int c) const { return data_[size_t(r) * cols_ + c]; }
  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  bool all_finite() const;
  std::string shape_str() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// C += A * B, plain blocked i-k-j loop.
void matmul_acc(const Tensor& a, const Tensor& b, Tensor& c);

}  // namespace gamf::nn
