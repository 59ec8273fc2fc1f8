#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace tetra {

// Dense row-major 64-bit matrix. Deliberately minimal: just what the tape,
// the adapter, and the evaluation pipeline need.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

// Y = X * W^T, X: [b x k], W: [o x k] -> [b x o]. Row-parallel; every output
// cell is accumulated sequentially, so results do not depend on thread count.
Matrix matmul_nt(const Matrix& x, const Matrix& w);

// C = A^T * B, A: [m x r], B: [m x c] -> [r x c]
Matrix matmul_tn(const Matrix& a, const Matrix& b);

// C = A * B, A: [r x m], B: [m x c] -> [r x c]
Matrix matmul_nn(const Matrix& a, const Matrix& b);

Matrix vstack(const std::vector<const Matrix*>& parts);
Matrix slice_rows_copy(const Matrix& m, std::size_t begin, std::size_t count);

bool all_finite(const Matrix& m);
void check_finite(const Matrix& m, const std::string& what);

// Runs fn(i) over [0, n) on up to hardware_concurrency threads when the flop
// estimate justifies it; fn must write disjoint state per index.
void parallel_rows(std::size_t n, std::size_t flops_per_row, const std::function<void(std::size_t)>& fn);

}  // namespace tetra
