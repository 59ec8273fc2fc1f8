#include "tetra/matrix.hpp"

#include <cmath>
#include <thread>

#include "tetra/error.hpp"

namespace tetra {

namespace {

// Work below this many flops is not worth a thread handoff.
constexpr std::size_t kParallelFlopThreshold = 4u << 20;

}  // namespace

void parallel_rows(std::size_t n, std::size_t flops_per_row,
                   const std::function<void(std::size_t)>& fn) {
  const unsigned hw = std::thread::hardware_concurrency();
  std::size_t n_threads = hw ? hw : 1;
  if (n < 2 * n_threads || n * flops_per_row < kParallelFlopThreshold) n_threads = 1;
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) {
    const std::size_t begin = n * t / n_threads;
    const std::size_t end = n * (t + 1) / n_threads;
    pool.emplace_back([&fn, begin, end] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

Matrix matmul_nt(const Matrix& x, const Matrix& w) {
  require(x.cols() == w.cols(), ErrorCode::DimensionMismatch,
          "matmul_nt: inner dimensions differ");
  Matrix y(x.rows(), w.rows());
  const std::size_t k = x.cols();
  parallel_rows(x.rows(), 2 * k * w.rows(), [&](std::size_t i) {
    const double* xi = x.data() + i * k;
    double* yi = y.data() + i * w.rows();
    for (std::size_t j = 0; j < w.rows(); ++j) {
      const double* wj = w.data() + j * k;
      double acc = 0.0;
      for (std::size_t c = 0; c < k; ++c) acc += xi[c] * wj[c];
      yi[j] = acc;
    }
  });
  return y;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), ErrorCode::DimensionMismatch,
          "matmul_tn: row counts differ");
  Matrix c(a.cols(), b.cols());
  const std::size_t m = a.rows();
  parallel_rows(a.cols(), 2 * m * b.cols(), [&](std::size_t r) {
    double* cr = c.data() + r * b.cols();
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a(i, r);
      if (av == 0.0) continue;
      const double* bi = b.data() + i * b.cols();
      for (std::size_t j = 0; j < b.cols(); ++j) cr[j] += av * bi[j];
    }
  });
  return c;
}

Matrix matmul_nn(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), ErrorCode::DimensionMismatch,
          "matmul_nn: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  const std::size_t m = a.cols();
  parallel_rows(a.rows(), 2 * m * b.cols(), [&](std::size_t i) {
    double* ci = c.data() + i * b.cols();
    for (std::size_t k = 0; k < m; ++k) {
      const double av = a(i, k);
      if (av == 0.0) continue;
      const double* bk = b.data() + k * b.cols();
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += av * bk[j];
    }
  });
  return c;
}

Matrix vstack(const std::vector<const Matrix*>& parts) {
  std::size_t rows = 0, cols = 0;
  for (const Matrix* p : parts) {
    if (p->empty()) continue;
    if (cols == 0) cols = p->cols();
    require(p->cols() == cols, ErrorCode::DimensionMismatch, "vstack: column counts differ");
    rows += p->rows();
  }
  Matrix out(rows, cols);
  std::size_t at = 0;
  for (const Matrix* p : parts) {
    for (std::size_t i = 0; i < p->rows(); ++i, ++at) {
      auto dst = out.row(at);
      auto src = p->row(i);
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  return out;
}

Matrix slice_rows_copy(const Matrix& m, std::size_t begin, std::size_t count) {
  require(begin + count <= m.rows(), ErrorCode::DimensionMismatch, "slice_rows: out of range");
  Matrix out(count, m.cols());
  std::copy(m.data() + begin * m.cols(), m.data() + (begin + count) * m.cols(), out.data());
  return out;
}

bool all_finite(const Matrix& m) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m.data()[i])) return false;
  }
  return true;
}

void check_finite(const Matrix& m, const std::string& what) {
  require(all_finite(m), ErrorCode::NonFiniteGradient, what + " contains non-finite values");
}

}  // namespace tetra
