#include <doctest.h>

#include <cmath>
#include <limits>

#include "tetra/autodiff.hpp"
#include "tetra/error.hpp"
#include "tetra/rng.hpp"

using namespace tetra;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian(0.0, scale);
  return m;
}

}  // namespace

TEST_CASE("linear forward matches the identity and constant cases") {
  Tape tape;
  Matrix x(2, 3);
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = static_cast<double>(i) + 1.0;
  const Var xv = tape.constant(x);

  const Var w_id = tape.param(Matrix::identity(3));
  const Var b0 = tape.param(Matrix(1, 3));
  const Var y = tape.linear(xv, w_id, b0);
  CHECK(tape.value(y) == x);

  const Var w0 = tape.param(Matrix(3, 3));
  Matrix ones(1, 3, 1.0);
  const Var b1 = tape.param(ones);
  const Var y2 = tape.linear(xv, w0, b1);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(tape.value(y2)(i, j) == 1.0);
  }
}

TEST_CASE("gradient of sum(linear) w.r.t. W equals column sums of X") {
  Rng rng(42);
  const Matrix x = random_matrix(rng, 2, 4);
  Tape tape;
  const Var xv = tape.constant(x);
  const Var w = tape.param(random_matrix(rng, 3, 4));
  const Var b = tape.param(Matrix(1, 3));
  const Var s = tape.sum_all(tape.linear(xv, w, b));
  tape.backward(s);
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t k = 0; k < 4; ++k) {
      double col_sum = 0.0;
      for (std::size_t i = 0; i < 2; ++i) col_sum += x(i, k);
      CHECK(tape.grad(w)(j, k) == doctest::Approx(col_sum).epsilon(1e-12));
    }
  }
  for (std::size_t j = 0; j < 3; ++j) CHECK(tape.grad(b)(0, j) == 2.0);
}

TEST_CASE("linear layer gradient vs finite differences is tight") {
  Rng rng(19);
  const Matrix x = random_matrix(rng, 2, 4);
  const Matrix w0 = random_matrix(rng, 3, 4);
  std::vector<double> params(w0.data(), w0.data() + w0.size());
  const auto f = [&](std::span<const double> theta, std::vector<double>* grad) {
    Matrix w(3, 4);
    std::copy(theta.begin(), theta.end(), w.data());
    Tape tape;
    const Var wv = tape.param(w);
    const Var s = tape.sum_all(tape.linear(tape.constant(x), wv, tape.param(Matrix(1, 3))));
    const double value = tape.value(s)(0, 0);
    if (grad) {
      tape.backward(s);
      grad->assign(tape.grad(wv).data(), tape.grad(wv).data() + w.size());
    }
    return value;
  };
  CHECK(grad_check(f, params, 1e-5) < 1e-7);
}

TEST_CASE("batch_norm train normalizes with biased variance") {
  Tape tape;
  Matrix x(2, 1);
  x(0, 0) = -1.0;
  x(1, 0) = 1.0;
  const Var xv = tape.constant(x);
  const Var gamma = tape.param(Matrix(1, 1, 1.0));
  const Var beta = tape.param(Matrix(1, 1, 0.0));
  std::vector<double> mean, var;
  const Var y = tape.batch_norm_train(xv, gamma, beta, 1e-5, &mean, &var);
  const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
  CHECK(tape.value(y)(0, 0) == doctest::Approx(-expect).epsilon(1e-12));
  CHECK(tape.value(y)(1, 0) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(mean[0] == 0.0);
  CHECK(var[0] == 1.0);
}

TEST_CASE("batch_norm train: constant column collapses to beta") {
  Tape tape;
  Matrix x(3, 2);
  for (std::size_t i = 0; i < 3; ++i) {
    x(i, 0) = 7.5;
    x(i, 1) = static_cast<double>(i);
  }
  const Var xv = tape.constant(x);
  const Var gamma = tape.param(Matrix(1, 2, 1.0));
  Matrix beta_m(1, 2);
  beta_m(0, 0) = 0.5;
  const Var beta = tape.param(beta_m);
  const Var y = tape.batch_norm_train(xv, gamma, beta, 1e-5);
  for (std::size_t i = 0; i < 3; ++i) CHECK(tape.value(y)(i, 0) == doctest::Approx(0.5));
}

TEST_CASE("batch_norm train output statistics") {
  Rng rng(4);
  const Matrix x = random_matrix(rng, 64, 5, 2.0);
  Tape tape;
  const Var y = tape.batch_norm_train(tape.constant(x), tape.param(Matrix(1, 5, 1.0)),
                                      tape.param(Matrix(1, 5, 0.0)), 1e-5);
  const Matrix& yv = tape.value(y);
  for (std::size_t j = 0; j < 5; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 64; ++i) mean += yv(i, j);
    mean /= 64.0;
    CHECK(std::abs(mean) < 1e-9);
    double var = 0.0, xvar = 0.0, xmean = 0.0;
    for (std::size_t i = 0; i < 64; ++i) xmean += x(i, j);
    xmean /= 64.0;
    for (std::size_t i = 0; i < 64; ++i) {
      var += yv(i, j) * yv(i, j);
      xvar += (x(i, j) - xmean) * (x(i, j) - xmean);
    }
    var /= 64.0;
    xvar /= 64.0;
    CHECK(var == doctest::Approx(xvar / (xvar + 1e-5)).epsilon(1e-6));
  }
}

TEST_CASE("batch_norm rejects batches smaller than 2 in train mode") {
  Tape tape;
  const Var x = tape.constant(Matrix(1, 3, 1.0));
  CHECK_THROWS_WITH_AS(
      tape.batch_norm_train(x, tape.param(Matrix(1, 3, 1.0)), tape.param(Matrix(1, 3)), 1e-5),
      doctest::Contains("BatchTooSmall"), Error);
}

TEST_CASE("batch_norm gradients vs finite differences") {
  Rng rng(77);
  const Matrix x0 = random_matrix(rng, 6, 3);
  // pack x, gamma, beta into one parameter vector
  std::vector<double> params(x0.data(), x0.data() + x0.size());
  Rng grng(78);
  for (int i = 0; i < 6; ++i) params.push_back(grng.gaussian(1.0, 0.2));
  const auto f = [&](std::span<const double> theta, std::vector<double>* grad) {
    Matrix x(6, 3), gamma(1, 3), beta(1, 3);
    std::copy(theta.begin(), theta.begin() + 18, x.data());
    std::copy(theta.begin() + 18, theta.begin() + 21, gamma.data());
    std::copy(theta.begin() + 21, theta.end(), beta.data());
    Tape tape;
    const Var xv = tape.param(x);
    const Var gv = tape.param(gamma);
    const Var bv = tape.param(beta);
    // square the output so gradients depend on the normalized values
    const Var y = tape.batch_norm_train(xv, gv, bv, 1e-5);
    const Var s = tape.sum_all(tape.row_sq_dist(y, tape.constant(Matrix(6, 3, 0.25))));
    const double value = tape.value(s)(0, 0);
    if (grad) {
      tape.backward(s);
      grad->assign(tape.grad(xv).data(), tape.grad(xv).data() + 18);
      grad->insert(grad->end(), tape.grad(gv).data(), tape.grad(gv).data() + 3);
      grad->insert(grad->end(), tape.grad(bv).data(), tape.grad(bv).data() + 3);
    }
    return value;
  };
  CHECK(grad_check(f, params, 1e-5) < 1e-4);
}

TEST_CASE("batch_norm eval mode gradients and purity") {
  Rng rng(5);
  const Matrix x = random_matrix(rng, 3, 2);
  const std::vector<double> mean{0.3, -0.2};
  const std::vector<double> var{1.5, 0.7};
  Tape tape;
  const Var xv = tape.param(x);
  const Var y1 = tape.batch_norm_eval(xv, tape.param(Matrix(1, 2, 1.2)),
                                      tape.param(Matrix(1, 2, 0.1)), mean, var, 1e-5);
  const Var y2 = tape.batch_norm_eval(xv, tape.param(Matrix(1, 2, 1.2)),
                                      tape.param(Matrix(1, 2, 0.1)), mean, var, 1e-5);
  CHECK(tape.value(y1) == tape.value(y2));  // pure given fixed stats

  std::vector<double> params(x.data(), x.data() + x.size());
  const auto f = [&](std::span<const double> theta, std::vector<double>* grad) {
    Matrix xm(3, 2);
    std::copy(theta.begin(), theta.end(), xm.data());
    Tape t;
    const Var xv2 = t.param(xm);
    const Var y = t.batch_norm_eval(xv2, t.param(Matrix(1, 2, 1.2)), t.param(Matrix(1, 2, 0.1)),
                                    mean, var, 1e-5);
    const Var s = t.sum_all(t.row_sq_dist(y, t.constant(Matrix(3, 2, 0.1))));
    const double value = t.value(s)(0, 0);
    if (grad) {
      t.backward(s);
      grad->assign(t.grad(xv2).data(), t.grad(xv2).data() + 6);
    }
    return value;
  };
  CHECK(grad_check(f, params, 1e-5) < 1e-7);
}

TEST_CASE("leaky_relu values and subgradient convention") {
  Tape tape;
  Matrix x(1, 3);
  x(0, 0) = 2.0;
  x(0, 1) = -1.0;
  x(0, 2) = 0.0;
  const Var xv = tape.param(x);
  const Var y = tape.leaky_relu(xv, 0.01);
  CHECK(tape.value(y)(0, 0) == 2.0);
  CHECK(tape.value(y)(0, 1) == -0.01);
  CHECK(tape.value(y)(0, 2) == 0.0);
  const Var s = tape.sum_all(y);
  tape.backward(s);
  CHECK(tape.grad(xv)(0, 0) == 1.0);
  CHECK(tape.grad(xv)(0, 1) == 0.01);
  CHECK(tape.grad(xv)(0, 2) == 1.0);  // declared convention at the kink
}

TEST_CASE("leaky_relu negative branch is exactly slope*x") {
  Rng rng(3);
  Tape tape;
  const Matrix x = random_matrix(rng, 4, 4, 2.0);
  const Var y = tape.leaky_relu(tape.constant(x), 0.01);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x.data()[i];
    if (xi < 0.0) CHECK(tape.value(y).data()[i] == 0.01 * xi);
    if (xi >= 0.0) CHECK(tape.value(y).data()[i] == xi);
    if (xi < 0.0) CHECK(tape.value(y).data()[i] <= 0.0);
  }
}

TEST_CASE("row_normalize produces unit rows and correct gradients") {
  Rng rng(8);
  const Matrix x0 = random_matrix(rng, 3, 4);
  {
    Tape tape;
    const Var y = tape.row_normalize(tape.constant(x0));
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0.0;
      for (double v : tape.value(y).row(i)) s += v * v;
      CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  std::vector<double> params(x0.data(), x0.data() + x0.size());
  Matrix target = random_matrix(rng, 3, 4);
  const auto f = [&](std::span<const double> theta, std::vector<double>* grad) {
    Matrix x(3, 4);
    std::copy(theta.begin(), theta.end(), x.data());
    Tape tape;
    const Var xv = tape.param(x);
    const Var s = tape.sum_all(tape.row_sq_dist(tape.row_normalize(xv), tape.constant(target)));
    const double value = tape.value(s)(0, 0);
    if (grad) {
      tape.backward(s);
      grad->assign(tape.grad(xv).data(), tape.grad(xv).data() + 12);
    }
    return value;
  };
  CHECK(grad_check(f, params, 1e-5) < 1e-6);
}

TEST_CASE("min_elem routes ties to the first input") {
  Tape tape;
  Matrix a(2, 1), b(2, 1);
  a(0, 0) = 1.0;
  b(0, 0) = 1.0;  // tie
  a(1, 0) = 3.0;
  b(1, 0) = 2.0;
  const Var av = tape.param(a);
  const Var bv = tape.param(b);
  const Var s = tape.sum_all(tape.min_elem(av, bv));
  tape.backward(s);
  CHECK(tape.grad(av)(0, 0) == 1.0);  // tie goes to a
  CHECK(tape.grad(bv)(0, 0) == 0.0);
  CHECK(tape.grad(av)(1, 0) == 0.0);
  CHECK(tape.grad(bv)(1, 0) == 1.0);
}

TEST_CASE("grad_check on a quadratic is exact to roundoff") {
  const auto f = [](std::span<const double> theta, std::vector<double>* grad) {
    Tape tape;
    Matrix x(1, 1);
    x(0, 0) = theta[0];
    const Var xv = tape.param(x);
    const Var s = tape.sum_all(tape.row_sq_dist(xv, tape.constant(Matrix(1, 1, 0.0))));
    const double value = tape.value(s)(0, 0);
    if (grad) {
      tape.backward(s);
      grad->assign(1, tape.grad(xv)(0, 0));
    }
    return value;
  };
  std::vector<double> theta{3.0};
  CHECK(grad_check(f, theta, 1e-5) < 1e-9);
}

TEST_CASE("backward is deterministic") {
  Rng rng(123);
  const Matrix x = random_matrix(rng, 5, 4);
  const Matrix w = random_matrix(rng, 4, 4);
  std::vector<double> g1, g2;
  for (int pass = 0; pass < 2; ++pass) {
    Tape tape;
    const Var wv = tape.param(w);
    const Var y = tape.leaky_relu(tape.linear(tape.constant(x), wv, tape.param(Matrix(1, 4))),
                                  0.01);
    const Var s = tape.mean_all(tape.hinge(tape.add_scalar(tape.row_normalize(y), -0.1)));
    tape.backward(s);
    auto& dst = pass == 0 ? g1 : g2;
    dst.assign(tape.grad(wv).data(), tape.grad(wv).data() + w.size());
  }
  CHECK(g1 == g2);  // bit-identical
}

TEST_CASE("grad_check flags non-finite gradients") {
  const auto f = [](std::span<const double> theta, std::vector<double>* grad) {
    if (grad) grad->assign(1, std::numeric_limits<double>::quiet_NaN());
    return theta[0];
  };
  std::vector<double> theta{1.0};
  CHECK_THROWS_WITH_AS(grad_check(f, theta, 1e-5), doctest::Contains("NonFiniteGradient"),
                       Error);
}
