#include <doctest.h>

#include <cmath>
#include <fstream>

#include "tetra/adapter.hpp"
#include "tetra/error.hpp"
#include "test_helpers.hpp"

using namespace tetra;
using tetra::testing::TempDir;

TEST_CASE("init_adapter is deterministic and shaped correctly") {
  const Adapter a = init_adapter(8, 77);
  const Adapter b = init_adapter(8, 77);
  CHECK(a == b);
  const Adapter c = init_adapter(8, 78);
  CHECK_FALSE(a == c);
  for (std::size_t l = 0; l < 4; ++l) {
    CHECK(a.layers[l].weight.rows() == 8);
    CHECK(a.layers[l].weight.cols() == 8);
    CHECK(a.layers[l].bias.cols() == 8);
    for (std::size_t j = 0; j < 8; ++j) {
      CHECK(a.layers[l].bias(0, j) == 0.0);
      CHECK(a.bn[l].gamma[j] == 1.0);
      CHECK(a.bn[l].beta[j] == 0.0);
      CHECK(a.bn[l].running_mean[j] == 0.0);
      CHECK(a.bn[l].running_var[j] == 1.0);
    }
  }
}

TEST_CASE("init_adapter weight variance matches the rectifier-aware target") {
  const Adapter a = init_adapter(512, 1234);
  double sum = 0.0, sum2 = 0.0;
  std::size_t n = 0;
  for (std::size_t l = 0; l < 4; ++l) {
    const Matrix& w = a.layers[l].weight;
    for (std::size_t i = 0; i < w.size(); ++i) {
      sum += w.data()[i];
      sum2 += w.data()[i] * w.data()[i];
      ++n;
    }
  }
  const double mean = sum / static_cast<double>(n);
  const double var = sum2 / static_cast<double>(n) - mean * mean;
  const double target = 2.0 / ((1.0 + 0.01 * 0.01) * 512.0);
  CHECK(n >= 100000);
  CHECK(std::abs(var - target) < 0.2 * target);
  CHECK(std::abs(mean) < 0.001);
}

TEST_CASE("eval forward keeps shape and is pure") {
  Adapter a = init_adapter(8, 5);
  Rng rng(1);
  Matrix x(3, 8);
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.gaussian();
  const Adapter before = a;
  const Matrix y1 = adapter_forward_eval(a, x);
  const Matrix y2 = adapter_forward_eval(a, x);
  CHECK(y1.rows() == 3);
  CHECK(y1.cols() == 8);
  CHECK(y1 == y2);
  CHECK(a == before);  // eval mutates nothing

  Matrix bad(2, 9);
  CHECK_THROWS_WITH_AS(adapter_forward_eval(a, bad), doctest::Contains("DimensionMismatch"),
                       Error);
}

TEST_CASE("train forward updates running stats and matches finite differences") {
  Adapter a = init_adapter(6, 9);
  Rng rng(2);
  Matrix x(4, 6);
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.gaussian();
  const Adapter before = a;
  {
    Tape tape;
    const AdapterVars vars = register_adapter_params(tape, a);
    const Var h = adapter_forward_train(tape, a, vars, tape.constant(x));
    CHECK(tape.value(h).rows() == 4);
    CHECK(tape.value(h).cols() == 6);
  }
  CHECK_FALSE(a == before);  // running stats moved

  // gradient of a squared-error objective w.r.t. the live parameters (the
  // batch mean of the raw BN output is pinned to beta, so a plain mean would
  // be a degenerate objective)
  const Adapter base = init_adapter(6, 10);
  Matrix target(4, 6);
  for (std::size_t i = 0; i < target.size(); ++i) target.data()[i] = rng.gaussian();
  const std::vector<double> theta0 = tetra::testing::flatten_live(base);
  const auto f = [&](std::span<const double> theta, std::vector<double>* grad) {
    Adapter local = base;  // running-stat updates stay local to this call
    tetra::testing::unflatten_live(local, theta);
    Tape tape;
    const AdapterVars vars = register_adapter_params(tape, local);
    const Var h = adapter_forward_train(tape, local, vars, tape.constant(x));
    const Var s = tape.sum_all(tape.row_sq_dist(h, tape.constant(target)));
    const double value = tape.value(s)(0, 0);
    if (grad) {
      tape.backward(s);
      *grad = tetra::testing::gather_live_grads(tape, vars);
    }
    return value;
  };
  CHECK(grad_check(f, theta0, 1e-5) < 1e-4);
}

TEST_CASE("train forward rejects single-row batches") {
  Adapter a = init_adapter(4, 3);
  Tape tape;
  const AdapterVars vars = register_adapter_params(tape, a);
  CHECK_THROWS_WITH_AS(adapter_forward_train(tape, a, vars, tape.constant(Matrix(1, 4, 0.5))),
                       doctest::Contains("BatchTooSmall"), Error);
}

TEST_CASE("transform yields unit norm, deterministically") {
  const Adapter a = init_adapter(12, 21);
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    Embedding e(12);
    for (double& v : e) v = rng.gaussian();
    const Embedding t1 = transform(a, e);
    const Embedding t2 = transform(a, e);
    CHECK(t1 == t2);
    CHECK(std::abs(norm(t1) - 1.0) < 1e-9);
  }
  CHECK_THROWS_AS(transform(a, Embedding(5, 1.0)), Error);
}

TEST_CASE("batch eval rows agree with per-row transform") {
  const Adapter a = init_adapter(10, 33);
  Rng rng(4);
  Matrix x(5, 10);
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.gaussian();
  const Matrix batch = adapter_forward_eval(a, x);
  for (std::size_t i = 0; i < 5; ++i) {
    Embedding e(x.row(i).begin(), x.row(i).end());
    const Embedding single = transform(a, e);
    Embedding row(batch.row(i).begin(), batch.row(i).end());
    row = normalize(row);
    for (std::size_t j = 0; j < 10; ++j) CHECK(std::abs(single[j] - row[j]) < 1e-12);
  }
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  TempDir tmp("ckpt");
  Adapter a = init_adapter(7, 99);
  // make the running stats non-trivial first
  Rng rng(5);
  Matrix x(6, 7);
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.gaussian();
  Tape tape;
  const AdapterVars vars = register_adapter_params(tape, a);
  adapter_forward_train(tape, a, vars, tape.constant(x));

  const std::string path = tmp.path("a.tetr");
  save_checkpoint(a, path);
  const Adapter b = load_checkpoint(path);
  CHECK(a == b);
}

TEST_CASE("checkpoint loader rejects truncated and foreign files") {
  TempDir tmp("ckpt_bad");
  const Adapter a = init_adapter(5, 1);
  const std::string path = tmp.path("a.tetr");
  save_checkpoint(a, path);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  }
  {
    std::ofstream out(tmp.path("cut.tetr"), std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 9));
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(tmp.path("cut.tetr")), doctest::Contains("FormatError"),
                       Error);
  {
    std::ofstream out(tmp.path("junk.tetr"), std::ios::binary);
    out << "not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(tmp.path("junk.tetr")), Error);
}

TEST_CASE("checkpoint from one dim rejects data of another dim at use") {
  TempDir tmp("ckpt_dim");
  const Adapter a = init_adapter(8, 2);
  save_checkpoint(a, tmp.path("a8.tetr"));
  const Adapter loaded = load_checkpoint(tmp.path("a8.tetr"));
  CHECK_THROWS_WITH_AS(adapter_forward_eval(loaded, Matrix(2, 16, 0.1)),
                       doctest::Contains("DimensionMismatch"), Error);
}
