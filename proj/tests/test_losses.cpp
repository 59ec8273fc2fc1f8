#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "tetra/adapter.hpp"
#include "tetra/error.hpp"
#include "tetra/losses.hpp"
#include "test_helpers.hpp"

using namespace tetra;
using tetra::testing::random_unit;

namespace {

Matrix one_row(const Embedding& e) {
  Matrix m(1, e.size());
  std::copy(e.begin(), e.end(), m.data());
  return m;
}

QuadrupletBatch random_batch(Rng& rng, std::size_t n, std::size_t dim, bool second = false) {
  QuadrupletBatch b;
  const auto fill = [&](Matrix& m) {
    m = Matrix(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
      const Embedding e = random_unit(rng, dim);
      std::copy(e.begin(), e.end(), m.row(i).begin());
    }
  };
  fill(b.anchor);
  fill(b.positive);
  fill(b.negative);
  fill(b.morph);
  if (second) {
    b.anchor2.emplace();
    b.positive2.emplace();
    fill(*b.anchor2);
    fill(*b.positive2);
  }
  return b;
}

}  // namespace

TEST_CASE("triplet loss hand values") {
  const Embedding a{1.0, 0.0}, p{0.0, 1.0}, n{-1.0, 0.0};
  // squared form: 2 + 3 - 4 = 1
  CHECK(triplet_term(a, p, n, 3.0, DistanceForm::Squared) ==
        doctest::Approx(1.0).epsilon(1e-12));
  // euclidean form: sqrt(2) + 3 - 2
  CHECK(triplet_term(a, p, n, 3.0, DistanceForm::Euclidean) ==
        doctest::Approx(std::sqrt(2.0) + 1.0).epsilon(1e-12));
  // hinge inactive under the squared form: 0 + 3 - 4 < 0
  CHECK(triplet_term(a, a, n, 3.0, DistanceForm::Squared) == 0.0);
  // ... but active under euclidean (0 + 3 - 2 > 0)
  CHECK(triplet_term(a, a, n, 3.0, DistanceForm::Euclidean) ==
        doctest::Approx(1.0).epsilon(1e-12));
  // small margins make the euclidean hinge inactive too
  CHECK(triplet_term(a, a, n, 1.0, DistanceForm::Euclidean) == 0.0);
}

TEST_CASE("triplet batch loss is the mean of per-element terms") {
  Matrix anchor(2, 2), positive(2, 2), negative(2, 2);
  // element 0: squared loss 1; element 1: squared loss 0 (a == p, n antipodal)
  const double rows[2][6] = {{1, 0, 0, 1, -1, 0}, {0, 1, 0, 1, 0, -1}};
  for (int i = 0; i < 2; ++i) {
    anchor(i, 0) = rows[i][0];
    anchor(i, 1) = rows[i][1];
    positive(i, 0) = rows[i][2];
    positive(i, 1) = rows[i][3];
    negative(i, 0) = rows[i][4];
    negative(i, 1) = rows[i][5];
  }
  CHECK(triplet_loss(anchor, positive, negative, 3.0, DistanceForm::Squared) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // euclidean: (sqrt(2)+1 + 1) / 2
  CHECK(triplet_loss(anchor, positive, negative, 3.0, DistanceForm::Euclidean) ==
        doctest::Approx(0.5 * (std::sqrt(2.0) + 2.0)).epsilon(1e-12));
}

TEST_CASE("tetra loss hand value") {
  const double s2 = std::sqrt(2.0) / 2.0;
  const Embedding a{1.0, 0.0}, p{0.0, 1.0}, n{-1.0, 0.0}, m{s2, s2};
  // squared: d(a,p)=2, d(a,n)=4, d(a,m)=2-sqrt(2)=0.58579; 2+3-0.58579
  CHECK(tetra_term(a, p, n, m, 3.0, DistanceForm::Squared) ==
        doctest::Approx(4.414213562).epsilon(1e-9));
  // euclidean: sqrt(2) + 3 - sqrt(2-sqrt(2)) = 3.64885
  CHECK(tetra_term(a, p, n, m, 3.0, DistanceForm::Euclidean) ==
        doctest::Approx(std::sqrt(2.0) + 3.0 - std::sqrt(2.0 - std::sqrt(2.0))).epsilon(1e-12));
  // both far: hinge inactive under the squared form
  const Embedding ap{1.0, 0.0};
  const Embedding anti{-1.0, 0.0};
  CHECK(tetra_term(ap, ap, anti, anti, 3.0, DistanceForm::Squared) == 0.0);
}

TEST_CASE("tetra equals triplet when the morph is no closer than the negative") {
  Rng rng(31);
  for (const DistanceForm form : {DistanceForm::Squared, DistanceForm::Euclidean}) {
    for (int i = 0; i < 500; ++i) {
      const Embedding a = random_unit(rng, 6), p = random_unit(rng, 6);
      const Embedding n = random_unit(rng, 6), m = random_unit(rng, 6);
      if (sq_dist(a, m) >= sq_dist(a, n)) {
        CHECK(tetra_term(a, p, n, m, 3.0, form) == triplet_term(a, p, n, 3.0, form));
      }
    }
  }
}

TEST_CASE("per-element algebra: tetra = max of the two hinged triplets") {
  Rng rng(32);
  for (const DistanceForm form : {DistanceForm::Squared, DistanceForm::Euclidean}) {
    for (int i = 0; i < 10000; ++i) {
      const Embedding a = random_unit(rng, 5), p = random_unit(rng, 5);
      const Embedding n = random_unit(rng, 5), m = random_unit(rng, 5);
      const double t = tetra_term(a, p, n, m, 3.0, form);
      const double lhs =
          std::max(triplet_term(a, p, n, 3.0, form), triplet_term(a, p, m, 3.0, form));
      CHECK(std::abs(t - lhs) <= 1e-12);
      CHECK(t >= triplet_term(a, p, n, 3.0, form));  // monotonicity
      CHECK(t >= 0.0);
    }
  }
}

TEST_CASE("loss is zero exactly when the margin condition holds") {
  Rng rng(33);
  for (const DistanceForm form : {DistanceForm::Squared, DistanceForm::Euclidean}) {
    for (int i = 0; i < 2000; ++i) {
      const Embedding a = random_unit(rng, 4), p = random_unit(rng, 4);
      const Embedding n = random_unit(rng, 4), m = random_unit(rng, 4);
      const double margin = 1.0;
      const double t = tetra_term(a, p, n, m, margin, form);
      const auto d = [&](const Embedding& x, const Embedding& y) {
        return form == DistanceForm::Squared ? sq_dist(x, y) : std::sqrt(sq_dist(x, y));
      };
      const bool condition = d(a, p) + margin <= std::min(d(a, n), d(a, m));
      CHECK((t == 0.0) == condition);
    }
  }
}

TEST_CASE("scenario semantics") {
  Rng rng(34);
  QuadrupletBatch b = random_batch(rng, 3, 6, true);

  // Triplet substitutes the morph for the negative, bit-exact
  CHECK(scenario_loss({3.0, Scenario::Triplet}, b) ==
        triplet_loss(b.anchor, b.positive, b.morph, 3.0));
  CHECK(scenario_loss({3.0, Scenario::Tetra}, b) ==
        tetra_loss(b.anchor, b.positive, b.negative, b.morph, 3.0));

  // *2 variants average the first- and second-subject terms
  const double t1 = triplet_loss(b.anchor, b.positive, b.morph, 3.0);
  const double t2 = triplet_loss(*b.anchor2, *b.positive2, b.morph, 3.0);
  CHECK(scenario_loss({3.0, Scenario::Triplet2}, b) ==
        doctest::Approx(0.5 * (t1 + t2)).epsilon(1e-15));
  const double q1 = tetra_loss(b.anchor, b.positive, b.negative, b.morph, 3.0);
  const double q2 = tetra_loss(*b.anchor2, *b.positive2, b.negative, b.morph, 3.0);
  CHECK(scenario_loss({3.0, Scenario::Tetra2}, b) ==
        doctest::Approx(0.5 * (q1 + q2)).epsilon(1e-15));

  // symmetric batch: both subjects' terms equal => *2 loss equals the term
  QuadrupletBatch sym = b;
  sym.anchor2 = b.anchor;
  sym.positive2 = b.positive;
  CHECK(scenario_loss({3.0, Scenario::Tetra2}, sym) == doctest::Approx(q1).epsilon(1e-15));
}

TEST_CASE("scenario errors") {
  Rng rng(35);
  QuadrupletBatch b = random_batch(rng, 2, 4, false);
  CHECK_THROWS_WITH_AS(scenario_loss({3.0, Scenario::Tetra2}, b),
                       doctest::Contains("MissingSecondSubject"), Error);
  QuadrupletBatch empty;
  empty.anchor = Matrix(0, 4);
  empty.positive = Matrix(0, 4);
  empty.negative = Matrix(0, 4);
  empty.morph = Matrix(0, 4);
  CHECK_THROWS_WITH_AS(scenario_loss({3.0, Scenario::Tetra}, empty),
                       doctest::Contains("EmptyBatch"), Error);
}

TEST_CASE("concatenated batch loss is the size-weighted mean of sub-batches") {
  Rng rng(36);
  const QuadrupletBatch b1 = random_batch(rng, 3, 5);
  const QuadrupletBatch b2 = random_batch(rng, 5, 5);
  QuadrupletBatch cat;
  cat.anchor = vstack({&b1.anchor, &b2.anchor});
  cat.positive = vstack({&b1.positive, &b2.positive});
  cat.negative = vstack({&b1.negative, &b2.negative});
  cat.morph = vstack({&b1.morph, &b2.morph});
  const double l1 = scenario_loss({3.0, Scenario::Tetra}, b1);
  const double l2 = scenario_loss({3.0, Scenario::Tetra}, b2);
  const double lc = scenario_loss({3.0, Scenario::Tetra}, cat);
  CHECK(std::abs(lc - (3.0 * l1 + 5.0 * l2) / 8.0) <= 1e-12);
}

TEST_CASE("taped losses match the plain route and route gradients correctly") {
  Rng rng(37);
  for (const Scenario scenario :
       {Scenario::Triplet, Scenario::Tetra, Scenario::Triplet2, Scenario::Tetra2}) {
    const QuadrupletBatch b = random_batch(rng, 4, 6, needs_second_subject(scenario));
    Tape tape;
    QuadrupletBatchVars vars;
    vars.anchor = tape.param(b.anchor);
    vars.positive = tape.constant(b.positive);
    vars.negative = tape.param(b.negative);
    vars.morph = tape.param(b.morph);
    if (needs_second_subject(scenario)) {
      vars.anchor2 = tape.param(*b.anchor2);
      vars.positive2 = tape.constant(*b.positive2);
    }
    const Var loss = scenario_loss_op(tape, {3.0, scenario}, vars);
    CHECK(tape.value(loss)(0, 0) ==
          doctest::Approx(scenario_loss({3.0, scenario}, b)).epsilon(1e-12));
    tape.backward(loss);
    // the positive is a constant: it must receive no gradient anywhere else;
    // anchors always do unless the hinge is everywhere inactive (margin 3
    // makes that effectively impossible for random unit rows)
    double anchor_grad_mass = 0.0;
    for (std::size_t i = 0; i < tape.grad(vars.anchor).size(); ++i) {
      anchor_grad_mass += std::abs(tape.grad(vars.anchor).data()[i]);
    }
    CHECK(anchor_grad_mass > 0.0);
  }
}

using tetra::testing::flatten_live;
using tetra::testing::gather_live_grads;
using tetra::testing::unflatten_live;

TEST_CASE("gradient check through adapter + every scenario loss") {
  Rng rng(38);
  const std::size_t dim = 8, n = 4;
  Matrix anchor_src(n, dim), negative_src(n, dim), morph_src(n, dim), anchor2_src(n, dim);
  Matrix positive(n, dim), positive2(n, dim);
  for (Matrix* m : {&anchor_src, &negative_src, &morph_src, &anchor2_src}) {
    for (std::size_t i = 0; i < m->size(); ++i) m->data()[i] = rng.gaussian();
  }
  for (Matrix* m : {&positive, &positive2}) {
    for (std::size_t i = 0; i < n; ++i) {
      const Embedding e = random_unit(rng, dim);
      std::copy(e.begin(), e.end(), m->row(i).begin());
    }
  }
  const Adapter base = init_adapter(dim, 40);
  for (const Scenario scenario :
       {Scenario::Triplet, Scenario::Tetra, Scenario::Triplet2, Scenario::Tetra2}) {
    const bool second = needs_second_subject(scenario);
    const bool use_negative = scenario == Scenario::Tetra || scenario == Scenario::Tetra2;
    const auto f = [&](std::span<const double> theta, std::vector<double>* grad) {
      Adapter local = base;
      unflatten_live(local, theta);
      Tape tape;
      const AdapterVars avars = register_adapter_params(tape, local);
      std::vector<const Matrix*> parts{&anchor_src};
      if (use_negative) parts.push_back(&negative_src);
      parts.push_back(&morph_src);
      if (second) parts.push_back(&anchor2_src);
      const Var h = adapter_forward_train(tape, local, avars, tape.constant(vstack(parts)));
      std::size_t at = 0;
      QuadrupletBatchVars vars;
      vars.anchor = tape.row_normalize(tape.slice_rows(h, at, n));
      at += n;
      if (use_negative) {
        vars.negative = tape.row_normalize(tape.slice_rows(h, at, n));
        at += n;
      }
      vars.morph = tape.row_normalize(tape.slice_rows(h, at, n));
      at += n;
      if (second) {
        vars.anchor2 = tape.row_normalize(tape.slice_rows(h, at, n));
        vars.positive2 = tape.constant(positive2);
      }
      vars.positive = tape.constant(positive);
      const Var loss = scenario_loss_op(tape, {3.0, scenario}, vars);
      const double value = tape.value(loss)(0, 0);
      if (grad) {
        tape.backward(loss);
        *grad = gather_live_grads(tape, avars);
        // the dead biases: analytic gradient must be exactly zero (roundoff)
        for (std::size_t l = 0; l < 4; ++l) {
          for (std::size_t j = 0; j < dim; ++j) {
            CHECK(std::abs(tape.grad(avars.bias[l])(0, j)) < 1e-12);
          }
        }
      }
      return value;
    };
    const std::vector<double> theta = flatten_live(base);
    CHECK(grad_check(f, theta, 1e-5) < 1e-4);

    // bias-shift invariance: the loss value itself is unaffected by biases
    Adapter shifted = base;
    for (std::size_t l = 0; l < 4; ++l) {
      for (std::size_t j = 0; j < dim; ++j) shifted.layers[l].bias(0, j) += 0.37;
    }
    Adapter tmp = shifted;
    Tape tape;
    const AdapterVars avars = register_adapter_params(tape, tmp);
    std::vector<const Matrix*> parts{&anchor_src};
    if (use_negative) parts.push_back(&negative_src);
    parts.push_back(&morph_src);
    if (second) parts.push_back(&anchor2_src);
    const Var h = adapter_forward_train(tape, tmp, avars, tape.constant(vstack(parts)));
    QuadrupletBatchVars vars;
    std::size_t at = 0;
    vars.anchor = tape.row_normalize(tape.slice_rows(h, at, n));
    at += n;
    if (use_negative) {
      vars.negative = tape.row_normalize(tape.slice_rows(h, at, n));
      at += n;
    }
    vars.morph = tape.row_normalize(tape.slice_rows(h, at, n));
    at += n;
    if (second) {
      vars.anchor2 = tape.row_normalize(tape.slice_rows(h, at, n));
      vars.positive2 = tape.constant(positive2);
    }
    vars.positive = tape.constant(positive);
    const double shifted_value =
        tape.value(scenario_loss_op(tape, {3.0, scenario}, vars))(0, 0);
    const double base_value = f(theta, nullptr);
    CHECK(std::abs(shifted_value - base_value) < 1e-10);
  }
}
