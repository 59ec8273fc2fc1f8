#pragma once

#include <optional>
#include <span>
#include <string>

#include "tetra/autodiff.hpp"
#include "tetra/matrix.hpp"

namespace tetra {

enum class Scenario { Triplet, Tetra, Triplet2, Tetra2 };

const char* to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);
bool needs_second_subject(Scenario s);

// Distance used inside the hinge terms, over unit-norm rows. Euclidean is
// the default: under the squared form the repulsion force grows with
// distance while the pull vanishes near alignment, which drives training
// into a uniform-spread equilibrium that destroys verification.
enum class DistanceForm { Euclidean, Squared };

const char* to_string(DistanceForm d);
DistanceForm distance_form_from_string(const std::string& s);

struct LossConfig {
  double margin = 3.0;
  Scenario scenario = Scenario::Tetra;
  DistanceForm distance = DistanceForm::Euclidean;
};

// Unit-norm comparison rows for one batch: anchor/negative/morph rows are
// post-adapter, positive rows are raw. The second-subject rows are present
// only for the *2 scenarios.
struct QuadrupletBatch {
  Matrix anchor, positive, negative, morph;
  std::optional<Matrix> anchor2, positive2;

  std::size_t size() const { return anchor.rows(); }
};

// Per-element hinged terms (plain arithmetic; the tape-free route).
double triplet_term(std::span<const double> a, std::span<const double> p,
                    std::span<const double> n, double margin,
                    DistanceForm distance = DistanceForm::Euclidean);
double tetra_term(std::span<const double> a, std::span<const double> p,
                  std::span<const double> n, std::span<const double> m, double margin,
                  DistanceForm distance = DistanceForm::Euclidean);

// Batch means over the hinged terms.
double triplet_loss(const Matrix& anchor, const Matrix& positive, const Matrix& negative,
                    double margin, DistanceForm distance = DistanceForm::Euclidean);
double tetra_loss(const Matrix& anchor, const Matrix& positive, const Matrix& negative,
                  const Matrix& morph, double margin,
                  DistanceForm distance = DistanceForm::Euclidean);

// Scenario semantics: Triplet/Tetra use the first contributing subject's
// anchor/positive; the *2 variants average the first- and second-subject
// terms. The triplet scenarios substitute the morph for the negative.
double scenario_loss(const LossConfig& config, const QuadrupletBatch& batch);

// Tape builders for the same quantities (the gradient route).
Var triplet_loss_op(Tape& tape, Var anchor, Var positive, Var negative, double margin,
                    DistanceForm distance = DistanceForm::Euclidean);
Var tetra_loss_op(Tape& tape, Var anchor, Var positive, Var negative, Var morph, double margin,
                  DistanceForm distance = DistanceForm::Euclidean);

struct QuadrupletBatchVars {
  Var anchor, positive, negative, morph;
  std::optional<Var> anchor2, positive2;
};

Var scenario_loss_op(Tape& tape, const LossConfig& config, const QuadrupletBatchVars& batch);

}  // namespace tetra
