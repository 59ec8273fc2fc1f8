#include "tetra/losses.hpp"

#include <algorithm>
#include <cmath>

#include "tetra/error.hpp"

namespace tetra {

const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::Triplet: return "triplet";
    case Scenario::Tetra: return "tetra";
    case Scenario::Triplet2: return "triplet2";
    case Scenario::Tetra2: return "tetra2";
  }
  return "?";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "triplet") return Scenario::Triplet;
  if (s == "tetra") return Scenario::Tetra;
  if (s == "triplet2") return Scenario::Triplet2;
  if (s == "tetra2") return Scenario::Tetra2;
  fail(ErrorCode::ConfigInvalid, "unknown scenario '" + s + "'");
}

bool needs_second_subject(Scenario s) {
  return s == Scenario::Triplet2 || s == Scenario::Tetra2;
}

const char* to_string(DistanceForm d) {
  return d == DistanceForm::Euclidean ? "euclidean" : "squared";
}

DistanceForm distance_form_from_string(const std::string& s) {
  if (s == "euclidean") return DistanceForm::Euclidean;
  if (s == "squared") return DistanceForm::Squared;
  fail(ErrorCode::ConfigInvalid, "unknown distance form '" + s + "'");
}

namespace {

double span_dist(std::span<const double> a, std::span<const double> b,
                 DistanceForm distance) {
  require(a.size() == b.size(), ErrorCode::DimensionMismatch, "loss rows differ in length");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return distance == DistanceForm::Squared ? s : std::sqrt(s);
}

void check_batch_rows(const Matrix& m, std::size_t n, const char* what) {
  require(m.rows() == n, ErrorCode::DimensionMismatch,
          std::string(what) + " row count does not match batch size");
}

}  // namespace

double triplet_term(std::span<const double> a, std::span<const double> p,
                    std::span<const double> n, double margin, DistanceForm distance) {
  return std::max(span_dist(a, p, distance) + margin - span_dist(a, n, distance), 0.0);
}

double tetra_term(std::span<const double> a, std::span<const double> p,
                  std::span<const double> n, std::span<const double> m, double margin,
                  DistanceForm distance) {
  const double closest = std::min(span_dist(a, n, distance), span_dist(a, m, distance));
  return std::max(span_dist(a, p, distance) + margin - closest, 0.0);
}

double triplet_loss(const Matrix& anchor, const Matrix& positive, const Matrix& negative,
                    double margin, DistanceForm distance) {
  const std::size_t n = anchor.rows();
  require(n >= 1, ErrorCode::EmptyBatch, "triplet loss over an empty batch");
  check_batch_rows(positive, n, "positive");
  check_batch_rows(negative, n, "negative");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s += triplet_term(anchor.row(i), positive.row(i), negative.row(i), margin, distance);
  }
  return s / static_cast<double>(n);
}

double tetra_loss(const Matrix& anchor, const Matrix& positive, const Matrix& negative,
                  const Matrix& morph, double margin, DistanceForm distance) {
  const std::size_t n = anchor.rows();
  require(n >= 1, ErrorCode::EmptyBatch, "tetra loss over an empty batch");
  check_batch_rows(positive, n, "positive");
  check_batch_rows(negative, n, "negative");
  check_batch_rows(morph, n, "morph");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s += tetra_term(anchor.row(i), positive.row(i), negative.row(i), morph.row(i), margin,
                    distance);
  }
  return s / static_cast<double>(n);
}

double scenario_loss(const LossConfig& config, const QuadrupletBatch& batch) {
  require(batch.size() >= 1, ErrorCode::EmptyBatch, "scenario loss over an empty batch");
  if (needs_second_subject(config.scenario)) {
    require(batch.anchor2.has_value() && batch.positive2.has_value(),
            ErrorCode::MissingSecondSubject,
            "scenario requires second-subject anchor/positive rows");
  }
  switch (config.scenario) {
    case Scenario::Triplet:
      return triplet_loss(batch.anchor, batch.positive, batch.morph, config.margin,
                          config.distance);
    case Scenario::Tetra:
      return tetra_loss(batch.anchor, batch.positive, batch.negative, batch.morph, config.margin,
                        config.distance);
    case Scenario::Triplet2:
      return 0.5 * (triplet_loss(batch.anchor, batch.positive, batch.morph, config.margin,
                                 config.distance) +
                    triplet_loss(*batch.anchor2, *batch.positive2, batch.morph, config.margin,
                                 config.distance));
    case Scenario::Tetra2:
      return 0.5 *
             (tetra_loss(batch.anchor, batch.positive, batch.negative, batch.morph,
                         config.margin, config.distance) +
              tetra_loss(*batch.anchor2, *batch.positive2, batch.negative, batch.morph,
                         config.margin, config.distance));
  }
  fail(ErrorCode::ConfigInvalid, "unreachable scenario");
}

namespace {

Var row_dist(Tape& tape, Var a, Var b, DistanceForm distance) {
  const Var sq = tape.row_sq_dist(a, b);
  return distance == DistanceForm::Squared ? sq : tape.sqrt_elem(sq);
}

}  // namespace

Var triplet_loss_op(Tape& tape, Var anchor, Var positive, Var negative, double margin,
                    DistanceForm distance) {
  require(tape.value(anchor).rows() >= 1, ErrorCode::EmptyBatch,
          "triplet loss over an empty batch");
  const Var d_ap = row_dist(tape, anchor, positive, distance);
  const Var d_an = row_dist(tape, anchor, negative, distance);
  return tape.mean_all(tape.hinge(tape.sub(tape.add_scalar(d_ap, margin), d_an)));
}

Var tetra_loss_op(Tape& tape, Var anchor, Var positive, Var negative, Var morph, double margin,
                  DistanceForm distance) {
  require(tape.value(anchor).rows() >= 1, ErrorCode::EmptyBatch,
          "tetra loss over an empty batch");
  const Var d_ap = row_dist(tape, anchor, positive, distance);
  const Var d_an = row_dist(tape, anchor, negative, distance);
  const Var d_am = row_dist(tape, anchor, morph, distance);
  const Var closest = tape.min_elem(d_an, d_am);
  return tape.mean_all(tape.hinge(tape.sub(tape.add_scalar(d_ap, margin), closest)));
}

Var scenario_loss_op(Tape& tape, const LossConfig& config, const QuadrupletBatchVars& batch) {
  if (needs_second_subject(config.scenario)) {
    require(batch.anchor2.has_value() && batch.positive2.has_value(),
            ErrorCode::MissingSecondSubject,
            "scenario requires second-subject anchor/positive rows");
  }
  switch (config.scenario) {
    case Scenario::Triplet:
      return triplet_loss_op(tape, batch.anchor, batch.positive, batch.morph, config.margin,
                             config.distance);
    case Scenario::Tetra:
      return tetra_loss_op(tape, batch.anchor, batch.positive, batch.negative, batch.morph,
                           config.margin, config.distance);
    case Scenario::Triplet2: {
      const Var l1 = triplet_loss_op(tape, batch.anchor, batch.positive, batch.morph,
                                     config.margin, config.distance);
      const Var l2 = triplet_loss_op(tape, *batch.anchor2, *batch.positive2, batch.morph,
                                     config.margin, config.distance);
      return tape.scale(tape.add(l1, l2), 0.5);
    }
    case Scenario::Tetra2: {
      const Var l1 = tetra_loss_op(tape, batch.anchor, batch.positive, batch.negative,
                                   batch.morph, config.margin, config.distance);
      const Var l2 = tetra_loss_op(tape, *batch.anchor2, *batch.positive2, batch.negative,
                                   batch.morph, config.margin, config.distance);
      return tape.scale(tape.add(l1, l2), 0.5);
    }
  }
  fail(ErrorCode::ConfigInvalid, "unreachable scenario");
}

}  // namespace tetra
