#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tetra/embedding.hpp"
#include "tetra/matrix.hpp"
#include "tetra/metrics.hpp"

namespace tetra {

// Linear differential morphing-attack detector over embedding difference
// vectors, calibrated through a logistic output. Higher score = more likely
// bona fide.
struct DmadModel {
  std::vector<double> weights;
  double bias = 0.0;

  std::size_t dim() const { return weights.size(); }
};

struct DmadConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 200;
  double l2 = 1e-4;
};

// Rows are (suspected - probe) difference features of unit embeddings; label
// 1 = bona fide, 0 = morph. Full-batch gradient descent on L2-regularized
// logistic loss; the learning rate is backtracked whenever a step would
// increase the loss.
DmadModel train_dmad(const Matrix& bona_features, const Matrix& morph_features,
                     const DmadConfig& config, std::uint64_t seed);

double logistic(double z);

double dmad_score_diff(const DmadModel& model, std::span<const double> diff);
double dmad_score(const DmadModel& model, const Embedding& suspected, const Embedding& probe);

// (s_fr + s_mad) / 2; both inputs must lie in [0, 1]
double fuse(double s_fr, double s_mad);
ScoreSet fuse_scores(const ScoreSet& fr, const ScoreSet& mad);

// Difference features for the same comparison pairs used by the recognition
// scores; the suspected side is the raw normalized embedding (the detector
// always works over the original embedding space).
struct DmadTrainingData {
  Matrix bona;   // mated pairs
  Matrix morph;  // morph attack pairs
};

DmadTrainingData dmad_training_features(const EmbeddingSet& set, const ComparisonPairs& pairs);

ScoreSet dmad_score_pairs(const DmadModel& model, const EmbeddingSet& set,
                          const ComparisonPairs& pairs);

// The four full-system scenarios over one shared pair enumeration. Thresholds
// are recomputed per scenario on that scenario's non-mated scores.
struct ScenarioReports {
  EvalReport original, original_mad, tetra, tetra_mad;
};

ScenarioReports evaluate_scenarios(const ScoreSet& original_scores, const ScoreSet& tetra_scores,
                                   const ScoreSet& mad_scores,
                                   const std::vector<double>& fmr_targets);

// Checkpoint: magic DMAD1, u32 dim, weights, bias as little-endian f64.
void save_dmad(const DmadModel& model, const std::string& path);
DmadModel load_dmad(const std::string& path);

}  // namespace tetra
