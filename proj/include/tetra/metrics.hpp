#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tetra/adapter.hpp"
#include "tetra/embedding.hpp"

namespace tetra {

// Labeled similarity scores; higher = more similar, match iff score >= tau.
struct ScoreSet {
  std::vector<double> mated;
  std::vector<double> nonmated;
  std::vector<double> morph;  // one per (morph, contributing-subject probe) presentation
};

struct ScoreProtocol {
  std::optional<std::size_t> nonmated_cap;  // seeded subsample when set
  std::uint64_t seed = 0;
};

// Comparison trials as record-index pairs; left is the reference/morph side,
// right is always a probe.
struct ComparisonPairs {
  struct Pair {
    std::size_t left, right;
  };
  std::vector<Pair> mated, nonmated, morph;
};

ComparisonPairs enumerate_pairs(const EmbeddingSet& set, const ScoreProtocol& protocol = {});

// Similarity s = 1 - d^2/4 over unit vectors, in [0, 1]. The left side goes
// through the adapter when one is supplied (transform); the probe side is
// always the raw normalized embedding.
ScoreSet score_pairs(const Adapter* adapter, const EmbeddingSet& set,
                     const ComparisonPairs& pairs);

ScoreSet score_comparisons(const Adapter* adapter, const EmbeddingSet& set,
                           const ScoreProtocol& protocol = {});

struct Rates {
  double fmr = 0.0, fnmr = 0.0, iapar = 0.0;
};

Rates rates_at_threshold(const ScoreSet& scores, double tau);

// Smallest threshold among the distinct nonmated scores (plus a sentinel
// above the max) whose FMR does not exceed the target; this minimizes FNMR
// subject to the FMR constraint.
double threshold_at_fmr(const ScoreSet& scores, double target_fmr);

double riapar(double fnmr, double iapar);

// (FMR, FNMR) at every distinct score threshold, downsampled to n_points with
// endpoints preserved; FMR is non-increasing along the sequence.
std::vector<std::pair<double, double>> det_points(const ScoreSet& scores, std::size_t n_points);

struct OperatingPoint {
  double fmr_target = 0.0;
  double threshold = 0.0;
  double fmr = 0.0, fnmr = 0.0, iapar = 0.0, riapar = 0.0;
};

struct EvalReport {
  std::vector<OperatingPoint> points;
};

EvalReport build_report(const ScoreSet& scores, const std::vector<double>& fmr_targets);

// CSV of element-wise squared differences (left - right)^2 for seeded samples
// of the three comparison classes, labeled by class.
void export_difference_vectors(const Adapter* adapter, const EmbeddingSet& set,
                               std::size_t pairs_per_class, std::uint64_t seed,
                               const std::string& path);

// Score interchange CSV: `class,score`, class in {mated, nonmated, morph}.
void save_scores(const ScoreSet& scores, const std::string& path);
ScoreSet load_scores(const std::string& path);

void save_det_csv(const std::vector<std::pair<double, double>>& points, const std::string& path);

}  // namespace tetra
