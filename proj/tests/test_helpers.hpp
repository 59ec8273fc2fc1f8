#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include "tetra/adapter.hpp"
#include "tetra/embedding.hpp"
#include "tetra/metrics.hpp"
#include "tetra/rng.hpp"

namespace tetra::testing {

inline Embedding random_unit(Rng& rng, std::size_t dim) {
  Embedding v(dim);
  for (double& x : v) x = rng.gaussian();
  return normalize(v);
}

inline EmbeddingSet random_set(Rng& rng, std::size_t dim, std::size_t count) {
  EmbeddingSet set;
  set.dim = dim;
  for (std::size_t i = 0; i < count; ++i) {
    SampleRecord r;
    r.sample_id = "x" + std::to_string(i);
    r.kind = i % 3 == 0 ? SampleKind::Reference : (i % 3 == 1 ? SampleKind::Probe
                                                              : SampleKind::Morph);
    r.subject_a = "subj" + std::to_string(i % 5);
    if (r.kind == SampleKind::Morph) r.subject_b = "subj" + std::to_string((i + 1) % 5);
    if (i % 4 == 0) r.tool = "tool" + std::to_string(i % 2);
    r.embedding.resize(dim);
    for (double& x : r.embedding) x = rng.gaussian();
    set.records.push_back(std::move(r));
  }
  return set;
}

// Independent counting oracle for the rate definitions.
struct BruteRates {
  double fmr, fnmr, iapar;
};

inline BruteRates brute_rates(const ScoreSet& s, double tau) {
  BruteRates r{0.0, 0.0, 0.0};
  std::size_t n = 0;
  for (double v : s.nonmated) n += v >= tau ? 1 : 0;
  r.fmr = static_cast<double>(n) / static_cast<double>(s.nonmated.size());
  n = 0;
  for (double v : s.mated) n += v < tau ? 1 : 0;
  r.fnmr = static_cast<double>(n) / static_cast<double>(s.mated.size());
  n = 0;
  for (double v : s.morph) n += v >= tau ? 1 : 0;
  r.iapar = static_cast<double>(n) / static_cast<double>(s.morph.size());
  return r;
}

// Exhaustive threshold scan: smallest candidate threshold with FMR <= target.
inline double brute_threshold_at_fmr(const ScoreSet& s, double target) {
  std::vector<double> candidates = s.nonmated;
  double max_score = candidates[0];
  for (double v : candidates) max_score = std::max(max_score, v);
  candidates.push_back(max_score + 1.0);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  for (double tau : candidates) {
    if (brute_rates(s, tau).fmr <= target) return tau;
  }
  return candidates.back();
}

// Weights, gamma and beta as one flat vector for gradient checks. The linear
// biases are excluded: train-mode BN subtracts the batch mean, so a bias
// shift never reaches the output and its analytic gradient is exactly zero;
// a finite-difference quotient on such a coordinate measures only noise.
inline std::vector<double> flatten_live(const Adapter& a) {
  std::vector<double> theta;
  for (std::size_t l = 0; l < 4; ++l) {
    const Matrix& w = a.layers[l].weight;
    theta.insert(theta.end(), w.data(), w.data() + w.size());
    theta.insert(theta.end(), a.bn[l].gamma.begin(), a.bn[l].gamma.end());
    theta.insert(theta.end(), a.bn[l].beta.begin(), a.bn[l].beta.end());
  }
  return theta;
}

inline void unflatten_live(Adapter& a, std::span<const double> theta) {
  std::size_t at = 0;
  for (std::size_t l = 0; l < 4; ++l) {
    Matrix& w = a.layers[l].weight;
    std::copy(theta.begin() + at, theta.begin() + at + w.size(), w.data());
    at += w.size();
    std::copy(theta.begin() + at, theta.begin() + at + a.dim, a.bn[l].gamma.begin());
    at += a.dim;
    std::copy(theta.begin() + at, theta.begin() + at + a.dim, a.bn[l].beta.begin());
    at += a.dim;
  }
}

inline std::vector<double> gather_live_grads(const Tape& tape, const AdapterVars& vars) {
  std::vector<double> g;
  for (std::size_t l = 0; l < 4; ++l) {
    const Matrix& gw = tape.grad(vars.weight[l]);
    g.insert(g.end(), gw.data(), gw.data() + gw.size());
    const Matrix& gg = tape.grad(vars.gamma[l]);
    g.insert(g.end(), gg.data(), gg.data() + gg.size());
    const Matrix& gb = tape.grad(vars.beta[l]);
    g.insert(g.end(), gb.data(), gb.data() + gb.size());
  }
  return g;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    dir_ = std::filesystem::temp_directory_path() /
           ("tetraface_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

 private:
  std::filesystem::path dir_;
};

}  // namespace tetra::testing
