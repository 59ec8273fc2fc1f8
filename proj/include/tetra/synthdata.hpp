#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "tetra/embedding.hpp"
#include "tetra/rng.hpp"

namespace tetra {

// How a synthetic "morphing tool" draws its blend factor.
struct AlphaLaw {
  enum class Kind { Fixed, Uniform } kind = Kind::Fixed;
  double value = 0.5;          // Fixed
  double lo = 0.35, hi = 0.65; // Uniform
};

struct ToolConfig {
  std::string name;
  AlphaLaw alpha;
  double noise_std = 0.02;
  // Norm of the blend-artifact component this tool leaves inside the shared
  // artifact subspace. Real backbones encode morphing artifacts; without an
  // embedding-level trace, morphs of unseen subjects would be statistically
  // identical to bona fide samples at the blend direction and no detector or
  // adapter could generalize across subjects.
  double artifact_strength = 0.0;
};

// Subjects are directions on the unit hypersphere, confined to a latent
// subject subspace so that a few hundred subjects cover it densely (unseen
// subjects then lie between seen ones, the way unseen faces do in a real
// embedding space); references and probes are normalized Gaussian
// perturbations of the subject direction; morphs are normalized convex
// combinations of two references plus tool noise plus a tool-strength
// component in a shared artifact subspace orthogonal to the subject subspace.
struct UniverseConfig {
  std::size_t dim = 64;
  std::size_t train_subjects = 800;  // disjoint subject partitions
  std::size_t test_subjects = 200;
  std::size_t refs_per_subject = 2;
  std::size_t probes_per_subject = 3;
  double ref_noise = 0.05;    // per-coordinate std around the subject direction
  double probe_noise = 0.08;
  std::vector<ToolConfig> tools;
  std::size_t morphs_per_tool = 500;  // per partition
  // latent dimensions: subject directions span subject_dim of the dim axes
  // (after a seeded rotation); artifacts span artifact_dim further directions
  std::size_t subject_dim = 40;
  std::size_t artifact_dim = 4;
  // fraction of artifact energy lying inside the subject subspace; > 0 makes
  // suppressing artifacts cost verification accuracy, the trade-off the
  // quadruplet's negative term is there to bound
  double artifact_overlap = 0.0;
  // per-coordinate std of bona fide noise along the artifact directions
  // (quality variation occupies the same feature directions as morphing
  // artifacts, so rejecting morphs costs amplified bona fide noise)
  double artifact_noise = 0.04;
  std::uint64_t seed = 42;
};

UniverseConfig default_universe_config();

enum class Partition { Train, Test };

const char* to_string(Partition p);

struct SyntheticUniverse {
  EmbeddingSet set;
  std::vector<std::string> subjects;  // generation order
  std::unordered_map<std::string, Partition> partition_of;
  std::unordered_map<std::string, Embedding> direction_of;  // ground truth
  std::vector<Embedding> artifact_basis;  // orthonormal, ground truth
  UniverseConfig config;
};

// normalize(alpha * e1 + (1 - alpha) * e2 + N(0, noise_std^2 I))
Embedding morph_embedding(const Embedding& e1, const Embedding& e2, double alpha,
                          double noise_std, Rng& rng);

SyntheticUniverse generate_universe(const UniverseConfig& config);

// Cross-tool protocol: train and validation share the train-subject
// partition but use different morph tools; the test set uses the disjoint
// test partition and the held-out tools.
struct SplitProtocol {
  std::vector<std::string> train_tools{"tool_a", "tool_b"};
  std::vector<std::string> val_tools{"tool_c"};
  std::vector<std::string> test_tools{"tool_c", "tool_d"};
};

struct ProtocolSplits {
  EmbeddingSet train, val, test;
};

ProtocolSplits split_protocol(const SyntheticUniverse& universe, const SplitProtocol& protocol);

// Diagnostics sidecar: subject directions, partitions and tool parameters.
void save_ground_truth(const SyntheticUniverse& universe, const std::string& path);

}  // namespace tetra
