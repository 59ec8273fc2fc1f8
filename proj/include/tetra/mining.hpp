#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tetra/embedding.hpp"
#include "tetra/matrix.hpp"
#include "tetra/rng.hpp"

namespace tetra {

// One (anchor, positive, negative, morph) training tuple. The anchor is a
// reference image and the positive a probe of the same subject; that subject
// contributes to the morph, and the negative's subject contributes to
// neither side of the morph.
struct QuadrupletRef {
  std::string anchor_id, positive_id, negative_id, morph_id;
  std::string subject1, subject2;  // the morph's contributing pair
  std::string anchor_subject;      // one of subject1/subject2
};

struct SubjectIndex {
  std::unordered_map<std::string, std::size_t> by_id;  // sample_id -> record index
  std::unordered_map<std::string, std::vector<std::size_t>> refs_by_subject;
  std::unordered_map<std::string, std::vector<std::size_t>> probes_by_subject;
  std::unordered_map<std::string, std::size_t> bona_fide_count_by_subject;
  std::vector<std::size_t> morphs;
  std::vector<std::size_t> bona_fide;  // refs + probes, in record order

  const SampleRecord* find(const EmbeddingSet& set, const std::string& id) const;
};

SubjectIndex build_index(const EmbeddingSet& set);

// Emits, for every morph and every contributing subject that has at least one
// reference and one probe, one quadruplet per (reference, probe) combination,
// each paired with a seeded-uniform negative drawn from the bona fide samples
// of non-contributing subjects. Deterministic per seed.
std::vector<QuadrupletRef> build_quadruplets(const EmbeddingSet& set, std::uint64_t seed);
std::vector<QuadrupletRef> build_quadruplets(const EmbeddingSet& set, const SubjectIndex& idx,
                                             std::uint64_t seed);

// True iff all QuadrupletRef invariants hold against the set's metadata.
bool validate_quadruplet(const QuadrupletRef& q, const EmbeddingSet& set);
bool validate_quadruplet(const QuadrupletRef& q, const EmbeddingSet& set,
                         const SubjectIndex& idx);

// Seeded shuffle + partition into batches of batch_size indices. A trailing
// batch smaller than 2 is dropped (train-mode BN needs >= 2 rows).
std::vector<std::vector<std::size_t>> sample_epoch_batches(
    const std::vector<QuadrupletRef>& quads, std::size_t batch_size, Rng& rng);

// Quadruplets whose *other* contributing subject also has a reference and a
// probe, i.e. the ones usable by the *2 scenarios.
std::vector<QuadrupletRef> filter_second_subject_eligible(const SubjectIndex& idx,
                                                          const std::vector<QuadrupletRef>& quads);

// Raw matrices for one batch: adapter-side sources plus normalized positives.
struct BatchSources {
  Matrix anchor_src, negative_src, morph_src;  // fed through the adapter
  Matrix positive_unit;                        // raw probes, unit-norm
  std::optional<Matrix> anchor2_src;
  std::optional<Matrix> positive2_unit;

  std::size_t size() const { return anchor_src.rows(); }
};

// Gathers embedding rows for the given quadruplets. When second_subject is
// set, draws a seeded-uniform (reference, probe) pair of the other
// contributing subject per element; MissingSecondSubject if none exists.
BatchSources materialize_batch(const EmbeddingSet& set, const SubjectIndex& idx,
                               const std::vector<QuadrupletRef>& quads,
                               std::span<const std::size_t> batch_indices, bool second_subject,
                               Rng& rng);

}  // namespace tetra
