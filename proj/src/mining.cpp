#include "tetra/mining.hpp"

#include <algorithm>

#include "tetra/error.hpp"

namespace tetra {

const SampleRecord* SubjectIndex::find(const EmbeddingSet& set, const std::string& id) const {
  const auto it = by_id.find(id);
  require(it != by_id.end(), ErrorCode::UnknownSampleId, "unknown sample id '" + id + "'");
  return &set.records[it->second];
}

SubjectIndex build_index(const EmbeddingSet& set) {
  SubjectIndex idx;
  idx.by_id.reserve(set.records.size());
  for (std::size_t i = 0; i < set.records.size(); ++i) {
    const SampleRecord& r = set.records[i];
    require(idx.by_id.emplace(r.sample_id, i).second, ErrorCode::InvariantViolation,
            "duplicate sample id '" + r.sample_id + "'");
    switch (r.kind) {
      case SampleKind::Reference:
        idx.refs_by_subject[r.subject_a].push_back(i);
        idx.bona_fide.push_back(i);
        ++idx.bona_fide_count_by_subject[r.subject_a];
        break;
      case SampleKind::Probe:
        idx.probes_by_subject[r.subject_a].push_back(i);
        idx.bona_fide.push_back(i);
        ++idx.bona_fide_count_by_subject[r.subject_a];
        break;
      case SampleKind::Morph:
        idx.morphs.push_back(i);
        break;
    }
  }
  return idx;
}

namespace {

std::size_t count_or_zero(const std::unordered_map<std::string, std::size_t>& m,
                          const std::string& key) {
  const auto it = m.find(key);
  return it == m.end() ? 0 : it->second;
}

const std::vector<std::size_t>* list_or_null(
    const std::unordered_map<std::string, std::vector<std::size_t>>& m, const std::string& key) {
  const auto it = m.find(key);
  return it == m.end() ? nullptr : &it->second;
}

}  // namespace

std::vector<QuadrupletRef> build_quadruplets(const EmbeddingSet& set, std::uint64_t seed) {
  return build_quadruplets(set, build_index(set), seed);
}

std::vector<QuadrupletRef> build_quadruplets(const EmbeddingSet& set, const SubjectIndex& idx,
                                             std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x71756164ull));  // quadruplet substream
  std::vector<QuadrupletRef> out;
  for (const std::size_t mi : idx.morphs) {
    const SampleRecord& morph = set.records[mi];
    const std::size_t excluded = count_or_zero(idx.bona_fide_count_by_subject, morph.subject_a) +
                                 count_or_zero(idx.bona_fide_count_by_subject, morph.subject_b);
    if (idx.bona_fide.size() <= excluded) continue;  // no valid negative exists
    for (const std::string* subject : {&morph.subject_a, &morph.subject_b}) {
      const auto* refs = list_or_null(idx.refs_by_subject, *subject);
      const auto* probes = list_or_null(idx.probes_by_subject, *subject);
      if (!refs || !probes) continue;
      for (const std::size_t ri : *refs) {
        for (const std::size_t pi : *probes) {
          std::size_t ni;
          do {
            ni = idx.bona_fide[rng.uniform_index(idx.bona_fide.size())];
          } while (set.records[ni].subject_a == morph.subject_a ||
                   set.records[ni].subject_a == morph.subject_b);
          out.push_back(QuadrupletRef{set.records[ri].sample_id, set.records[pi].sample_id,
                                      set.records[ni].sample_id, morph.sample_id, morph.subject_a,
                                      morph.subject_b, *subject});
        }
      }
    }
  }
  require(!out.empty(), ErrorCode::NoValidQuadruplets,
          "the set yields no valid quadruplets (need a morph whose contributing subject has a "
          "reference and a probe, plus a third subject)");
  return out;
}

bool validate_quadruplet(const QuadrupletRef& q, const EmbeddingSet& set) {
  return validate_quadruplet(q, set, build_index(set));
}

bool validate_quadruplet(const QuadrupletRef& q, const EmbeddingSet& set,
                         const SubjectIndex& idx) {
  const SampleRecord* anchor = idx.find(set, q.anchor_id);
  const SampleRecord* positive = idx.find(set, q.positive_id);
  const SampleRecord* negative = idx.find(set, q.negative_id);
  const SampleRecord* morph = idx.find(set, q.morph_id);

  if (anchor->kind != SampleKind::Reference || positive->kind != SampleKind::Probe ||
      morph->kind != SampleKind::Morph) {
    return false;
  }
  if (negative->kind == SampleKind::Morph) return false;
  if (q.subject1 != morph->subject_a || q.subject2 != morph->subject_b) return false;
  if (q.anchor_subject != q.subject1 && q.anchor_subject != q.subject2) return false;
  if (anchor->subject_a != q.anchor_subject || positive->subject_a != q.anchor_subject) {
    return false;
  }
  if (negative->subject_a == q.subject1 || negative->subject_a == q.subject2) return false;
  return true;
}

std::vector<std::vector<std::size_t>> sample_epoch_batches(
    const std::vector<QuadrupletRef>& quads, std::size_t batch_size, Rng& rng) {
  require(batch_size >= 1, ErrorCode::ConfigInvalid, "batch size must be >= 1");
  std::vector<std::size_t> order(quads.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t at = 0; at < order.size(); at += batch_size) {
    const std::size_t n = std::min(batch_size, order.size() - at);
    if (n < 2) break;  // train-mode BN cannot use it
    batches.emplace_back(order.begin() + at, order.begin() + at + n);
  }
  return batches;
}

std::vector<QuadrupletRef> filter_second_subject_eligible(
    const SubjectIndex& idx, const std::vector<QuadrupletRef>& quads) {
  std::vector<QuadrupletRef> out;
  out.reserve(quads.size());
  for (const QuadrupletRef& q : quads) {
    const std::string& other = q.anchor_subject == q.subject1 ? q.subject2 : q.subject1;
    if (list_or_null(idx.refs_by_subject, other) && list_or_null(idx.probes_by_subject, other)) {
      out.push_back(q);
    }
  }
  return out;
}

namespace {

void copy_row(Matrix& dst, std::size_t row, const Embedding& src) {
  std::copy(src.begin(), src.end(), dst.row(row).begin());
}

}  // namespace

BatchSources materialize_batch(const EmbeddingSet& set, const SubjectIndex& idx,
                               const std::vector<QuadrupletRef>& quads,
                               std::span<const std::size_t> batch_indices, bool second_subject,
                               Rng& rng) {
  const std::size_t n = batch_indices.size();
  require(n >= 1, ErrorCode::EmptyBatch, "cannot materialize an empty batch");
  BatchSources b;
  b.anchor_src = Matrix(n, set.dim);
  b.negative_src = Matrix(n, set.dim);
  b.morph_src = Matrix(n, set.dim);
  b.positive_unit = Matrix(n, set.dim);
  if (second_subject) {
    b.anchor2_src = Matrix(n, set.dim);
    b.positive2_unit = Matrix(n, set.dim);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const QuadrupletRef& q = quads[batch_indices[i]];
    copy_row(b.anchor_src, i, idx.find(set, q.anchor_id)->embedding);
    copy_row(b.negative_src, i, idx.find(set, q.negative_id)->embedding);
    copy_row(b.morph_src, i, idx.find(set, q.morph_id)->embedding);
    copy_row(b.positive_unit, i, normalize(idx.find(set, q.positive_id)->embedding));
    if (second_subject) {
      const std::string& other = q.anchor_subject == q.subject1 ? q.subject2 : q.subject1;
      const auto* refs = list_or_null(idx.refs_by_subject, other);
      const auto* probes = list_or_null(idx.probes_by_subject, other);
      require(refs && probes, ErrorCode::MissingSecondSubject,
              "subject '" + other + "' has no reference/probe pair for the *2 scenario");
      const std::size_t ri = (*refs)[rng.uniform_index(refs->size())];
      const std::size_t pi = (*probes)[rng.uniform_index(probes->size())];
      copy_row(*b.anchor2_src, i, set.records[ri].embedding);
      copy_row(*b.positive2_unit, i, normalize(set.records[pi].embedding));
    }
  }
  return b;
}

}  // namespace tetra
