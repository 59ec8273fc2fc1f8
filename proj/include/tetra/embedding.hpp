#pragma once

#include <optional>
#include <string>
#include <vector>

namespace tetra {

// One sample in a recognition system's feature space.
using Embedding = std::vector<double>;

enum class SampleKind { Reference, Probe, Morph };

const char* to_string(SampleKind k);
SampleKind sample_kind_from_string(const std::string& s);

struct SampleRecord {
  std::string sample_id;
  SampleKind kind = SampleKind::Reference;
  std::string subject_a;
  std::string subject_b;  // set iff kind == Morph, and then != subject_a
  std::string tool;       // source tool tag, may be empty
  Embedding embedding;
};

struct EmbeddingSet {
  std::size_t dim = 0;
  std::vector<SampleRecord> records;
};

double norm(const Embedding& v);

// Unit-norm copy. Throws ZeroVector when ||v|| < 1e-12.
Embedding normalize(const Embedding& v);

// Squared Euclidean distance; in [0, 4] for unit vectors.
double sq_dist(const Embedding& a, const Embedding& b);

// Enforces the type invariants: per-record embedding length == dim, finite
// entries, unique sample ids, morph <=> second subject present and distinct.
void validate(const EmbeddingSet& set);

enum class FileFormat { Csv, Binary };

// .csv -> Csv, anything else -> Binary
FileFormat format_from_path(const std::string& path);

EmbeddingSet load_embeddings(const std::string& path, FileFormat format);
void save_embeddings(const EmbeddingSet& set, const std::string& path, FileFormat format);

inline EmbeddingSet load_embeddings(const std::string& path) {
  return load_embeddings(path, format_from_path(path));
}
inline void save_embeddings(const EmbeddingSet& set, const std::string& path) {
  save_embeddings(set, path, format_from_path(path));
}

// Text interchange uses 9 significant digits.
std::string format_value(double v);

}  // namespace tetra
