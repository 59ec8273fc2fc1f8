#include "tetra/embedding.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "tetra/error.hpp"

namespace tetra {

const char* to_string(SampleKind k) {
  switch (k) {
    case SampleKind::Reference: return "ref";
    case SampleKind::Probe: return "probe";
    case SampleKind::Morph: return "morph";
  }
  return "?";
}

SampleKind sample_kind_from_string(const std::string& s) {
  if (s == "ref") return SampleKind::Reference;
  if (s == "probe") return SampleKind::Probe;
  if (s == "morph") return SampleKind::Morph;
  fail(ErrorCode::ParseError, "unknown sample kind '" + s + "'");
}

double norm(const Embedding& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

Embedding normalize(const Embedding& v) {
  const double n = norm(v);
  require(n >= 1e-12, ErrorCode::ZeroVector, "cannot normalize a (near-)zero vector");
  Embedding out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

double sq_dist(const Embedding& a, const Embedding& b) {
  require(a.size() == b.size(), ErrorCode::DimensionMismatch,
          "sq_dist: vectors have different lengths");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void validate(const EmbeddingSet& set) {
  require(set.dim > 0, ErrorCode::InvariantViolation, "embedding set has dim 0");
  std::unordered_set<std::string> ids;
  ids.reserve(set.records.size());
  for (const SampleRecord& r : set.records) {
    require(r.embedding.size() == set.dim, ErrorCode::DimensionMismatch,
            "sample '" + r.sample_id + "' has wrong embedding length");
    for (double x : r.embedding) {
      require(std::isfinite(x), ErrorCode::InvariantViolation,
              "sample '" + r.sample_id + "' has a non-finite entry");
    }
    require(ids.insert(r.sample_id).second, ErrorCode::InvariantViolation,
            "duplicate sample id '" + r.sample_id + "'");
    require(!r.subject_a.empty(), ErrorCode::InvariantViolation,
            "sample '" + r.sample_id + "' has no subject");
    if (r.kind == SampleKind::Morph) {
      require(!r.subject_b.empty() && r.subject_b != r.subject_a, ErrorCode::InvariantViolation,
              "morph '" + r.sample_id + "' needs a distinct second subject");
    } else {
      require(r.subject_b.empty(), ErrorCode::InvariantViolation,
              "non-morph '" + r.sample_id + "' must not carry a second subject");
    }
  }
}

FileFormat format_from_path(const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) return FileFormat::Csv;
  return FileFormat::Binary;
}

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

namespace {

constexpr char kBinaryMagic[4] = {'E', 'M', 'B', '1'};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  out.push_back(std::move(field));
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    require(pos == s.size(), ErrorCode::ParseError, "trailing characters in number");
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    fail(ErrorCode::ParseError, "bad numeric field '" + s + "' on line " + std::to_string(line_no));
  }
}

void check_field_text(const std::string& s) {
  require(s.find(',') == std::string::npos && s.find('\n') == std::string::npos,
          ErrorCode::InvariantViolation, "field '" + s + "' contains a separator character");
}

EmbeddingSet load_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open '" + path + "' for reading");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::ParseError,
          "'" + path + "' is empty");
  const auto header = split_csv_line(line);
  require(header.size() > 5 && header[0] == "sample_id" && header[1] == "kind" &&
              header[2] == "subject_a" && header[3] == "subject_b" && header[4] == "tool",
          ErrorCode::ParseError, "unexpected CSV header in '" + path + "'");
  EmbeddingSet set;
  set.dim = header.size() - 5;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    require(fields.size() == header.size(), ErrorCode::DimensionMismatch,
            "line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                " fields, expected " + std::to_string(header.size()));
    SampleRecord r;
    r.sample_id = fields[0];
    r.kind = sample_kind_from_string(fields[1]);
    r.subject_a = fields[2];
    r.subject_b = fields[3];
    r.tool = fields[4];
    r.embedding.resize(set.dim);
    for (std::size_t i = 0; i < set.dim; ++i) r.embedding[i] = parse_double(fields[5 + i], line_no);
    set.records.push_back(std::move(r));
  }
  validate(set);
  return set;
}

void save_csv(const EmbeddingSet& set, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << "sample_id,kind,subject_a,subject_b,tool";
  for (std::size_t i = 0; i < set.dim; ++i) out << ",d" << i;
  out << "\n";
  for (const SampleRecord& r : set.records) {
    check_field_text(r.sample_id);
    check_field_text(r.subject_a);
    check_field_text(r.subject_b);
    check_field_text(r.tool);
    out << r.sample_id << ',' << to_string(r.kind) << ',' << r.subject_a << ',' << r.subject_b
        << ',' << r.tool;
    for (double v : r.embedding) out << ',' << format_value(v);
    out << "\n";
  }
  require(out.good(), ErrorCode::Io, "write to '" + path + "' failed");
}

void write_raw(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void write_string(std::ofstream& out, const std::string& s) {
  const std::uint32_t len = static_cast<std::uint32_t>(s.size());
  write_raw(out, &len, sizeof(len));
  write_raw(out, s.data(), s.size());
}

void read_raw(std::ifstream& in, void* p, std::size_t n, const std::string& path) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  require(in.gcount() == static_cast<std::streamsize>(n), ErrorCode::Format,
          "'" + path + "' is truncated");
}

std::string read_string(std::ifstream& in, const std::string& path) {
  std::uint32_t len = 0;
  read_raw(in, &len, sizeof(len), path);
  require(len <= (1u << 20), ErrorCode::Format, "'" + path + "' has an implausible string length");
  std::string s(len, '\0');
  if (len > 0) read_raw(in, s.data(), len, path);
  return s;
}

EmbeddingSet load_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot open '" + path + "' for reading");
  char magic[4];
  read_raw(in, magic, 4, path);
  require(std::memcmp(magic, kBinaryMagic, 4) == 0, ErrorCode::Format,
          "'" + path + "' is not an embedding file");
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  read_raw(in, &dim, sizeof(dim), path);
  read_raw(in, &count, sizeof(count), path);
  EmbeddingSet set;
  set.dim = dim;
  set.records.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    SampleRecord r;
    r.sample_id = read_string(in, path);
    std::uint8_t kind = 0;
    read_raw(in, &kind, sizeof(kind), path);
    require(kind <= 2, ErrorCode::Format, "'" + path + "' has a bad kind byte");
    r.kind = static_cast<SampleKind>(kind);
    r.subject_a = read_string(in, path);
    r.subject_b = read_string(in, path);
    r.tool = read_string(in, path);
    r.embedding.resize(dim);
    read_raw(in, r.embedding.data(), sizeof(double) * dim, path);
    set.records.push_back(std::move(r));
  }
  validate(set);
  return set;
}

void save_binary(const EmbeddingSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::Io, "cannot open '" + path + "' for writing");
  write_raw(out, kBinaryMagic, 4);
  const std::uint32_t dim = static_cast<std::uint32_t>(set.dim);
  const std::uint64_t count = set.records.size();
  write_raw(out, &dim, sizeof(dim));
  write_raw(out, &count, sizeof(count));
  for (const SampleRecord& r : set.records) {
    write_string(out, r.sample_id);
    const std::uint8_t kind = static_cast<std::uint8_t>(r.kind);
    write_raw(out, &kind, sizeof(kind));
    write_string(out, r.subject_a);
    write_string(out, r.subject_b);
    write_string(out, r.tool);
    write_raw(out, r.embedding.data(), sizeof(double) * r.embedding.size());
  }
  require(out.good(), ErrorCode::Io, "write to '" + path + "' failed");
}

}  // namespace

EmbeddingSet load_embeddings(const std::string& path, FileFormat format) {
  return format == FileFormat::Csv ? load_csv(path) : load_binary(path);
}

void save_embeddings(const EmbeddingSet& set, const std::string& path, FileFormat format) {
  validate(set);
  if (format == FileFormat::Csv) {
    save_csv(set, path);
  } else {
    save_binary(set, path);
  }
}

}  // namespace tetra
