#include "tetra/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "tetra/error.hpp"
#include "tetra/rng.hpp"

namespace tetra {

ComparisonPairs enumerate_pairs(const EmbeddingSet& set, const ScoreProtocol& protocol) {
  ComparisonPairs pairs;
  std::vector<std::size_t> refs, probes, morphs;
  for (std::size_t i = 0; i < set.records.size(); ++i) {
    switch (set.records[i].kind) {
      case SampleKind::Reference: refs.push_back(i); break;
      case SampleKind::Probe: probes.push_back(i); break;
      case SampleKind::Morph: morphs.push_back(i); break;
    }
  }
  for (const std::size_t r : refs) {
    for (const std::size_t p : probes) {
      if (set.records[r].subject_a == set.records[p].subject_a) {
        pairs.mated.push_back({r, p});
      } else {
        pairs.nonmated.push_back({r, p});
      }
    }
  }
  for (const std::size_t m : morphs) {
    const SampleRecord& rec = set.records[m];
    for (const std::size_t p : probes) {
      if (set.records[p].subject_a == rec.subject_a ||
          set.records[p].subject_a == rec.subject_b) {
        pairs.morph.push_back({m, p});
      }
    }
  }
  require(!pairs.mated.empty(), ErrorCode::EmptyProtocolCell, "no mated comparison pairs");
  require(!pairs.nonmated.empty(), ErrorCode::EmptyProtocolCell, "no non-mated comparison pairs");
  require(!pairs.morph.empty(), ErrorCode::EmptyProtocolCell, "no morph attack presentations");

  if (protocol.nonmated_cap && *protocol.nonmated_cap < pairs.nonmated.size()) {
    Rng rng(mix_seed(protocol.seed, 0x6e6d63ull));
    rng.shuffle(pairs.nonmated);
    pairs.nonmated.resize(*protocol.nonmated_cap);
  }
  return pairs;
}

namespace {

// left-side representation: adapted when an adapter is given, else unit-norm
class SideCache {
 public:
  SideCache(const Adapter* adapter, const EmbeddingSet& set, bool adapt)
      : adapter_(adapt ? adapter : nullptr), set_(set), cache_(set.records.size()) {}

  const Embedding& get(std::size_t i) {
    auto& slot = cache_[i];
    if (!slot) {
      slot = adapter_ ? transform(*adapter_, set_.records[i].embedding)
                      : normalize(set_.records[i].embedding);
    }
    return *slot;
  }

 private:
  const Adapter* adapter_;
  const EmbeddingSet& set_;
  std::vector<std::optional<Embedding>> cache_;
};

double similarity(const Embedding& a, const Embedding& b) { return 1.0 - sq_dist(a, b) / 4.0; }

}  // namespace

ScoreSet score_pairs(const Adapter* adapter, const EmbeddingSet& set,
                     const ComparisonPairs& pairs) {
  if (adapter) {
    require(adapter->dim == set.dim, ErrorCode::DimensionMismatch,
            "adapter dim does not match the embedding set");
  }
  SideCache left(adapter, set, /*adapt=*/true);
  SideCache right(nullptr, set, /*adapt=*/false);
  ScoreSet out;
  const auto score_class = [&](const std::vector<ComparisonPairs::Pair>& cls,
                               std::vector<double>& dst) {
    dst.reserve(cls.size());
    for (const auto& pr : cls) dst.push_back(similarity(left.get(pr.left), right.get(pr.right)));
  };
  score_class(pairs.mated, out.mated);
  score_class(pairs.nonmated, out.nonmated);
  score_class(pairs.morph, out.morph);
  return out;
}

ScoreSet score_comparisons(const Adapter* adapter, const EmbeddingSet& set,
                           const ScoreProtocol& protocol) {
  return score_pairs(adapter, set, enumerate_pairs(set, protocol));
}

namespace {

void check_scores_nonempty(const ScoreSet& s) {
  require(!s.mated.empty(), ErrorCode::EmptyScoreList, "no mated scores");
  require(!s.nonmated.empty(), ErrorCode::EmptyScoreList, "no non-mated scores");
  require(!s.morph.empty(), ErrorCode::EmptyScoreList, "no morph attack scores");
}

}  // namespace

Rates rates_at_threshold(const ScoreSet& scores, double tau) {
  check_scores_nonempty(scores);
  Rates r;
  std::size_t fm = 0, fnm = 0, acc = 0;
  for (const double s : scores.nonmated) fm += s >= tau;
  for (const double s : scores.mated) fnm += s < tau;
  for (const double s : scores.morph) acc += s >= tau;
  r.fmr = static_cast<double>(fm) / static_cast<double>(scores.nonmated.size());
  r.fnmr = static_cast<double>(fnm) / static_cast<double>(scores.mated.size());
  r.iapar = static_cast<double>(acc) / static_cast<double>(scores.morph.size());
  return r;
}

double threshold_at_fmr(const ScoreSet& scores, double target_fmr) {
  require(!scores.nonmated.empty(), ErrorCode::EmptyScoreList, "no non-mated scores");
  require(target_fmr >= 0.0 && target_fmr <= 1.0, ErrorCode::OutOfRangeInput,
          "FMR target must lie in [0, 1]");
  std::vector<double> sorted = scores.nonmated;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && sorted[i] == sorted[i - 1]) continue;  // same candidate threshold
    const double fmr = static_cast<double>(n - i) / static_cast<double>(n);
    if (fmr <= target_fmr) return sorted[i];
  }
  return sorted.back() + 1.0;  // above-max sentinel: FMR = 0
}

double riapar(double fnmr, double iapar) {
  require(fnmr >= 0.0 && fnmr <= 1.0, ErrorCode::OutOfRangeInput, "FNMR must lie in [0, 1]");
  require(iapar >= 0.0 && iapar <= 1.0, ErrorCode::OutOfRangeInput, "IAPAR must lie in [0, 1]");
  return fnmr + iapar;
}

std::vector<std::pair<double, double>> det_points(const ScoreSet& scores, std::size_t n_points) {
  require(n_points >= 2, ErrorCode::OutOfRangeInput, "a DET curve needs at least 2 points");
  require(!scores.mated.empty(), ErrorCode::EmptyScoreList, "no mated scores");
  require(!scores.nonmated.empty(), ErrorCode::EmptyScoreList, "no non-mated scores");
  std::vector<double> thresholds;
  thresholds.reserve(scores.mated.size() + scores.nonmated.size() + 1);
  thresholds.insert(thresholds.end(), scores.mated.begin(), scores.mated.end());
  thresholds.insert(thresholds.end(), scores.nonmated.begin(), scores.nonmated.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(thresholds.back() + 1.0);  // all-reject endpoint

  std::vector<double> mated = scores.mated, nonmated = scores.nonmated;
  std::sort(mated.begin(), mated.end());
  std::sort(nonmated.begin(), nonmated.end());
  std::vector<std::pair<double, double>> curve;
  for (const double t : thresholds) {
    const auto nm_below =
        std::lower_bound(nonmated.begin(), nonmated.end(), t) - nonmated.begin();
    const auto m_below = std::lower_bound(mated.begin(), mated.end(), t) - mated.begin();
    const double fmr = static_cast<double>(nonmated.size() - nm_below) /
                       static_cast<double>(nonmated.size());
    const double fnmr = static_cast<double>(m_below) / static_cast<double>(mated.size());
    if (curve.empty() || curve.back() != std::make_pair(fmr, fnmr)) {
      curve.emplace_back(fmr, fnmr);
    }
  }
  if (curve.size() <= n_points) return curve;
  std::vector<std::pair<double, double>> out;
  out.reserve(n_points);
  for (std::size_t k = 0; k < n_points; ++k) {
    const std::size_t i = k * (curve.size() - 1) / (n_points - 1);
    if (out.empty() || out.back() != curve[i]) out.push_back(curve[i]);
  }
  return out;
}

EvalReport build_report(const ScoreSet& scores, const std::vector<double>& fmr_targets) {
  check_scores_nonempty(scores);
  EvalReport rep;
  for (const double target : fmr_targets) {
    OperatingPoint p;
    p.fmr_target = target;
    p.threshold = threshold_at_fmr(scores, target);
    const Rates r = rates_at_threshold(scores, p.threshold);
    p.fmr = r.fmr;
    p.fnmr = r.fnmr;
    p.iapar = r.iapar;
    p.riapar = riapar(r.fnmr, r.iapar);
    rep.points.push_back(p);
  }
  return rep;
}

void export_difference_vectors(const Adapter* adapter, const EmbeddingSet& set,
                               std::size_t pairs_per_class, std::uint64_t seed,
                               const std::string& path) {
  const ComparisonPairs pairs = enumerate_pairs(set);
  SideCache left(adapter, set, /*adapt=*/true);
  SideCache right(nullptr, set, /*adapt=*/false);
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << "class";
  for (std::size_t i = 0; i < set.dim; ++i) out << ",d" << i;
  out << "\n";
  Rng rng(mix_seed(seed, 0x64696666ull));
  const auto dump_class = [&](std::vector<ComparisonPairs::Pair> cls, const char* label) {
    rng.shuffle(cls);
    const std::size_t n = std::min(pairs_per_class, cls.size());
    for (std::size_t k = 0; k < n; ++k) {
      const Embedding& a = left.get(cls[k].left);
      const Embedding& b = right.get(cls[k].right);
      out << label;
      for (std::size_t j = 0; j < set.dim; ++j) {
        const double d = a[j] - b[j];
        out << ',' << format_value(d * d);
      }
      out << "\n";
    }
  };
  dump_class(pairs.mated, "mated");
  dump_class(pairs.nonmated, "nonmated");
  dump_class(pairs.morph, "morph");
  require(out.good(), ErrorCode::Io, "write to '" + path + "' failed");
}

void save_scores(const ScoreSet& scores, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << "class,score\n";
  const auto dump = [&](const std::vector<double>& v, const char* label) {
    for (const double s : v) out << label << ',' << format_value(s) << "\n";
  };
  dump(scores.mated, "mated");
  dump(scores.nonmated, "nonmated");
  dump(scores.morph, "morph");
  require(out.good(), ErrorCode::Io, "write to '" + path + "' failed");
}

ScoreSet load_scores(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open '" + path + "' for reading");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::ParseError,
          "'" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "class,score", ErrorCode::ParseError,
          "unexpected score CSV header in '" + path + "'");
  ScoreSet scores;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    require(comma != std::string::npos, ErrorCode::ParseError,
            "line " + std::to_string(line_no) + " has no separator");
    const std::string cls = line.substr(0, comma);
    double v = 0.0;
    try {
      v = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      fail(ErrorCode::ParseError, "bad score on line " + std::to_string(line_no));
    }
    require(std::isfinite(v), ErrorCode::ParseError,
            "non-finite score on line " + std::to_string(line_no));
    if (cls == "mated") {
      scores.mated.push_back(v);
    } else if (cls == "nonmated") {
      scores.nonmated.push_back(v);
    } else if (cls == "morph") {
      scores.morph.push_back(v);
    } else {
      fail(ErrorCode::ParseError, "unknown score class '" + cls + "'");
    }
  }
  return scores;
}

void save_det_csv(const std::vector<std::pair<double, double>>& points, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << "fmr,fnmr\n";
  for (const auto& [fmr, fnmr] : points) {
    out << format_value(fmr) << ',' << format_value(fnmr) << "\n";
  }
  require(out.good(), ErrorCode::Io, "write to '" + path + "' failed");
}

}  // namespace tetra
