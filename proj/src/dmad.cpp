#include "tetra/dmad.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "tetra/error.hpp"
#include "tetra/rng.hpp"

namespace tetra {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

namespace {

double softplus(double t) {
  // log(1 + exp(t)) without overflow
  return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad_w;
  double grad_b = 0.0;
};

double model_loss(const DmadModel& m, const Matrix& bona, const Matrix& morph, double l2) {
  double loss = 0.0;
  const auto add_class = [&](const Matrix& x, double label) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double z = m.bias;
      for (std::size_t j = 0; j < x.cols(); ++j) z += m.weights[j] * x(i, j);
      loss += label > 0.5 ? softplus(-z) : softplus(z);
    }
  };
  add_class(bona, 1.0);
  add_class(morph, 0.0);
  loss /= static_cast<double>(bona.rows() + morph.rows());
  for (const double w : m.weights) loss += l2 * w * w;
  return loss;
}

LossAndGrad model_loss_and_grad(const DmadModel& m, const Matrix& bona, const Matrix& morph,
                                double l2) {
  LossAndGrad out;
  out.grad_w.assign(m.weights.size(), 0.0);
  const auto add_class = [&](const Matrix& x, double label) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double z = m.bias;
      for (std::size_t j = 0; j < x.cols(); ++j) z += m.weights[j] * x(i, j);
      out.loss += label > 0.5 ? softplus(-z) : softplus(z);
      const double dz = logistic(z) - label;
      for (std::size_t j = 0; j < x.cols(); ++j) out.grad_w[j] += dz * x(i, j);
      out.grad_b += dz;
    }
  };
  add_class(bona, 1.0);
  add_class(morph, 0.0);
  const double inv_m = 1.0 / static_cast<double>(bona.rows() + morph.rows());
  out.loss *= inv_m;
  out.grad_b *= inv_m;
  for (std::size_t j = 0; j < m.weights.size(); ++j) {
    out.grad_w[j] = out.grad_w[j] * inv_m + 2.0 * l2 * m.weights[j];
    out.loss += l2 * m.weights[j] * m.weights[j];
  }
  return out;
}

}  // namespace

DmadModel train_dmad(const Matrix& bona_features, const Matrix& morph_features,
                     const DmadConfig& config, std::uint64_t seed) {
  require(bona_features.rows() >= 1, ErrorCode::EmptyClass, "no bona fide training pairs");
  require(morph_features.rows() >= 1, ErrorCode::EmptyClass, "no morph training pairs");
  require(bona_features.cols() == morph_features.cols(), ErrorCode::DimensionMismatch,
          "feature widths differ between classes");
  require(config.learning_rate > 0.0 && config.epochs >= 1 && config.l2 >= 0.0,
          ErrorCode::ConfigInvalid, "bad detector training configuration");

  const std::size_t dim = bona_features.cols();
  DmadModel model;
  model.weights.resize(dim);
  Rng rng(mix_seed(seed, 0x646d6164ull));
  for (double& w : model.weights) w = rng.gaussian(0.0, 1e-3);

  double lr = config.learning_rate;
  double loss = model_loss(model, bona_features, morph_features, config.l2);
  require(std::isfinite(loss), ErrorCode::NonFiniteLoss, "initial detector loss is non-finite");
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const LossAndGrad lg = model_loss_and_grad(model, bona_features, morph_features, config.l2);
    DmadModel candidate = model;
    double new_loss = 0.0;
    while (true) {
      for (std::size_t j = 0; j < dim; ++j) {
        candidate.weights[j] = model.weights[j] - lr * lg.grad_w[j];
      }
      candidate.bias = model.bias - lr * lg.grad_b;
      new_loss = model_loss(candidate, bona_features, morph_features, config.l2);
      require(std::isfinite(new_loss), ErrorCode::NonFiniteLoss,
              "detector loss became non-finite");
      if (new_loss <= loss || lr < 1e-14) break;
      lr *= 0.5;  // backtrack: keep the loss monotone
    }
    if (new_loss > loss) break;  // no usable step size left
    model = candidate;
    loss = new_loss;
  }
  return model;
}

double dmad_score_diff(const DmadModel& model, std::span<const double> diff) {
  require(diff.size() == model.dim(), ErrorCode::DimensionMismatch,
          "difference vector length does not match the detector");
  double z = model.bias;
  for (std::size_t j = 0; j < diff.size(); ++j) z += model.weights[j] * diff[j];
  return logistic(z);
}

double dmad_score(const DmadModel& model, const Embedding& suspected, const Embedding& probe) {
  require(suspected.size() == probe.size(), ErrorCode::DimensionMismatch,
          "suspected/probe lengths differ");
  std::vector<double> diff(suspected.size());
  for (std::size_t j = 0; j < diff.size(); ++j) diff[j] = suspected[j] - probe[j];
  return dmad_score_diff(model, diff);
}

double fuse(double s_fr, double s_mad) {
  require(s_fr >= 0.0 && s_fr <= 1.0, ErrorCode::OutOfRangeInput,
          "recognition score must lie in [0, 1]");
  require(s_mad >= 0.0 && s_mad <= 1.0, ErrorCode::OutOfRangeInput,
          "detection score must lie in [0, 1]");
  return 0.5 * (s_fr + s_mad);
}

ScoreSet fuse_scores(const ScoreSet& fr, const ScoreSet& mad) {
  const auto fuse_class = [](const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() == b.size(), ErrorCode::DimensionMismatch,
            "score lists to fuse have different lengths");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = fuse(a[i], b[i]);
    return out;
  };
  ScoreSet out;
  out.mated = fuse_class(fr.mated, mad.mated);
  out.nonmated = fuse_class(fr.nonmated, mad.nonmated);
  out.morph = fuse_class(fr.morph, mad.morph);
  return out;
}

namespace {

Matrix difference_rows(const EmbeddingSet& set, const std::vector<ComparisonPairs::Pair>& pairs) {
  Matrix out(pairs.size(), set.dim);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Embedding left = normalize(set.records[pairs[i].left].embedding);
    const Embedding right = normalize(set.records[pairs[i].right].embedding);
    for (std::size_t j = 0; j < set.dim; ++j) out(i, j) = left[j] - right[j];
  }
  return out;
}

}  // namespace

DmadTrainingData dmad_training_features(const EmbeddingSet& set, const ComparisonPairs& pairs) {
  require(!pairs.mated.empty(), ErrorCode::EmptyClass, "no mated pairs for detector training");
  require(!pairs.morph.empty(), ErrorCode::EmptyClass, "no morph pairs for detector training");
  DmadTrainingData data;
  data.bona = difference_rows(set, pairs.mated);
  data.morph = difference_rows(set, pairs.morph);
  return data;
}

ScoreSet dmad_score_pairs(const DmadModel& model, const EmbeddingSet& set,
                          const ComparisonPairs& pairs) {
  require(model.dim() == set.dim, ErrorCode::DimensionMismatch,
          "detector dim does not match the embedding set");
  const auto score_class = [&](const std::vector<ComparisonPairs::Pair>& cls) {
    std::vector<double> out;
    out.reserve(cls.size());
    for (const auto& pr : cls) {
      out.push_back(dmad_score(model, normalize(set.records[pr.left].embedding),
                               normalize(set.records[pr.right].embedding)));
    }
    return out;
  };
  ScoreSet out;
  out.mated = score_class(pairs.mated);
  out.nonmated = score_class(pairs.nonmated);
  out.morph = score_class(pairs.morph);
  return out;
}

ScenarioReports evaluate_scenarios(const ScoreSet& original_scores, const ScoreSet& tetra_scores,
                                   const ScoreSet& mad_scores,
                                   const std::vector<double>& fmr_targets) {
  ScenarioReports reports;
  reports.original = build_report(original_scores, fmr_targets);
  reports.original_mad = build_report(fuse_scores(original_scores, mad_scores), fmr_targets);
  reports.tetra = build_report(tetra_scores, fmr_targets);
  reports.tetra_mad = build_report(fuse_scores(tetra_scores, mad_scores), fmr_targets);
  return reports;
}

namespace {

constexpr char kDmadMagic[5] = {'D', 'M', 'A', 'D', '1'};

}  // namespace

void save_dmad(const DmadModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::Io, "cannot open '" + path + "' for writing");
  out.write(kDmadMagic, 5);
  const std::uint32_t dim = static_cast<std::uint32_t>(model.dim());
  out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
  out.write(reinterpret_cast<const char*>(model.weights.data()),
            static_cast<std::streamsize>(sizeof(double) * model.weights.size()));
  out.write(reinterpret_cast<const char*>(&model.bias), sizeof(double));
  require(out.good(), ErrorCode::Io, "write to '" + path + "' failed");
}

DmadModel load_dmad(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot open '" + path + "' for reading");
  char magic[5];
  in.read(magic, 5);
  require(in.gcount() == 5 && std::memcmp(magic, kDmadMagic, 5) == 0, ErrorCode::Format,
          "'" + path + "' is not a detector checkpoint");
  std::uint32_t dim = 0;
  in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
  require(in.gcount() == sizeof(dim) && dim > 0, ErrorCode::Format,
          "detector checkpoint has a bad dim");
  DmadModel model;
  model.weights.resize(dim);
  in.read(reinterpret_cast<char*>(model.weights.data()),
          static_cast<std::streamsize>(sizeof(double) * dim));
  require(in.gcount() == static_cast<std::streamsize>(sizeof(double) * dim), ErrorCode::Format,
          "detector checkpoint is truncated");
  in.read(reinterpret_cast<char*>(&model.bias), sizeof(double));
  require(in.gcount() == sizeof(double), ErrorCode::Format, "detector checkpoint is truncated");
  in.peek();
  require(in.eof(), ErrorCode::Format, "detector checkpoint has trailing bytes");
  return model;
}

}  // namespace tetra
