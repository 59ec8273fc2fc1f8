#include "tetra/trainer.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "tetra/error.hpp"
#include "tetra/mining.hpp"
#include "tetra/rng.hpp"

namespace tetra {

void validate(const TrainConfig& c) {
  require(c.epochs >= 1, ErrorCode::ConfigInvalid, "epochs must be >= 1");
  require(c.batch_size >= 1, ErrorCode::ConfigInvalid, "batch size must be >= 1");
  require(c.learning_rate > 0.0, ErrorCode::ConfigInvalid, "learning rate must be > 0");
  require(c.momentum >= 0.0 && c.momentum < 1.0, ErrorCode::ConfigInvalid,
          "momentum must lie in [0, 1)");
  require(c.decay_coefficient >= 0.0 && c.decay_coefficient < 1.0, ErrorCode::ConfigInvalid,
          "decay coefficient must lie in [0, 1)");
  require(c.decay_period_epochs >= 1, ErrorCode::ConfigInvalid, "decay period must be >= 1");
  require(c.patience_epochs >= 1 && c.patience_epochs <= c.epochs, ErrorCode::ConfigInvalid,
          "patience must lie in [1, epochs]");
  require(c.margin >= 0.0, ErrorCode::ConfigInvalid, "margin must be >= 0");
}

void sgd_nesterov_step(std::vector<double>& theta, const std::vector<double>& grads,
                       OptimizerState& state, double lr, double mu) {
  require(theta.size() == grads.size(), ErrorCode::DimensionMismatch,
          "gradient length does not match parameter length");
  if (state.velocity.empty()) state.velocity.assign(theta.size(), 0.0);
  require(state.velocity.size() == theta.size(), ErrorCode::DimensionMismatch,
          "velocity length does not match parameter length");
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grads[i];
    require(std::isfinite(g), ErrorCode::NonFiniteGradient, "non-finite gradient entry");
    double& v = state.velocity[i];
    v = mu * v + g;
    theta[i] -= lr * (g + mu * v);
    require(std::isfinite(v) && std::isfinite(theta[i]), ErrorCode::NonFiniteGradient,
            "optimizer state became non-finite");
  }
}

void apply_weight_decay(Adapter& a, double coefficient) {
  require(coefficient >= 0.0 && coefficient < 1.0, ErrorCode::OutOfRangeInput,
          "decay coefficient must lie in [0, 1)");
  for (LinearLayer& layer : a.layers) {
    for (std::size_t i = 0; i < layer.weight.size(); ++i) {
      layer.weight.data()[i] *= 1.0 - coefficient;
    }
  }
}

namespace {

constexpr std::uint64_t kQuadStream = 0x65706f71ull;    // per-epoch quadruplets
constexpr std::uint64_t kBatchStream = 0x65706f62ull;   // per-epoch batch order
constexpr std::uint64_t kSecondStream = 0x65706f32ull;  // per-epoch second-subject rows
constexpr std::uint64_t kValStream = 0x76616c71ull;     // fixed validation quadruplets

// Which blocks go through the adapter for a scenario, in this fixed order:
// anchor, negative (tetra only), morph, second anchor (*2 only).
struct ForwardLayout {
  bool negative = false;
  bool second = false;
};

ForwardLayout layout_for(Scenario s) {
  ForwardLayout l;
  l.negative = s == Scenario::Tetra || s == Scenario::Tetra2;
  l.second = needs_second_subject(s);
  return l;
}

Matrix stack_sources(const BatchSources& src, const ForwardLayout& l) {
  std::vector<const Matrix*> parts{&src.anchor_src};
  if (l.negative) parts.push_back(&src.negative_src);
  parts.push_back(&src.morph_src);
  if (l.second) parts.push_back(&*src.anchor2_src);
  return vstack(parts);
}

Matrix row_normalize_copy(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (const double v : m.row(i)) s += v * v;
    const double n = std::sqrt(s);
    require(n >= 1e-12, ErrorCode::ZeroVector, "adapter produced a (near-)zero embedding");
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) / n;
  }
  return out;
}

double batch_loss_and_grads(Adapter& adapter, const LossConfig& loss, const BatchSources& src,
                            std::vector<double>* grads_out) {
  const ForwardLayout l = layout_for(loss.scenario);
  const std::size_t n = src.size();
  Tape tape;
  const AdapterVars vars = register_adapter_params(tape, adapter);
  const Var x = tape.constant(stack_sources(src, l));
  const Var h = adapter_forward_train(tape, adapter, vars, x);

  std::size_t at = 0;
  QuadrupletBatchVars batch;
  batch.anchor = tape.row_normalize(tape.slice_rows(h, at, n));
  at += n;
  if (l.negative) {
    batch.negative = tape.row_normalize(tape.slice_rows(h, at, n));
    at += n;
  }
  batch.morph = tape.row_normalize(tape.slice_rows(h, at, n));
  at += n;
  if (l.second) {
    batch.anchor2 = tape.row_normalize(tape.slice_rows(h, at, n));
    batch.positive2 = tape.constant(*src.positive2_unit);
  }
  batch.positive = tape.constant(src.positive_unit);

  const Var loss_var = scenario_loss_op(tape, loss, batch);
  const double value = tape.value(loss_var)(0, 0);
  require(std::isfinite(value), ErrorCode::NonFiniteLoss, "training loss is non-finite");
  if (grads_out) {
    tape.backward(loss_var);
    *grads_out = gather_adapter_grads(tape, vars);
  }
  return value;
}

double eval_loss(const Adapter& adapter, const LossConfig& loss, const BatchSources& src) {
  const ForwardLayout l = layout_for(loss.scenario);
  const std::size_t n = src.size();
  const Matrix h = adapter_forward_eval(adapter, stack_sources(src, l));

  std::size_t at = 0;
  QuadrupletBatch batch;
  batch.anchor = row_normalize_copy(slice_rows_copy(h, at, n));
  at += n;
  if (l.negative) {
    batch.negative = row_normalize_copy(slice_rows_copy(h, at, n));
    at += n;
  }
  batch.morph = row_normalize_copy(slice_rows_copy(h, at, n));
  at += n;
  if (l.second) {
    batch.anchor2 = row_normalize_copy(slice_rows_copy(h, at, n));
    batch.positive2 = *src.positive2_unit;
  }
  batch.positive = src.positive_unit;
  return scenario_loss(loss, batch);
}

std::vector<QuadrupletRef> epoch_quadruplets(const EmbeddingSet& set, const SubjectIndex& idx,
                                             Scenario scenario, std::uint64_t seed,
                                             const char* which) {
  std::vector<QuadrupletRef> quads = build_quadruplets(set, idx, seed);
  if (needs_second_subject(scenario)) {
    quads = filter_second_subject_eligible(idx, quads);
    require(!quads.empty(), ErrorCode::NoValidQuadruplets,
            std::string(which) +
                " set has no quadruplet whose second subject has a reference and a probe");
  }
  return quads;
}

}  // namespace

TrainResult train(const TrainConfig& config, const EmbeddingSet& train_set,
                  const EmbeddingSet& val_set) {
  validate(config);
  require(train_set.dim == val_set.dim, ErrorCode::DimensionMismatch,
          "train and validation sets have different dims");
  const LossConfig loss{config.margin, config.scenario, config.distance};
  const SubjectIndex train_idx = build_index(train_set);
  const SubjectIndex val_idx = build_index(val_set);

  // one fixed validation batch, evaluated in eval mode every epoch
  const std::vector<QuadrupletRef> val_quads = epoch_quadruplets(
      val_set, val_idx, config.scenario, mix_seed(config.seed, kValStream), "validation");
  std::vector<std::size_t> val_indices(val_quads.size());
  for (std::size_t i = 0; i < val_indices.size(); ++i) val_indices[i] = i;
  Rng val_rng(mix_seed(config.seed, kValStream, 1));
  const BatchSources val_sources =
      materialize_batch(val_set, val_idx, val_quads, val_indices,
                        needs_second_subject(config.scenario), val_rng);

  Adapter adapter = init_adapter(train_set.dim, config.seed);
  std::vector<double> theta = flatten_trainable(adapter);
  OptimizerState optimizer;

  TrainResult result;
  EarlyStopper stopper(config.patience_epochs);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::vector<QuadrupletRef> quads = epoch_quadruplets(
        train_set, train_idx, config.scenario, mix_seed(config.seed, kQuadStream, epoch),
        "train");
    Rng batch_rng(mix_seed(config.seed, kBatchStream, epoch));
    const auto batches = sample_epoch_batches(quads, config.batch_size, batch_rng);
    require(!batches.empty(), ErrorCode::NoValidQuadruplets,
            "train set yields no batch of at least 2 quadruplets");
    Rng second_rng(mix_seed(config.seed, kSecondStream, epoch));

    double loss_sum = 0.0;
    std::size_t quad_count = 0;
    for (const auto& batch_indices : batches) {
      const BatchSources src =
          materialize_batch(train_set, train_idx, quads, batch_indices,
                            needs_second_subject(config.scenario), second_rng);
      std::vector<double> grads;
      double value = 0.0;
      try {
        value = batch_loss_and_grads(adapter, loss, src, &grads);
        sgd_nesterov_step(theta, grads, optimizer, config.learning_rate, config.momentum);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::NonFiniteGradient || e.code() == ErrorCode::NonFiniteLoss) {
          fail(e.code(), std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")");
        }
        throw;
      }
      unflatten_trainable(adapter, theta);
      loss_sum += value * static_cast<double>(batch_indices.size());
      quad_count += batch_indices.size();
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(quad_count);
    stats.decayed = epoch % config.decay_period_epochs == 0 && config.decay_coefficient > 0.0;
    if (stats.decayed) {
      apply_weight_decay(adapter, config.decay_coefficient);
      theta = flatten_trainable(adapter);
    }

    stats.val_loss = eval_loss(adapter, loss, val_sources);
    stats.stopped = stopper.observe(stats.val_loss);
    if (stopper.improved_last()) {
      result.best = adapter;
      result.history.best_epoch = stopper.best_epoch();
      result.history.best_val_loss = stopper.best();
    }
    result.history.epochs.push_back(stats);
    if (stats.stopped) break;
  }
  return result;
}

void save_history_csv(const TrainHistory& history, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << "epoch,train_loss,val_loss,decayed,stopped\n";
  for (const EpochStats& e : history.epochs) {
    out << e.epoch << ',' << format_value(e.train_loss) << ',' << format_value(e.val_loss) << ','
        << (e.decayed ? 1 : 0) << ',' << (e.stopped ? 1 : 0) << "\n";
  }
  require(out.good(), ErrorCode::Io, "write to '" + path + "' failed");
}

}  // namespace tetra
