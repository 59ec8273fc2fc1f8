#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tetra/adapter.hpp"
#include "tetra/embedding.hpp"
#include "tetra/losses.hpp"

namespace tetra {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  double learning_rate = 0.1;
  double momentum = 0.9;  // Nesterov
  double decay_coefficient = 0.1;
  std::size_t decay_period_epochs = 3;
  std::size_t patience_epochs = 10;
  double margin = 3.0;
  Scenario scenario = Scenario::Tetra;
  DistanceForm distance = DistanceForm::Euclidean;
  std::uint64_t seed = 1;
};

void validate(const TrainConfig& config);

struct OptimizerState {
  std::vector<double> velocity;  // same length/order as the flat parameters
};

// v <- mu*v + g;  theta <- theta - lr*(g + mu*v)
void sgd_nesterov_step(std::vector<double>& theta, const std::vector<double>& grads,
                       OptimizerState& state, double lr, double mu);

// Multiplicative shrink of the linear weights only; biases, gamma and beta
// are untouched. Applied at the end of every decay_period-th epoch.
void apply_weight_decay(Adapter& a, double coefficient);

// Tracks the best validation loss; signals a stop after `patience` epochs
// without an improvement larger than `min_improvement` (ties keep the
// earlier epoch).
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience, double min_improvement = 1e-6)
      : patience_(patience), min_improvement_(min_improvement) {}

  // feeds one epoch's validation loss; true means stop after this epoch
  bool observe(double val_loss) {
    ++epoch_;
    if (best_ - val_loss > min_improvement_) {
      best_ = val_loss;
      best_epoch_ = epoch_;
      streak_ = 0;
    } else {
      ++streak_;
    }
    return streak_ >= patience_;
  }

  bool improved_last() const { return streak_ == 0; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  double min_improvement_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t epoch_ = 0, best_epoch_ = 0, streak_ = 0;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool decayed = false;
  bool stopped = false;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

struct TrainResult {
  Adapter best;
  TrainHistory history;
};

// Full loop: per-epoch quadruplet rebuild (negatives re-drawn), seeded batch
// shuffle, SGD with Nesterov momentum, periodic weight decay, validation on a
// fixed quadruplet set in eval mode, early stopping, best-epoch checkpoint.
// Deterministic for a fixed (config, data) pair.
TrainResult train(const TrainConfig& config, const EmbeddingSet& train_set,
                  const EmbeddingSet& val_set);

// CSV: epoch,train_loss,val_loss,decayed,stopped
void save_history_csv(const TrainHistory& history, const std::string& path);

}  // namespace tetra
