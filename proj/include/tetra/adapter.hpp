#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "tetra/autodiff.hpp"
#include "tetra/embedding.hpp"
#include "tetra/matrix.hpp"

namespace tetra {

struct LinearLayer {
  Matrix weight;  // [dim x dim]
  Matrix bias;    // [1 x dim]

  bool operator==(const LinearLayer&) const = default;
};

// Shallow embedding adapter: four dim->dim fully connected layers, each
// followed by batch normalization; a leaky rectifier follows the first three.
// Output is the same size as the input and is normalized by callers at
// comparison/loss time, not here.
struct Adapter {
  std::size_t dim = 0;
  double leaky_slope = 0.01;
  std::array<LinearLayer, 4> layers;
  std::array<BatchNormState, 4> bn;

  bool operator==(const Adapter&) const = default;
};

// Rectifier-aware init: weights ~ N(0, 2 / ((1 + slope^2) * dim)), biases 0,
// gamma 1, beta 0, running stats (0, 1). Deterministic per seed.
Adapter init_adapter(std::size_t dim, std::uint64_t seed, double leaky_slope = 0.01);

// Parameter handles registered on a tape for one training step. The same
// handles are reused when the adapter is applied to several inputs in a step,
// so gradients from every application accumulate together.
struct AdapterVars {
  std::array<Var, 4> weight, bias, gamma, beta;
};

AdapterVars register_adapter_params(Tape& tape, const Adapter& a);

// Train-mode stack (linear -> BN -> leaky relu, x3; linear -> BN). Updates
// the adapter's BN running statistics from the batch statistics.
Var adapter_forward_train(Tape& tape, Adapter& a, const AdapterVars& vars, Var x);

// Eval-mode forward pass: running statistics, no mutation, no tape.
Matrix adapter_forward_eval(const Adapter& a, const Matrix& x);

// Eval-mode forward of one embedding followed by normalization.
Embedding transform(const Adapter& a, const Embedding& e);

// Trainable parameters (weights, biases, gamma, beta) as one flat vector, in
// a fixed order shared with gather_adapter_grads.
std::vector<double> flatten_trainable(const Adapter& a);
void unflatten_trainable(Adapter& a, std::span<const double> theta);
std::vector<double> gather_adapter_grads(const Tape& tape, const AdapterVars& vars);

// Checkpoint file: magic TETR1, dim, slope, then per layer W, b, gamma, beta,
// running mean/var, BN momentum and epsilon, all little-endian f64.
void save_checkpoint(const Adapter& a, const std::string& path);
Adapter load_checkpoint(const std::string& path);

}  // namespace tetra
