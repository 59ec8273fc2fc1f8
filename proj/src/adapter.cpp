#include "tetra/adapter.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "tetra/error.hpp"
#include "tetra/rng.hpp"

namespace tetra {

Adapter init_adapter(std::size_t dim, std::uint64_t seed, double leaky_slope) {
  require(dim >= 1, ErrorCode::ConfigInvalid, "adapter dim must be >= 1");
  require(leaky_slope > 0.0 && leaky_slope < 1.0, ErrorCode::ConfigInvalid,
          "leaky slope must lie in (0, 1)");
  Adapter a;
  a.dim = dim;
  a.leaky_slope = leaky_slope;
  const double stddev =
      std::sqrt(2.0 / ((1.0 + leaky_slope * leaky_slope) * static_cast<double>(dim)));
  Rng rng(mix_seed(seed, 0x61646170ull));  // adapter-init substream
  for (std::size_t l = 0; l < 4; ++l) {
    a.layers[l].weight = Matrix(dim, dim);
    a.layers[l].bias = Matrix(1, dim);
    for (std::size_t i = 0; i < dim * dim; ++i) {
      a.layers[l].weight.data()[i] = rng.gaussian(0.0, stddev);
    }
    a.bn[l] = BatchNormState::make(dim);
  }
  return a;
}

AdapterVars register_adapter_params(Tape& tape, const Adapter& a) {
  AdapterVars v;
  for (std::size_t l = 0; l < 4; ++l) {
    v.weight[l] = tape.param(a.layers[l].weight);
    v.bias[l] = tape.param(a.layers[l].bias);
    Matrix gamma(1, a.dim), beta(1, a.dim);
    for (std::size_t j = 0; j < a.dim; ++j) {
      gamma(0, j) = a.bn[l].gamma[j];
      beta(0, j) = a.bn[l].beta[j];
    }
    v.gamma[l] = tape.param(std::move(gamma));
    v.beta[l] = tape.param(std::move(beta));
  }
  return v;
}

Var adapter_forward_train(Tape& tape, Adapter& a, const AdapterVars& vars, Var x) {
  require(tape.value(x).cols() == a.dim, ErrorCode::DimensionMismatch,
          "adapter input width does not match adapter dim");
  Var h = x;
  for (std::size_t l = 0; l < 4; ++l) {
    h = tape.linear(h, vars.weight[l], vars.bias[l]);
    std::vector<double> mean, var;
    h = tape.batch_norm_train(h, vars.gamma[l], vars.beta[l], a.bn[l].epsilon, &mean, &var);
    BatchNormState& bn = a.bn[l];
    for (std::size_t j = 0; j < a.dim; ++j) {
      bn.running_mean[j] = (1.0 - bn.momentum) * bn.running_mean[j] + bn.momentum * mean[j];
      bn.running_var[j] = (1.0 - bn.momentum) * bn.running_var[j] + bn.momentum * var[j];
    }
    if (l < 3) h = tape.leaky_relu(h, a.leaky_slope);
  }
  return h;
}

Matrix adapter_forward_eval(const Adapter& a, const Matrix& x) {
  require(x.cols() == a.dim, ErrorCode::DimensionMismatch,
          "adapter input width does not match adapter dim");
  Matrix h = x;
  for (std::size_t l = 0; l < 4; ++l) {
    const LinearLayer& lin = a.layers[l];
    h = matmul_nt(h, lin.weight);
    const BatchNormState& bn = a.bn[l];
    for (std::size_t i = 0; i < h.rows(); ++i) {
      for (std::size_t j = 0; j < a.dim; ++j) {
        const double z = h(i, j) + lin.bias(0, j);
        const double xhat = (z - bn.running_mean[j]) / std::sqrt(bn.running_var[j] + bn.epsilon);
        double y = bn.gamma[j] * xhat + bn.beta[j];
        if (l < 3 && y < 0.0) y *= a.leaky_slope;
        h(i, j) = y;
      }
    }
  }
  return h;
}

Embedding transform(const Adapter& a, const Embedding& e) {
  require(e.size() == a.dim, ErrorCode::DimensionMismatch,
          "embedding length does not match adapter dim");
  Matrix x(1, a.dim);
  std::copy(e.begin(), e.end(), x.data());
  const Matrix y = adapter_forward_eval(a, x);
  Embedding out(y.data(), y.data() + a.dim);
  return normalize(out);
}

std::vector<double> flatten_trainable(const Adapter& a) {
  std::vector<double> theta;
  theta.reserve(4 * (a.dim * a.dim + 3 * a.dim));
  for (std::size_t l = 0; l < 4; ++l) {
    const Matrix& w = a.layers[l].weight;
    theta.insert(theta.end(), w.data(), w.data() + w.size());
    const Matrix& b = a.layers[l].bias;
    theta.insert(theta.end(), b.data(), b.data() + b.size());
    theta.insert(theta.end(), a.bn[l].gamma.begin(), a.bn[l].gamma.end());
    theta.insert(theta.end(), a.bn[l].beta.begin(), a.bn[l].beta.end());
  }
  return theta;
}

void unflatten_trainable(Adapter& a, std::span<const double> theta) {
  require(theta.size() == 4 * (a.dim * a.dim + 3 * a.dim), ErrorCode::DimensionMismatch,
          "flat parameter vector has the wrong length");
  std::size_t at = 0;
  for (std::size_t l = 0; l < 4; ++l) {
    Matrix& w = a.layers[l].weight;
    std::copy(theta.begin() + at, theta.begin() + at + w.size(), w.data());
    at += w.size();
    Matrix& b = a.layers[l].bias;
    std::copy(theta.begin() + at, theta.begin() + at + b.size(), b.data());
    at += b.size();
    std::copy(theta.begin() + at, theta.begin() + at + a.dim, a.bn[l].gamma.begin());
    at += a.dim;
    std::copy(theta.begin() + at, theta.begin() + at + a.dim, a.bn[l].beta.begin());
    at += a.dim;
  }
}

std::vector<double> gather_adapter_grads(const Tape& tape, const AdapterVars& vars) {
  std::vector<double> g;
  for (std::size_t l = 0; l < 4; ++l) {
    const Matrix& gw = tape.grad(vars.weight[l]);
    g.insert(g.end(), gw.data(), gw.data() + gw.size());
    const Matrix& gb = tape.grad(vars.bias[l]);
    g.insert(g.end(), gb.data(), gb.data() + gb.size());
    const Matrix& gg = tape.grad(vars.gamma[l]);
    g.insert(g.end(), gg.data(), gg.data() + gg.size());
    const Matrix& gbeta = tape.grad(vars.beta[l]);
    g.insert(g.end(), gbeta.data(), gbeta.data() + gbeta.size());
  }
  return g;
}

namespace {

constexpr char kCheckpointMagic[5] = {'T', 'E', 'T', 'R', '1'};

void write_doubles(std::ofstream& out, const double* p, std::size_t n) {
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_doubles(std::ifstream& in, double* p, std::size_t n, const std::string& path) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  require(in.gcount() == static_cast<std::streamsize>(n * sizeof(double)), ErrorCode::Format,
          "checkpoint '" + path + "' is truncated");
}

}  // namespace

void save_checkpoint(const Adapter& a, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::Io, "cannot open '" + path + "' for writing");
  out.write(kCheckpointMagic, 5);
  const std::uint32_t dim = static_cast<std::uint32_t>(a.dim);
  out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
  write_doubles(out, &a.leaky_slope, 1);
  for (std::size_t l = 0; l < 4; ++l) {
    write_doubles(out, a.layers[l].weight.data(), a.dim * a.dim);
    write_doubles(out, a.layers[l].bias.data(), a.dim);
    write_doubles(out, a.bn[l].gamma.data(), a.dim);
    write_doubles(out, a.bn[l].beta.data(), a.dim);
    write_doubles(out, a.bn[l].running_mean.data(), a.dim);
    write_doubles(out, a.bn[l].running_var.data(), a.dim);
    write_doubles(out, &a.bn[l].momentum, 1);
    write_doubles(out, &a.bn[l].epsilon, 1);
  }
  require(out.good(), ErrorCode::Io, "write to '" + path + "' failed");
}

Adapter load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot open '" + path + "' for reading");
  char magic[5];
  in.read(magic, 5);
  require(in.gcount() == 5 && std::memcmp(magic, kCheckpointMagic, 5) == 0, ErrorCode::Format,
          "'" + path + "' is not an adapter checkpoint");
  std::uint32_t dim = 0;
  in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
  require(in.gcount() == sizeof(dim) && dim > 0, ErrorCode::Format,
          "checkpoint '" + path + "' has a bad dim");
  Adapter a;
  a.dim = dim;
  read_doubles(in, &a.leaky_slope, 1, path);
  for (std::size_t l = 0; l < 4; ++l) {
    a.layers[l].weight = Matrix(dim, dim);
    a.layers[l].bias = Matrix(1, dim);
    a.bn[l] = BatchNormState::make(dim);
    read_doubles(in, a.layers[l].weight.data(), a.dim * a.dim, path);
    read_doubles(in, a.layers[l].bias.data(), a.dim, path);
    read_doubles(in, a.bn[l].gamma.data(), a.dim, path);
    read_doubles(in, a.bn[l].beta.data(), a.dim, path);
    read_doubles(in, a.bn[l].running_mean.data(), a.dim, path);
    read_doubles(in, a.bn[l].running_var.data(), a.dim, path);
    read_doubles(in, &a.bn[l].momentum, 1, path);
    read_doubles(in, &a.bn[l].epsilon, 1, path);
  }
  in.peek();
  require(in.eof(), ErrorCode::Format, "checkpoint '" + path + "' has trailing bytes");
  return a;
}

}  // namespace tetra
