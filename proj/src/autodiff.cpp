#include "tetra/autodiff.hpp"

#include <cmath>

#include "tetra/error.hpp"

namespace tetra {

BatchNormState BatchNormState::make(std::size_t features) {
  BatchNormState s;
  s.gamma.assign(features, 1.0);
  s.beta.assign(features, 0.0);
  s.running_mean.assign(features, 0.0);
  s.running_var.assign(features, 1.0);
  return s;
}

namespace {

void add_into(Matrix& dst, const Matrix& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += src.data()[i];
}

}  // namespace

Var Tape::push(Matrix value, std::function<void()> backprop) {
  Node n;
  n.grad = Matrix(value.rows(), value.cols());
  n.value = std::move(value);
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Matrix v) { return push(std::move(v), {}); }
Var Tape::param(Matrix v) { return push(std::move(v), {}); }

Var Tape::linear(Var x, Var w, Var b) {
  const Matrix& xv = value(x);
  const Matrix& wv = value(w);
  const Matrix& bv = value(b);
  require(xv.cols() == wv.cols(), ErrorCode::DimensionMismatch,
          "linear: input width does not match weight width");
  require(bv.rows() == 1 && bv.cols() == wv.rows(), ErrorCode::DimensionMismatch,
          "linear: bias length does not match output width");
  Matrix y = matmul_nt(xv, wv);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += bv(0, j);
  }
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(y), [this, x, w, b, out] {
    const Matrix& gy = grad_ref(out.id);
    add_into(grad_ref(x.id), matmul_nn(gy, value(w)));
    add_into(grad_ref(w.id), matmul_tn(gy, value(x)));
    Matrix& gb = grad_ref(b.id);
    for (std::size_t i = 0; i < gy.rows(); ++i) {
      for (std::size_t j = 0; j < gy.cols(); ++j) gb(0, j) += gy(i, j);
    }
  });
}

Var Tape::batch_norm_train(Var x, Var gamma, Var beta, double epsilon,
                           std::vector<double>* mean_out, std::vector<double>* var_out) {
  const Matrix& xv = value(x);
  const std::size_t batch = xv.rows(), feat = xv.cols();
  require(batch >= 2, ErrorCode::BatchTooSmall,
          "train-mode batch normalization needs a batch of at least 2");
  require(value(gamma).cols() == feat && value(beta).cols() == feat,
          ErrorCode::DimensionMismatch, "batch_norm: parameter width mismatch");

  std::vector<double> mean(feat, 0.0), var(feat, 0.0), inv_std(feat, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t j = 0; j < feat; ++j) mean[j] += xv(i, j);
  }
  for (std::size_t j = 0; j < feat; ++j) mean[j] /= static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t j = 0; j < feat; ++j) {
      const double d = xv(i, j) - mean[j];
      var[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < feat; ++j) {
    var[j] /= static_cast<double>(batch);  // biased variance
    inv_std[j] = 1.0 / std::sqrt(var[j] + epsilon);
  }
  if (mean_out) *mean_out = mean;
  if (var_out) *var_out = var;

  Matrix xhat(batch, feat);
  Matrix y(batch, feat);
  const Matrix& gv = value(gamma);
  const Matrix& bv = value(beta);
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t j = 0; j < feat; ++j) {
      xhat(i, j) = (xv(i, j) - mean[j]) * inv_std[j];
      y(i, j) = gv(0, j) * xhat(i, j) + bv(0, j);
    }
  }

  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(y), [this, x, gamma, beta, out, xhat, inv_std] {
    const Matrix& gy = grad_ref(out.id);
    const Matrix& gv = value(gamma);
    const std::size_t batch = gy.rows(), feat = gy.cols();
    Matrix& gx = grad_ref(x.id);
    Matrix& ggamma = grad_ref(gamma.id);
    Matrix& gbeta = grad_ref(beta.id);

    std::vector<double> sum_gxhat(feat, 0.0), sum_gxhat_xhat(feat, 0.0);
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t j = 0; j < feat; ++j) {
        const double gxhat = gy(i, j) * gv(0, j);
        sum_gxhat[j] += gxhat;
        sum_gxhat_xhat[j] += gxhat * xhat(i, j);
        ggamma(0, j) += gy(i, j) * xhat(i, j);
        gbeta(0, j) += gy(i, j);
      }
    }
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t j = 0; j < feat; ++j) {
        const double gxhat = gy(i, j) * gv(0, j);
        gx(i, j) += inv_std[j] * inv_b *
                    (static_cast<double>(batch) * gxhat - sum_gxhat[j] -
                     xhat(i, j) * sum_gxhat_xhat[j]);
      }
    }
  });
}

Var Tape::batch_norm_eval(Var x, Var gamma, Var beta, const std::vector<double>& mean,
                          const std::vector<double>& var, double epsilon) {
  const Matrix& xv = value(x);
  const std::size_t batch = xv.rows(), feat = xv.cols();
  require(mean.size() == feat && var.size() == feat, ErrorCode::DimensionMismatch,
          "batch_norm_eval: statistics width mismatch");
  std::vector<double> inv_std(feat);
  for (std::size_t j = 0; j < feat; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + epsilon);

  Matrix xhat(batch, feat);
  Matrix y(batch, feat);
  const Matrix& gv = value(gamma);
  const Matrix& bv = value(beta);
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t j = 0; j < feat; ++j) {
      xhat(i, j) = (xv(i, j) - mean[j]) * inv_std[j];
      y(i, j) = gv(0, j) * xhat(i, j) + bv(0, j);
    }
  }
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(y), [this, x, gamma, beta, out, xhat, inv_std] {
    const Matrix& gy = grad_ref(out.id);
    const Matrix& gv = value(gamma);
    Matrix& gx = grad_ref(x.id);
    Matrix& ggamma = grad_ref(gamma.id);
    Matrix& gbeta = grad_ref(beta.id);
    for (std::size_t i = 0; i < gy.rows(); ++i) {
      for (std::size_t j = 0; j < gy.cols(); ++j) {
        gx(i, j) += gy(i, j) * gv(0, j) * inv_std[j];
        ggamma(0, j) += gy(i, j) * xhat(i, j);
        gbeta(0, j) += gy(i, j);
      }
    }
  });
}

Var Tape::leaky_relu(Var x, double slope) {
  require(slope > 0.0 && slope < 1.0, ErrorCode::OutOfRangeInput,
          "leaky_relu slope must lie in (0, 1)");
  const Matrix& xv = value(x);
  Matrix y(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv.data()[i];
    y.data()[i] = v >= 0.0 ? v : slope * v;
  }
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(y), [this, x, out, slope] {
    const Matrix& gy = grad_ref(out.id);
    const Matrix& xv = value(x);
    Matrix& gx = grad_ref(x.id);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      gx.data()[i] += xv.data()[i] >= 0.0 ? gy.data()[i] : slope * gy.data()[i];
    }
  });
}

Var Tape::row_normalize(Var x) {
  const Matrix& xv = value(x);
  std::vector<double> norms(xv.rows());
  Matrix y(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    double s = 0.0;
    for (double v : xv.row(i)) s += v * v;
    const double n = std::sqrt(s);
    require(n >= 1e-12, ErrorCode::ZeroVector, "row_normalize: (near-)zero row");
    norms[i] = n;
    for (std::size_t j = 0; j < xv.cols(); ++j) y(i, j) = xv(i, j) / n;
  }
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(y), [this, x, out, norms] {
    const Matrix& gy = grad_ref(out.id);
    const Matrix& yv = value(out);
    Matrix& gx = grad_ref(x.id);
    for (std::size_t i = 0; i < gy.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < gy.cols(); ++j) dot += gy(i, j) * yv(i, j);
      for (std::size_t j = 0; j < gy.cols(); ++j) {
        gx(i, j) += (gy(i, j) - yv(i, j) * dot) / norms[i];
      }
    }
  });
}

Var Tape::slice_rows(Var x, std::size_t begin, std::size_t count) {
  Matrix y = slice_rows_copy(value(x), begin, count);
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(y), [this, x, out, begin, count] {
    const Matrix& gy = grad_ref(out.id);
    Matrix& gx = grad_ref(x.id);
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t j = 0; j < gy.cols(); ++j) gx(begin + i, j) += gy(i, j);
    }
  });
}

Var Tape::row_sq_dist(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  require(av.same_shape(bv), ErrorCode::DimensionMismatch, "row_sq_dist: shape mismatch");
  Matrix y(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < av.cols(); ++j) {
      const double d = av(i, j) - bv(i, j);
      s += d * d;
    }
    y(i, 0) = s;
  }
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(y), [this, a, b, out] {
    const Matrix& gy = grad_ref(out.id);
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    Matrix& ga = grad_ref(a.id);
    Matrix& gb = grad_ref(b.id);
    for (std::size_t i = 0; i < av.rows(); ++i) {
      const double g2 = 2.0 * gy(i, 0);
      for (std::size_t j = 0; j < av.cols(); ++j) {
        const double d = av(i, j) - bv(i, j);
        ga(i, j) += g2 * d;
        gb(i, j) -= g2 * d;
      }
    }
  });
}

Var Tape::sqrt_elem(Var x) {
  const Matrix& xv = value(x);
  Matrix y(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    require(xv.data()[i] >= 0.0, ErrorCode::OutOfRangeInput, "sqrt of a negative value");
    y.data()[i] = std::sqrt(xv.data()[i]);
  }
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(y), [this, x, out] {
    const Matrix& gy = grad_ref(out.id);
    const Matrix& yv = value(out);
    Matrix& gx = grad_ref(x.id);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (yv.data()[i] > 1e-12) gx.data()[i] += gy.data()[i] / (2.0 * yv.data()[i]);
    }
  });
}

Var Tape::min_elem(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  require(av.same_shape(bv), ErrorCode::DimensionMismatch, "min_elem: shape mismatch");
  Matrix y(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) {
    y.data()[i] = av.data()[i] <= bv.data()[i] ? av.data()[i] : bv.data()[i];
  }
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(y), [this, a, b, out] {
    const Matrix& gy = grad_ref(out.id);
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    Matrix& ga = grad_ref(a.id);
    Matrix& gb = grad_ref(b.id);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (av.data()[i] <= bv.data()[i]) {
        ga.data()[i] += gy.data()[i];
      } else {
        gb.data()[i] += gy.data()[i];
      }
    }
  });
}

Var Tape::hinge(Var x) {
  const Matrix& xv = value(x);
  Matrix y(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    y.data()[i] = xv.data()[i] > 0.0 ? xv.data()[i] : 0.0;
  }
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(y), [this, x, out] {
    const Matrix& gy = grad_ref(out.id);
    const Matrix& xv = value(x);
    Matrix& gx = grad_ref(x.id);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (xv.data()[i] >= 0.0) gx.data()[i] += gy.data()[i];
    }
  });
}

Var Tape::add(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  require(av.same_shape(bv), ErrorCode::DimensionMismatch, "add: shape mismatch");
  Matrix y = av;
  add_into(y, bv);
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(y), [this, a, b, out] {
    add_into(grad_ref(a.id), grad_ref(out.id));
    add_into(grad_ref(b.id), grad_ref(out.id));
  });
}

Var Tape::sub(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  require(av.same_shape(bv), ErrorCode::DimensionMismatch, "sub: shape mismatch");
  Matrix y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] -= bv.data()[i];
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(y), [this, a, b, out] {
    const Matrix& gy = grad_ref(out.id);
    add_into(grad_ref(a.id), gy);
    Matrix& gb = grad_ref(b.id);
    for (std::size_t i = 0; i < gy.size(); ++i) gb.data()[i] -= gy.data()[i];
  });
}

Var Tape::add_scalar(Var x, double c) {
  Matrix y = value(x);
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] += c;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(y), [this, x, out] { add_into(grad_ref(x.id), grad_ref(out.id)); });
}

Var Tape::scale(Var x, double c) {
  Matrix y = value(x);
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] *= c;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(y), [this, x, out, c] {
    const Matrix& gy = grad_ref(out.id);
    Matrix& gx = grad_ref(x.id);
    for (std::size_t i = 0; i < gy.size(); ++i) gx.data()[i] += c * gy.data()[i];
  });
}

Var Tape::sum_all(Var x) {
  const Matrix& xv = value(x);
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv.data()[i];
  Matrix y(1, 1);
  y(0, 0) = s;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(y), [this, x, out] {
    const double g = grad_ref(out.id)(0, 0);
    Matrix& gx = grad_ref(x.id);
    for (std::size_t i = 0; i < gx.size(); ++i) gx.data()[i] += g;
  });
}

Var Tape::mean_all(Var x) {
  const std::size_t n = value(x).size();
  require(n > 0, ErrorCode::EmptyBatch, "mean over an empty matrix");
  return scale(sum_all(x), 1.0 / static_cast<double>(n));
}

void Tape::backward(Var root) {
  require(root.id >= 0 && root.id < static_cast<int>(nodes_.size()), ErrorCode::InvariantViolation,
          "backward: bad root");
  require(nodes_[root.id].value.size() == 1, ErrorCode::InvariantViolation,
          "backward: root must be a scalar");
  for (Node& n : nodes_) {
    std::fill(n.grad.data(), n.grad.data() + n.grad.size(), 0.0);
  }
  nodes_[root.id].grad(0, 0) = 1.0;
  for (int i = root.id; i >= 0; --i) {
    if (nodes_[i].backprop) nodes_[i].backprop();
  }
}

double grad_check(
    const std::function<double(std::span<const double>, std::vector<double>*)>& f,
    std::span<const double> params, double step) {
  require(step > 0.0, ErrorCode::OutOfRangeInput, "grad_check: step must be positive");
  std::vector<double> p(params.begin(), params.end());
  std::vector<double> analytic;
  const double base = f(p, &analytic);
  require(std::isfinite(base), ErrorCode::NonFiniteGradient, "grad_check: non-finite value");
  require(analytic.size() == p.size(), ErrorCode::DimensionMismatch,
          "grad_check: gradient length mismatch");
  for (double g : analytic) {
    require(std::isfinite(g), ErrorCode::NonFiniteGradient, "grad_check: non-finite gradient");
  }
  double max_err = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + step;
    const double fp = f(p, nullptr);
    p[i] = saved - step;
    const double fm = f(p, nullptr);
    p[i] = saved;
    require(std::isfinite(fp) && std::isfinite(fm), ErrorCode::NonFiniteGradient,
            "grad_check: non-finite perturbed value");
    const double g_fd = (fp - fm) / (2.0 * step);
    const double err =
        std::abs(analytic[i] - g_fd) / std::max(1e-8, std::abs(analytic[i]) + std::abs(g_fd));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace tetra
