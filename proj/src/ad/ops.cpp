// Elementwise ops, normalisation and losses.

#include <cmath>
#include <numbers>

#include "nfem/autodiff.hpp"

namespace nfem::ad {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError("ad", std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                               shape_string(b.shape()) + " differ");
}

// Per-element weights from a per-node mask; empty mask means all ones.
std::vector<double> expand_mask(const Tensor& t, std::span<const double> node_mask, const char* op) {
  if (node_mask.empty()) return {};
  const GridDims d = grid_dims(t.shape());
  if (node_mask.size() != d.positions())
    throw ShapeError("ad", std::string(op) + ": mask has " + std::to_string(node_mask.size()) + " entries for " +
                               std::to_string(d.positions()) + " nodes");
  std::vector<double> w(t.size());
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t p = 0; p < d.positions(); ++p)
      for (std::size_t c = 0; c < d.channels; ++c) w[(b * d.positions() + p) * d.channels + c] = node_mask[p];
  return w;
}

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

}  // namespace

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double inverse_softplus(double y) {
  if (!(y > 0)) throw InvalidArgument("ad", "inverse_softplus needs a positive argument");
  return y + std::log(-std::expm1(-y));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor relu(Tape& tape, const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v = v > 0 ? v : 0.0;
  return tape.record(x.shape(), std::move(out), {x}, "relu", [](Node& self) {
    Node& xn = *self.parents[0];
    auto& g = xn.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xn.value[i] > 0) g[i] += self.grad[i];
  });
}

Tensor softplus(Tape& tape, const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = softplus(x.values()[i]);
  return tape.record(x.shape(), std::move(out), {x}, "softplus", [](Node& self) {
    Node& xn = *self.parents[0];
    auto& g = xn.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * sigmoid(xn.value[i]);
  });
}

BatchNormState::BatchNormState(std::size_t channels, double momentum_, double eps_)
    : running_mean(channels, 0.0), running_var(channels, 1.0), momentum(momentum_), eps(eps_) {}

Tensor batchnorm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                 bool training) {
  const GridDims d = grid_dims(x.shape());
  const std::size_t C = d.channels;
  const std::size_t N = d.batch * d.positions();
  if (gamma.size() != C || beta.size() != C) throw ShapeError("ad", "batchnorm: gamma/beta size must equal channels");
  if (state.running_mean.size() != C || state.running_var.size() != C)
    throw ShapeError("ad", "batchnorm: running statistics have the wrong channel count");

  const auto xv = x.values();
  std::vector<double> mean(C, 0.0), var(C, 0.0);
  if (training) {
    if (N < 2) throw InvalidArgument("ad", "batchnorm: training needs more than one value per channel");
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) mean[c] += xv[n * C + c];
    for (double& m : mean) m /= static_cast<double>(N);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const double dlt = xv[n * C + c] - mean[c];
        var[c] += dlt * dlt;
      }
    for (double& v : var) v /= static_cast<double>(N);
    for (std::size_t c = 0; c < C; ++c) {
      state.running_mean[c] = state.momentum * state.running_mean[c] + (1 - state.momentum) * mean[c];
      state.running_var[c] = state.momentum * state.running_var[c] + (1 - state.momentum) * var[c];
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  auto inv_std = std::make_shared<std::vector<double>>(C);
  for (std::size_t c = 0; c < C; ++c) (*inv_std)[c] = 1.0 / std::sqrt(var[c] + state.eps);
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  std::vector<double> out(x.size());
  const auto gv = gamma.values();
  const auto bv = beta.values();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t i = n * C + c;
      (*xhat)[i] = (xv[i] - mean[c]) * (*inv_std)[c];
      out[i] = gv[c] * (*xhat)[i] + bv[c];
    }

  return tape.record(x.shape(), std::move(out), {x, gamma, beta}, training ? "batchnorm" : "batchnorm_eval",
                     [N, C, inv_std, xhat, training](Node& self) {
                       Node& xn = *self.parents[0];
                       Node& gn = *self.parents[1];
                       Node& bn = *self.parents[2];
                       const auto& dy = self.grad;
                       std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
                       for (std::size_t n = 0; n < N; ++n)
                         for (std::size_t c = 0; c < C; ++c) {
                           sum_dy[c] += dy[n * C + c];
                           sum_dy_xhat[c] += dy[n * C + c] * (*xhat)[n * C + c];
                         }
                       if (gn.requires_grad) {
                         auto& g = gn.ensure_grad();
                         for (std::size_t c = 0; c < C; ++c) g[c] += sum_dy_xhat[c];
                       }
                       if (bn.requires_grad) {
                         auto& g = bn.ensure_grad();
                         for (std::size_t c = 0; c < C; ++c) g[c] += sum_dy[c];
                       }
                       if (!xn.requires_grad) return;
                       auto& gx = xn.ensure_grad();
                       const double inv_n = 1.0 / static_cast<double>(N);
                       for (std::size_t n = 0; n < N; ++n)
                         for (std::size_t c = 0; c < C; ++c) {
                           const std::size_t i = n * C + c;
                           const double k = gn.value[c] * (*inv_std)[c];
                           if (training)
                             gx[i] += k * (dy[i] - inv_n * sum_dy[c] - (*xhat)[i] * inv_n * sum_dy_xhat[c]);
                           else
                             gx[i] += k * dy[i];
                         }
                     });
}

Tensor slice_channels(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end) {
  const GridDims d = grid_dims(x.shape());
  if (begin >= end || end > d.channels)
    throw ShapeError("ad", "slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                               ") outside " + std::to_string(d.channels) + " channels");
  const std::size_t N = d.batch * d.positions(), C = d.channels, w = end - begin;
  GridDims od = d;
  od.channels = w;
  std::vector<double> out(N * w);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < w; ++c) out[n * w + c] = x.values()[n * C + begin + c];
  return tape.record(od.shape(), std::move(out), {x}, "slice_channels", [N, C, w, begin](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < w; ++c) g[n * C + begin + c] += self.grad[n * w + c];
  });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return tape.record(a.shape(), std::move(out), {a, b}, "add", [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& g = p.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return tape.record(a.shape(), std::move(out), {a, b}, "mul", [](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    if (an.requires_grad) {
      auto& g = an.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn.value[i];
    }
    if (bn.requires_grad) {
      auto& g = bn.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an.value[i];
    }
  });
}

Tensor scale(Tape& tape, const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * a.values()[i];
  return tape.record(a.shape(), std::move(out), {a}, "scale", [s](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Tensor sum(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return tape.record({1}, {s}, {a}, "sum", [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor dot(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError("ad", "dot: operand sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return tape.record({1}, {s}, {a, b}, "dot", [](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    const double g0 = self.grad[0];
    if (an.requires_grad) {
      auto& g = an.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * bn.value[i];
    }
    if (bn.requires_grad) {
      auto& g = bn.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * an.value[i];
    }
  });
}

Tensor square(Tape& tape, const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * a.values()[i];
  return tape.record(a.shape(), std::move(out), {a}, "square", [](Node& self) {
    Node& an = *self.parents[0];
    auto& g = an.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * an.value[i] * self.grad[i];
  });
}

Tensor mse_loss(Tape& tape, const Tensor& pred, const Tensor& target, std::span<const double> node_mask) {
  require_same_shape(pred, target, "mse_loss");
  const std::size_t B = pred.shape().empty() ? 1 : pred.shape()[0];
  auto w = std::make_shared<std::vector<double>>(expand_mask(pred, node_mask, "mse_loss"));
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = pred.values()[i] - target.values()[i];
    s += (w->empty() ? 1.0 : (*w)[i]) * r * r;
  }
  const double inv_b = 1.0 / static_cast<double>(B);
  return tape.record({1}, {s * inv_b}, {pred, target}, "mse_loss", [w, inv_b](Node& self) {
    Node& pn = *self.parents[0];
    Node& tn = *self.parents[1];
    const double g0 = self.grad[0] * 2.0 * inv_b;
    for (int k = 0; k < 2; ++k) {
      Node& n = *self.parents[k];
      if (!n.requires_grad) continue;
      auto& g = n.ensure_grad();
      const double sign = k == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += sign * g0 * (w->empty() ? 1.0 : (*w)[i]) * (pn.value[i] - tn.value[i]);
    }
  });
}

Tensor gaussian_nll(Tape& tape, const Tensor& mu, const Tensor& rho, const Tensor& target,
                    std::span<const double> node_mask) {
  require_same_shape(mu, rho, "gaussian_nll");
  require_same_shape(mu, target, "gaussian_nll");
  auto w = std::make_shared<std::vector<double>>(expand_mask(mu, node_mask, "gaussian_nll"));
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double wi = w->empty() ? 1.0 : (*w)[i];
    if (wi == 0.0) continue;
    const double sigma = softplus(rho.values()[i]);
    const double r = target.values()[i] - mu.values()[i];
    s += wi * (kHalfLog2Pi + std::log(sigma) + r * r / (2 * sigma * sigma));
  }
  return tape.record({1}, {s}, {mu, rho, target}, "gaussian_nll", [w](Node& self) {
    Node& mn = *self.parents[0];
    Node& rn = *self.parents[1];
    Node& tn = *self.parents[2];
    const double g0 = self.grad[0];
    double* gm = mn.requires_grad ? mn.ensure_grad().data() : nullptr;
    double* gr = rn.requires_grad ? rn.ensure_grad().data() : nullptr;
    double* gt = tn.requires_grad ? tn.ensure_grad().data() : nullptr;
    for (std::size_t i = 0; i < mn.value.size(); ++i) {
      const double wi = w->empty() ? 1.0 : (*w)[i];
      if (wi == 0.0) continue;
      const double sigma = softplus(rn.value[i]);
      const double r = tn.value[i] - mn.value[i];
      const double s2 = sigma * sigma;
      if (gm) gm[i] -= g0 * wi * r / s2;
      if (gt) gt[i] += g0 * wi * r / s2;
      if (gr) gr[i] += g0 * wi * (1.0 / sigma - r * r / (s2 * sigma)) * sigmoid(rn.value[i]);
    }
  });
}

Tensor reparameterize(Tape& tape, const Tensor& mu, const Tensor& rho, std::span<const double> eps) {
  require_same_shape(mu, rho, "reparameterize");
  if (eps.size() != mu.size()) throw ShapeError("ad", "reparameterize: eps size does not match mu");
  auto e = std::make_shared<std::vector<double>>(eps.begin(), eps.end());
  std::vector<double> out(mu.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mu.values()[i] + softplus(rho.values()[i]) * eps[i];
  return tape.record(mu.shape(), std::move(out), {mu, rho}, "reparameterize", [e](Node& self) {
    Node& mn = *self.parents[0];
    Node& rn = *self.parents[1];
    if (mn.requires_grad) {
      auto& g = mn.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (rn.requires_grad) {
      auto& g = rn.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*e)[i] * sigmoid(rn.value[i]);
    }
  });
}

Tensor gaussian_kl_sample(Tape& tape, const Tensor& w, const Tensor& mu, const Tensor& rho, const Tensor& mu_p,
                          double sigma_p) {
  require_same_shape(w, mu, "gaussian_kl_sample");
  require_same_shape(w, rho, "gaussian_kl_sample");
  require_same_shape(w, mu_p, "gaussian_kl_sample");
  if (!(sigma_p > 0)) throw InvalidArgument("ad", "gaussian_kl_sample: prior sigma must be positive");
  const double sp2 = sigma_p * sigma_p;
  const double log_sp = std::log(sigma_p);
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double sigma = softplus(rho.values()[i]);
    const double dq = w.values()[i] - mu.values()[i];
    const double dp = w.values()[i] - mu_p.values()[i];
    s += log_sp - std::log(sigma) - dq * dq / (2 * sigma * sigma) + dp * dp / (2 * sp2);
  }
  return tape.record({1}, {s}, {w, mu, rho, mu_p}, "gaussian_kl_sample", [sp2](Node& self) {
    Node& wn = *self.parents[0];
    Node& mn = *self.parents[1];
    Node& rn = *self.parents[2];
    Node& pn = *self.parents[3];
    const double g0 = self.grad[0];
    double* gw = wn.requires_grad ? wn.ensure_grad().data() : nullptr;
    double* gm = mn.requires_grad ? mn.ensure_grad().data() : nullptr;
    double* gr = rn.requires_grad ? rn.ensure_grad().data() : nullptr;
    double* gp = pn.requires_grad ? pn.ensure_grad().data() : nullptr;
    for (std::size_t i = 0; i < wn.value.size(); ++i) {
      const double sigma = softplus(rn.value[i]);
      const double s2 = sigma * sigma;
      const double dq = wn.value[i] - mn.value[i];
      const double dp = wn.value[i] - pn.value[i];
      if (gw) gw[i] += g0 * (-dq / s2 + dp / sp2);
      if (gm) gm[i] += g0 * dq / s2;
      if (gp) gp[i] -= g0 * dp / sp2;
      if (gr) gr[i] += g0 * (-1.0 / sigma + dq * dq / (s2 * sigma)) * sigmoid(rn.value[i]);
    }
  });
}

}  // namespace nfem::ad
