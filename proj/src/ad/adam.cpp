#include <cmath>

#include "nfem/autodiff.hpp"

namespace nfem::ad {

void adam_step(std::span<Parameter* const> params, const AdamConfig& cfg, long t) {
  if (t < 1) throw InvalidArgument("ad", "adam step index must be >= 1");
  for (const Parameter* p : params) {
    if (!p->trainable) continue;
    if (p->grad.size() != p->value.size()) throw ShapeError("ad", "parameter " + p->name + " has no gradient buffer");
    for (double g : p->grad)
      if (!std::isfinite(g)) throw NonFiniteError("ad", "non-finite gradient in parameter " + p->name);
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      p->m[i] = cfg.beta1 * p->m[i] + (1 - cfg.beta1) * g;
      p->v[i] = cfg.beta2 * p->v[i] + (1 - cfg.beta2) * g * g;
      p->value[i] -= cfg.lr * (p->m[i] / c1) / (std::sqrt(p->v[i] / c2) + cfg.eps);
    }
  }
}

}  // namespace nfem::ad
