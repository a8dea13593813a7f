#include <cmath>
#include <string>

#include "nfem/fem.hpp"

namespace nfem::fem {

Lame lame_from_E_nu(double E, double nu) {
  if (!(E > 0.0) || !std::isfinite(E))
    throw InvalidArgument("fem", "Young's modulus must be positive (E > 0), got " + std::to_string(E));
  if (!(nu >= 0.0 && nu < 0.5))
    throw InvalidArgument("fem", "Poisson's ratio must satisfy 0 <= nu < 0.5, got " + std::to_string(nu));
  return {E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)), E / (2.0 * (1.0 + nu))};
}

Material Material::from_E_nu(double E, double nu) {
  const Lame l = lame_from_E_nu(E, nu);
  return {E, nu, l.lambda, l.mu};
}

}  // namespace nfem::fem
