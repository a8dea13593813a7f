#pragma once

// Deterministic and Monte Carlo prediction, force sweeps and the linear
// stiffness baseline.

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "nfem/csv.hpp"
#include "nfem/fem.hpp"
#include "nfem/unet.hpp"

namespace nfem::uq {

/// Fields in grid layout (node raster order, dim values per node).
struct Prediction {
  std::vector<double> mean;
  std::vector<double> std;            // total, sqrt(epistemic^2 + aleatoric^2)
  std::vector<double> std_epistemic;  // spread of the sampled means
  std::vector<double> std_aleatoric;  // mean of softplus(U_rho)
  int passes = 1;
};

Prediction predict_det(const unet::Model& model, const std::vector<double>& f);

/// mle: one pass, std = softplus(U_rho). vb: `passes` weight draws, pass t
/// seeded from (seed, t).
Prediction predict_mc(const unet::Model& model, const std::vector<double>& f, int passes = 300,
                      std::uint64_t seed = 0);

/// Dispatches on mode: deterministic -> predict_det, otherwise predict_mc.
Prediction predict(const unet::Model& model, const std::vector<double>& f, int passes, std::uint64_t seed);

struct SweepOptions {
  int node = -1;       // raster node receiving the load and monitored
  int component = 1;   // force / displacement component (0 = x, 1 = y, 2 = z)
  std::vector<double> magnitudes;
  int passes = 300;
  std::uint64_t seed = 0;
  bool fem_reference = true;
  fem::NewtonOptions newton;
};

struct SweepRow {
  double force = 0.0;
  double mean = 0.0;
  double std_total = 0.0;
  double std_epistemic = 0.0;
  double std_aleatoric = 0.0;
  std::optional<double> fem;  // missing when the solve failed
};

/// Magnitudes from `lo` to `hi` in `count` evenly spaced values.
std::vector<double> linspace(double lo, double hi, int count);

std::vector<SweepRow> force_sweep(const unet::Model& model, const fem::GridMesh& mesh, const fem::Material& mat,
                                  const SweepOptions& opts);
csv::Table sweep_table(const std::vector<SweepRow>& rows);

/// Grid-layout force field with a single point load.
std::vector<double> point_load(const fem::GridMesh& mesh, int node, int component, double value);

/// Compact dof vector <-> grid layout (inactive nodes are zero in the grid).
Eigen::VectorXd grid_to_dofs(const fem::GridMesh& mesh, const std::vector<double>& grid);
std::vector<double> dofs_to_grid(const fem::GridMesh& mesh, const Eigen::VectorXd& dofs);

/// u = K0^-1 f with K0 the tangent at rest after Dirichlet elimination.
class LinearBaseline {
 public:
  LinearBaseline(const fem::GridMesh& mesh, const fem::Material& mat);
  ~LinearBaseline();
  LinearBaseline(LinearBaseline&&) noexcept;

  std::vector<double> predict(const std::vector<double>& f_grid) const;
  Eigen::VectorXd solve(const Eigen::VectorXd& f_dofs) const;

 private:
  struct Impl;
  const fem::GridMesh* mesh_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace nfem::uq
