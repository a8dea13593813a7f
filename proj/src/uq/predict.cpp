#include <cmath>

#include "nfem/uq.hpp"

namespace nfem::uq {

namespace {

// Splits the raw (nodes x 2*dim) output into mean and rho fields.
void split_output(const std::vector<double>& raw, int dim, std::vector<double>& mu, std::vector<double>& rho) {
  const std::size_t nodes = raw.size() / (2 * dim);
  mu.resize(nodes * dim);
  rho.resize(nodes * dim);
  for (std::size_t n = 0; n < nodes; ++n)
    for (int c = 0; c < dim; ++c) {
      mu[n * dim + c] = raw[n * 2 * dim + c];
      rho[n * dim + c] = raw[n * 2 * dim + dim + c];
    }
}

}  // namespace

Prediction predict_det(const unet::Model& model, const std::vector<double>& f) {
  if (model.config().mode != unet::Mode::deterministic)
    throw InvalidArgument("uq", "predict_det needs a deterministic model");
  Prediction p;
  p.mean = model.infer(f);
  p.std.assign(p.mean.size(), 0.0);
  p.std_epistemic = p.std;
  p.std_aleatoric = p.std;
  return p;
}

Prediction predict_mc(const unet::Model& model, const std::vector<double>& f, int passes, std::uint64_t seed) {
  const unet::Mode mode = model.config().mode;
  if (mode == unet::Mode::deterministic) throw InvalidArgument("uq", "predict_mc needs an mle or vb model");
  const int dim = model.config().dim;
  Prediction p;
  std::vector<double> mu, rho;
  if (mode == unet::Mode::mle) {
    split_output(model.infer(f), dim, mu, rho);
    p.mean = mu;
    p.std_aleatoric.resize(rho.size());
    for (std::size_t i = 0; i < rho.size(); ++i) p.std_aleatoric[i] = ad::softplus(rho[i]);
    p.std_epistemic.assign(rho.size(), 0.0);
    p.std = p.std_aleatoric;
    return p;
  }
  if (passes < 2) throw InvalidArgument("uq", "predict_mc needs at least 2 passes");
  p.passes = passes;
  std::vector<double> sum, sum_sq, alea;
  // Sums are shifted by the first draw to limit cancellation in the variance.
  std::vector<double> shift;
  for (int t = 0; t < passes; ++t) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(t), 0u};
    std::mt19937_64 rng(seq);
    split_output(model.infer(f, &rng), dim, mu, rho);
    if (t == 0) {
      shift = mu;
      sum.assign(mu.size(), 0.0);
      sum_sq.assign(mu.size(), 0.0);
      alea.assign(mu.size(), 0.0);
    }
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double d = mu[i] - shift[i];
      sum[i] += d;
      sum_sq[i] += d * d;
      alea[i] += ad::softplus(rho[i]);
    }
  }
  const double T = passes;
  const std::size_t n = sum.size();
  p.mean.resize(n);
  p.std.resize(n);
  p.std_epistemic.resize(n);
  p.std_aleatoric.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.mean[i] = shift[i] + sum[i] / T;
    const double var = std::max(0.0, (sum_sq[i] - sum[i] * sum[i] / T) / (T - 1));
    p.std_epistemic[i] = std::sqrt(var);
    p.std_aleatoric[i] = alea[i] / T;
    p.std[i] = std::sqrt(var + p.std_aleatoric[i] * p.std_aleatoric[i]);
  }
  return p;
}

Prediction predict(const unet::Model& model, const std::vector<double>& f, int passes, std::uint64_t seed) {
  return model.config().mode == unet::Mode::deterministic ? predict_det(model, f) : predict_mc(model, f, passes, seed);
}

std::vector<double> linspace(double lo, double hi, int count) {
  if (count < 1) throw InvalidArgument("uq", "linspace needs count >= 1");
  if (count == 1) return {lo};
  std::vector<double> v(count);
  for (int i = 0; i < count; ++i) v[i] = lo + (hi - lo) * i / (count - 1);
  return v;
}

std::vector<double> point_load(const fem::GridMesh& mesh, int node, int component, double value) {
  if (node < 0 || node >= mesh.grid_node_count()) throw InvalidArgument("uq", "load node out of range");
  if (component < 0 || component >= mesh.dim()) throw InvalidArgument("uq", "load component out of range");
  if (mesh.compact_index(node) < 0) throw InvalidArgument("uq", "load node is not an active node");
  std::vector<double> f(static_cast<std::size_t>(mesh.grid_node_count()) * mesh.dim(), 0.0);
  f[static_cast<std::size_t>(node) * mesh.dim() + component] = value;
  return f;
}

Eigen::VectorXd grid_to_dofs(const fem::GridMesh& mesh, const std::vector<double>& grid) {
  const int dim = mesh.dim();
  if (grid.size() != static_cast<std::size_t>(mesh.grid_node_count()) * dim)
    throw ShapeError("uq", "grid field does not match the mesh");
  Eigen::VectorXd v(mesh.dof_count());
  for (int node : mesh.active_nodes())
    for (int c = 0; c < dim; ++c) v[mesh.dof(node, c)] = grid[static_cast<std::size_t>(node) * dim + c];
  return v;
}

std::vector<double> dofs_to_grid(const fem::GridMesh& mesh, const Eigen::VectorXd& dofs) {
  const int dim = mesh.dim();
  if (dofs.size() != mesh.dof_count()) throw ShapeError("uq", "dof vector does not match the mesh");
  std::vector<double> grid(static_cast<std::size_t>(mesh.grid_node_count()) * dim, 0.0);
  for (int node : mesh.active_nodes())
    for (int c = 0; c < dim; ++c) grid[static_cast<std::size_t>(node) * dim + c] = dofs[mesh.dof(node, c)];
  return grid;
}

std::vector<SweepRow> force_sweep(const unet::Model& model, const fem::GridMesh& mesh, const fem::Material& mat,
                                  const SweepOptions& opts) {
  if (mesh.grid_node_count() != static_cast<int>(model.config().grid_nodes()))
    throw ShapeError("uq", "model grid does not match the mesh");
  const int dim = mesh.dim();
  std::vector<SweepRow> rows;
  for (double F : opts.magnitudes) {
    const auto f = point_load(mesh, opts.node, opts.component, F);
    const Prediction p = predict(model, f, opts.passes, opts.seed);
    const std::size_t k = static_cast<std::size_t>(opts.node) * dim + opts.component;
    SweepRow row{F, p.mean[k], p.std[k], p.std_epistemic[k], p.std_aleatoric[k], std::nullopt};
    if (opts.fem_reference) {
      try {
        const auto sol = fem::newton_solve(mesh, mat, grid_to_dofs(mesh, f), opts.newton);
        if (sol.converged) row.fem = sol.u[mesh.dof(opts.node, opts.component)];
      } catch (const Error&) {
        // recorded as a missing reference
      }
    }
    rows.push_back(row);
  }
  return rows;
}

csv::Table sweep_table(const std::vector<SweepRow>& rows) {
  csv::Table t({"force", "mean", "std_total", "std_epistemic", "std_aleatoric", "fem_reference"});
  for (const auto& r : rows)
    t.add_row({csv::number(r.force), csv::number(r.mean), csv::number(r.std_total), csv::number(r.std_epistemic),
               csv::number(r.std_aleatoric), r.fem ? csv::number(*r.fem) : std::string()});
  return t;
}

}  // namespace nfem::uq
