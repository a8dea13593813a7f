#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/SparseLU>

#include "nfem/fem.hpp"

namespace nfem::fem {

namespace {

Eigen::MatrixXd gather(const GridMesh& mesh, const std::array<int, 8>& element, const Eigen::VectorXd& u) {
  const int corners = mesh.corners_per_element();
  const int dim = mesh.dim();
  Eigen::MatrixXd ue(corners, dim);
  for (int c = 0; c < corners; ++c) {
    const int base = mesh.compact_index(element[c]) * dim;
    for (int i = 0; i < dim; ++i) ue(c, i) = u[base + i];
  }
  return ue;
}

void check_vector(const GridMesh& mesh, const Eigen::VectorXd& v, const char* name) {
  if (v.size() != mesh.dof_count())
    throw ShapeError("fem", std::string(name) + " has " + std::to_string(v.size()) +
                                " entries, mesh has " + std::to_string(mesh.dof_count()) + " dofs");
}

}  // namespace

std::vector<std::uint8_t> dirichlet_dof_mask(const GridMesh& mesh) {
  std::vector<std::uint8_t> mask(mesh.dof_count(), 0);
  for (int n : mesh.dirichlet_nodes())
    for (int i = 0; i < mesh.dim(); ++i) mask[mesh.dof(n, i)] = 1;
  return mask;
}

Eigen::VectorXd internal_forces(const GridMesh& mesh, const Material& mat, const Eigen::VectorXd& u) {
  check_vector(mesh, u, "displacement");
  const int dim = mesh.dim();
  const int corners = mesh.corners_per_element();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(mesh.dof_count());
  for (int e = 0; e < static_cast<int>(mesh.elements().size()); ++e) {
    const auto& element = mesh.elements()[e];
    const auto res = element_forces(element_coordinates(mesh, e), gather(mesh, element, u), mat, false);
    for (int c = 0; c < corners; ++c) {
      const int base = mesh.compact_index(element[c]) * dim;
      for (int i = 0; i < dim; ++i) f[base + i] += res.r[c * dim + i];
    }
  }
  return f;
}

SystemState assemble_system(const GridMesh& mesh, const Material& mat, const Eigen::VectorXd& u,
                            const Eigen::VectorXd& f_ext, bool with_tangent) {
  check_vector(mesh, u, "displacement");
  check_vector(mesh, f_ext, "external force");
  const int dim = mesh.dim();
  const int corners = mesh.corners_per_element();
  const int n = mesh.dof_count();
  const auto fixed = dirichlet_dof_mask(mesh);

  SystemState out;
  out.residual = -f_ext;
  std::vector<Eigen::Triplet<double>> triplets;
  if (with_tangent) triplets.reserve(mesh.elements().size() * corners * corners * dim * dim + n);

  std::vector<int> dofs(corners * dim);
  for (int e = 0; e < static_cast<int>(mesh.elements().size()); ++e) {
    const auto& element = mesh.elements()[e];
    for (int c = 0; c < corners; ++c) {
      const int ci = mesh.compact_index(element[c]);
      if (ci < 0) throw InvalidArgument("fem", "element references an inactive node");
      for (int i = 0; i < dim; ++i) dofs[c * dim + i] = ci * dim + i;
    }
    const auto res = element_forces(element_coordinates(mesh, e), gather(mesh, element, u), mat, with_tangent);
    for (int a = 0; a < corners * dim; ++a) {
      out.residual[dofs[a]] += res.r[a];
      if (!with_tangent || fixed[dofs[a]]) continue;
      for (int b = 0; b < corners * dim; ++b)
        if (!fixed[dofs[b]]) triplets.emplace_back(dofs[a], dofs[b], res.K(a, b));
    }
  }
  for (int d = 0; d < n; ++d) {
    if (!fixed[d]) continue;
    out.residual[d] = 0.0;
    if (with_tangent) triplets.emplace_back(d, d, 1.0);
  }
  if (with_tangent) {
    out.tangent.resize(n, n);
    out.tangent.setFromTriplets(triplets.begin(), triplets.end());
  }
  return out;
}

double total_potential(const GridMesh& mesh, const Material& mat, const Eigen::VectorXd& u,
                       const Eigen::VectorXd& f_ext) {
  check_vector(mesh, u, "displacement");
  check_vector(mesh, f_ext, "external force");
  double energy = 0.0;
  for (int e = 0; e < static_cast<int>(mesh.elements().size()); ++e)
    energy += element_forces(element_coordinates(mesh, e), gather(mesh, mesh.elements()[e], u), mat, false).energy;
  return energy - f_ext.dot(u);
}

FemSolution newton_solve(const GridMesh& mesh, const Material& mat, const Eigen::VectorXd& f_ext,
                         const NewtonOptions& opts) {
  check_vector(mesh, f_ext, "external force");
  if (mesh.dirichlet_nodes().empty())
    throw SingularTangent("no Dirichlet nodes: the tangent has rigid-body modes");
  if (!f_ext.allFinite()) throw InvalidArgument("fem", "external force contains non-finite values");
  const auto fixed = dirichlet_dof_mask(mesh);
  for (int d = 0; d < f_ext.size(); ++d)
    if (fixed[d] && f_ext[d] != 0.0) throw InvalidArgument("fem", "external force on a Dirichlet dof");

  const double tol = opts.relative_tolerance * std::max(1.0, f_ext.lpNorm<Eigen::Infinity>());
  FemSolution sol;
  sol.f_ext = f_ext;
  sol.u = Eigen::VectorXd::Zero(mesh.dof_count());

  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  bool pattern_ready = false;

  double applied = 0.0;
  double increment = std::clamp(opts.initial_increment, opts.min_increment, 1.0);
  int successes = 0;

  while (applied < 1.0) {
    const double target = std::min(1.0, applied + increment);
    const Eigen::VectorXd load = target * f_ext;
    Eigen::VectorXd u = sol.u;
    std::vector<double> history;
    bool converged = false;

    for (int it = 0; it <= opts.max_iterations; ++it) {
      SystemState sys;
      try {
        sys = assemble_system(mesh, mat, u, load, true);
      } catch (const InvertedElement&) {
        break;
      }
      const double rn = sys.residual.lpNorm<Eigen::Infinity>();
      history.push_back(rn);
      ++sol.newton_iterations;
      if (!std::isfinite(rn)) break;
      if (rn <= tol) {
        converged = true;
        break;
      }
      if (it == opts.max_iterations) break;
      if (!pattern_ready) {
        lu.analyzePattern(sys.tangent);
        pattern_ready = true;
      }
      lu.factorize(sys.tangent);
      if (lu.info() != Eigen::Success) {
        if (applied == 0.0 && it == 0) throw SingularTangent("tangent factorization failed at the rest state");
        break;
      }
      const Eigen::VectorXd du = lu.solve(-sys.residual);
      if (!du.allFinite()) break;
      u += du;
    }

    if (converged) {
      sol.u = std::move(u);
      sol.residual_norm = history.back();
      sol.last_step_residuals = std::move(history);
      applied = target;
      ++sol.load_steps;
      if (opts.grow_increment && ++successes >= opts.successes_before_growth) {
        increment = std::min(1.0, 2.0 * increment);
        successes = 0;
      }
    } else {
      successes = 0;
      increment *= 0.5;
      if (increment < opts.min_increment * (1.0 - 1e-12))
        throw NonConverged("load increment fell below " + std::to_string(opts.min_increment) +
                           " of the total load at load factor " + std::to_string(applied));
    }
  }
  sol.converged = true;
  return sol;
}

}  // namespace nfem::fem
