#include <Eigen/SparseLU>

#include "nfem/uq.hpp"

namespace nfem::uq {

struct LinearBaseline::Impl {
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  std::vector<std::uint8_t> dirichlet;
};

LinearBaseline::LinearBaseline(const fem::GridMesh& mesh, const fem::Material& mat)
    : mesh_(&mesh), impl_(std::make_unique<Impl>()) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(mesh.dof_count());
  auto sys = fem::assemble_system(mesh, mat, zero, zero, true);
  sys.tangent.makeCompressed();
  impl_->lu.compute(sys.tangent);
  if (impl_->lu.info() != Eigen::Success) throw fem::SingularTangent("rest tangent K0 is singular");
  impl_->dirichlet = fem::dirichlet_dof_mask(mesh);
}

LinearBaseline::~LinearBaseline() = default;
LinearBaseline::LinearBaseline(LinearBaseline&&) noexcept = default;

Eigen::VectorXd LinearBaseline::solve(const Eigen::VectorXd& f_dofs) const {
  Eigen::VectorXd rhs = f_dofs;
  for (Eigen::Index i = 0; i < rhs.size(); ++i)
    if (impl_->dirichlet[i]) rhs[i] = 0.0;
  Eigen::VectorXd u = impl_->lu.solve(rhs);
  return u;
}

std::vector<double> LinearBaseline::predict(const std::vector<double>& f_grid) const {
  return dofs_to_grid(*mesh_, solve(grid_to_dofs(*mesh_, f_grid)));
}

}  // namespace nfem::uq
