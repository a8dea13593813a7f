#include <cmath>

#include "nfem/fem.hpp"

namespace nfem::fem {

namespace {

constexpr double kCornerSigns[8][3] = {
    {-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1},
    {-1, -1, 1},  {1, -1, 1},  {1, 1, 1},  {-1, 1, 1},
};

}  // namespace

DeformationState DeformationState::from_F(const Eigen::Matrix3d& F) {
  DeformationState s;
  s.F = F;
  s.J = F.determinant();
  s.Ic = (F.transpose() * F).trace();
  return s;
}

std::vector<QuadraturePoint> gauss_points(int dim) {
  const double g = 1.0 / std::sqrt(3.0);
  std::vector<QuadraturePoint> points;
  const int corners = dim == 2 ? 4 : 8;
  for (int c = 0; c < corners; ++c) {
    QuadraturePoint q;
    q.xi = {kCornerSigns[c][0] * g, kCornerSigns[c][1] * g, dim == 3 ? kCornerSigns[c][2] * g : 0.0};
    q.weight = 1.0;
    points.push_back(q);
  }
  return points;
}

ShapeGradients shape_gradients(const Eigen::MatrixXd& coords, const Eigen::Vector3d& xi) {
  const int corners = static_cast<int>(coords.rows());
  const int dim = static_cast<int>(coords.cols());
  if (!((dim == 2 && corners == 4) || (dim == 3 && corners == 8)))
    throw ShapeError("fem", "element must be a 4-node quad or an 8-node hex");

  ShapeGradients out;
  out.N.resize(corners);
  Eigen::MatrixXd dN_dxi(corners, dim);
  for (int a = 0; a < corners; ++a) {
    double n = 1.0;
    for (int d = 0; d < dim; ++d) n *= 0.5 * (1.0 + kCornerSigns[a][d] * xi[d]);
    out.N[a] = n;
    for (int d = 0; d < dim; ++d) {
      double g = 0.5 * kCornerSigns[a][d];
      for (int e = 0; e < dim; ++e)
        if (e != d) g *= 0.5 * (1.0 + kCornerSigns[a][e] * xi[e]);
      dN_dxi(a, d) = g;
    }
  }
  const Eigen::MatrixXd jac = coords.transpose() * dN_dxi;  // dim x dim, dX_i / dxi_j
  out.det_j = jac.determinant();
  if (!(out.det_j > 0.0))
    throw InvertedElement("non-positive Jacobian of the isoparametric map");
  out.dN_dX = dN_dxi * jac.inverse();
  return out;
}

DeformationState deformation_state(const Eigen::MatrixXd& coords, const Eigen::MatrixXd& u,
                                   const Eigen::Vector3d& xi) {
  if (u.rows() != coords.rows() || u.cols() != coords.cols())
    throw ShapeError("fem", "element displacement shape does not match element coordinates");
  const ShapeGradients sg = shape_gradients(coords, xi);
  const int dim = static_cast<int>(coords.cols());
  Eigen::Matrix3d F = Eigen::Matrix3d::Identity();
  F.topLeftCorner(dim, dim) += u.transpose() * sg.dN_dX;
  return DeformationState::from_F(F);
}

double strain_energy(const DeformationState& s, const Material& mat) {
  if (!(s.J > 0.0)) throw InvertedElement("strain energy requires J > 0");
  const double log_j = std::log(s.J);
  return 0.5 * mat.mu * (s.Ic - 3.0 - 2.0 * log_j) +
         0.25 * mat.lambda * (s.J * s.J - 1.0 - 2.0 * log_j);
}

Eigen::Matrix3d pk1_stress(const DeformationState& s, const Material& mat) {
  if (!(s.J > 0.0)) throw InvertedElement("singular or inverted deformation gradient (J <= 0)");
  const Eigen::Matrix3d f_inv_t = s.F.inverse().transpose();
  return mat.mu * (s.F - f_inv_t) + 0.5 * mat.lambda * (s.J * s.J - 1.0) * f_inv_t;
}

Eigen::Matrix<double, 9, 9> material_tangent(const DeformationState& s, const Material& mat) {
  if (!(s.J > 0.0)) throw InvertedElement("singular or inverted deformation gradient (J <= 0)");
  const Eigen::Matrix3d f_inv = s.F.inverse();
  const double j2 = s.J * s.J;
  const double c = -mat.mu + 0.5 * mat.lambda * (j2 - 1.0);
  Eigen::Matrix<double, 9, 9> A;
  for (int i = 0; i < 3; ++i)
    for (int J = 0; J < 3; ++J)
      for (int k = 0; k < 3; ++k)
        for (int L = 0; L < 3; ++L) {
          double v = mat.lambda * j2 * f_inv(J, i) * f_inv(L, k) - c * f_inv(J, k) * f_inv(L, i);
          if (i == k && J == L) v += mat.mu;
          A(3 * i + J, 3 * k + L) = v;
        }
  return A;
}

ElementResult element_forces(const Eigen::MatrixXd& coords, const Eigen::MatrixXd& u,
                             const Material& mat, bool with_tangent) {
  const int corners = static_cast<int>(coords.rows());
  const int dim = static_cast<int>(coords.cols());
  const int n = corners * dim;
  ElementResult out;
  out.r = Eigen::VectorXd::Zero(n);
  if (with_tangent) out.K = Eigen::MatrixXd::Zero(n, n);

  for (const auto& q : gauss_points(dim)) {
    const ShapeGradients sg = shape_gradients(coords, q.xi);
    Eigen::Matrix3d F = Eigen::Matrix3d::Identity();
    F.topLeftCorner(dim, dim) += u.transpose() * sg.dN_dX;
    const DeformationState state = DeformationState::from_F(F);
    if (!(state.J > 0.0)) throw InvertedElement("element inverted during deformation (J <= 0)");
    const double w = q.weight * sg.det_j;
    out.energy += w * strain_energy(state, mat);
    const Eigen::Matrix3d P = pk1_stress(state, mat);
    for (int a = 0; a < corners; ++a)
      for (int i = 0; i < dim; ++i) {
        double s = 0.0;
        for (int J = 0; J < dim; ++J) s += P(i, J) * sg.dN_dX(a, J);
        out.r[a * dim + i] += w * s;
      }
    if (!with_tangent) continue;
    const auto A = material_tangent(state, mat);
    for (int a = 0; a < corners; ++a)
      for (int i = 0; i < dim; ++i)
        for (int b = 0; b < corners; ++b)
          for (int k = 0; k < dim; ++k) {
            double s = 0.0;
            for (int J = 0; J < dim; ++J)
              for (int L = 0; L < dim; ++L)
                s += sg.dN_dX(a, J) * A(3 * i + J, 3 * k + L) * sg.dN_dX(b, L);
            out.K(a * dim + i, b * dim + k) += w * s;
          }
  }
  return out;
}

Eigen::MatrixXd element_tangent_fd(const Eigen::MatrixXd& coords, const Eigen::MatrixXd& u,
                                   const Material& mat, double step) {
  const int corners = static_cast<int>(coords.rows());
  const int dim = static_cast<int>(coords.cols());
  const int n = corners * dim;
  Eigen::MatrixXd K(n, n);
  for (int col = 0; col < n; ++col) {
    Eigen::MatrixXd up = u, um = u;
    up(col / dim, col % dim) += step;
    um(col / dim, col % dim) -= step;
    K.col(col) = (element_forces(coords, up, mat, false).r - element_forces(coords, um, mat, false).r) /
                 (2.0 * step);
  }
  return K;
}

}  // namespace nfem::fem
