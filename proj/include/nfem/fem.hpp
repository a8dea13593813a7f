#pragma once

// Neo-Hookean hyperelastic finite elements on structured quad/hex grids.
//
// Nodes live on a regular grid numbered in x-major raster order
// (node = (ix * n_y + iy) * n_z + iz). Inactive nodes (the void of an
// L-shaped domain) carry no degrees of freedom; the global system uses a
// compact numbering over active nodes, dof = compact(node) * dim + component.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "nfem/error.hpp"

namespace nfem::fem {

class InvertedElement : public Error {
 public:
  explicit InvertedElement(const std::string& what) : Error("fem", what) {}
};

class NonConverged : public Error {
 public:
  explicit NonConverged(const std::string& what) : Error("fem", what) {}
};

class SingularTangent : public Error {
 public:
  explicit SingularTangent(const std::string& what) : Error("fem", what) {}
};

// ---------------------------------------------------------------------------
// Mesh

class GridMesh {
 public:
  GridMesh() = default;
  /// Builds connectivity from the active mask: an element exists wherever all
  /// of its corners are active. An empty mask means every node is active.
  GridMesh(int dim, std::array<int, 3> nodes, std::array<double, 3> spacing,
           std::vector<std::uint8_t> active = {});

  int dim() const { return dim_; }
  const std::array<int, 3>& nodes() const { return nodes_; }
  const std::array<double, 3>& spacing() const { return spacing_; }
  /// Node counts per axis, only the first `dim` entries.
  std::vector<int> grid_shape() const;

  int grid_node_count() const { return nodes_[0] * nodes_[1] * nodes_[2]; }
  int node_index(int ix, int iy, int iz = 0) const;
  std::array<int, 3> node_position(int node) const;
  Eigen::Vector3d coordinates(int node) const;

  bool is_active(int node) const { return active_[node] != 0; }
  const std::vector<std::uint8_t>& active_mask() const { return active_; }
  /// compact index -> raster node index
  const std::vector<int>& active_nodes() const { return active_nodes_; }
  /// raster node index -> compact index, or -1 for inactive nodes
  int compact_index(int node) const { return compact_[node]; }
  int active_count() const { return static_cast<int>(active_nodes_.size()); }
  int dof_count() const { return dim_ * active_count(); }
  int dof(int node, int component) const { return compact_[node] * dim_ + component; }

  int corners_per_element() const { return dim_ == 2 ? 4 : 8; }
  const std::vector<std::array<int, 8>>& elements() const { return elements_; }

  const std::vector<int>& dirichlet_nodes() const { return dirichlet_; }
  const std::vector<int>& load_nodes() const { return load_; }
  void set_dirichlet_nodes(std::vector<int> nodes);
  void set_load_nodes(std::vector<int> nodes);

  /// Checks the mesh invariants; throws InvalidArgument on violation.
  void validate() const;

 private:
  int dim_ = 2;
  std::array<int, 3> nodes_{1, 1, 1};
  std::array<double, 3> spacing_{1.0, 1.0, 1.0};
  std::vector<std::uint8_t> active_;
  std::vector<int> active_nodes_;
  std::vector<int> compact_;
  std::vector<std::array<int, 8>> elements_;
  std::vector<int> dirichlet_;
  std::vector<int> load_;
};

struct BeamGeometry {
  std::array<int, 3> nodes{16, 4, 1};
  std::array<double, 3> lengths{4.0, 1.0, 1.0};
};

/// Cantilever clamped on x = 0; loads on the top face (y = max in 2D,
/// z = max in 3D) away from the clamp.
GridMesh make_beam2d(const BeamGeometry& geometry = {});
GridMesh make_beam3d(const BeamGeometry& geometry = {{28, 12, 12}, {7.0, 3.0, 3.0}});

struct LShapeGeometry {
  int nx = 16;          // bounding grid nodes along x
  int ny = 8;           // bounding grid nodes along y
  int arm_width = 4;    // nodes across the vertical arm (x direction)
  int arm_height = 4;   // nodes across the bottom arm (y direction)
  double spacing = 0.25;
};

/// L-shaped domain: bottom arm spans the full width, vertical arm rises on the
/// left. Clamped on the top edge of the vertical arm; loads on the top edge of
/// the bottom arm to the right of the vertical arm.
GridMesh make_lshape2d(const LShapeGeometry& geometry = {});

// ---------------------------------------------------------------------------
// Material

struct Lame {
  double lambda = 0.0;
  double mu = 0.0;
};

Lame lame_from_E_nu(double E, double nu);

struct Material {
  double E = 500.0;
  double nu = 0.4;
  double lambda = 0.0;
  double mu = 0.0;

  static Material from_E_nu(double E, double nu);
};

// ---------------------------------------------------------------------------
// Kinematics and constitutive law

struct DeformationState {
  Eigen::Matrix3d F = Eigen::Matrix3d::Identity();
  double J = 1.0;
  double Ic = 3.0;

  static DeformationState from_F(const Eigen::Matrix3d& F);
};

struct QuadraturePoint {
  Eigen::Vector3d xi = Eigen::Vector3d::Zero();
  double weight = 1.0;
};

/// Tensor-product 2-point Gauss rule: 4 points in 2D, 8 in 3D.
std::vector<QuadraturePoint> gauss_points(int dim);

struct ShapeGradients {
  Eigen::VectorXd N;       // corners
  Eigen::MatrixXd dN_dX;   // corners x dim, reference configuration
  double det_j = 0.0;      // Jacobian of the isoparametric map
};

/// `coords` is corners x dim (Q4 when dim = 2, H8 when dim = 3).
ShapeGradients shape_gradients(const Eigen::MatrixXd& coords, const Eigen::Vector3d& xi);

/// F = I + grad u at reference point `xi`; 2D states embed F in 3x3 with
/// F(2,2) = 1 (plane strain).
DeformationState deformation_state(const Eigen::MatrixXd& coords, const Eigen::MatrixXd& u,
                                   const Eigen::Vector3d& xi);

double strain_energy(const DeformationState& state, const Material& mat);

/// First Piola-Kirchhoff stress dW/dF.
Eigen::Matrix3d pk1_stress(const DeformationState& state, const Material& mat);

/// dP/dF as a 9x9 matrix indexed (3 * i + J, 3 * k + L).
Eigen::Matrix<double, 9, 9> material_tangent(const DeformationState& state, const Material& mat);

struct ElementResult {
  Eigen::VectorXd r;   // corners * dim, ordered (corner, component)
  Eigen::MatrixXd K;
  double energy = 0.0;
};

ElementResult element_forces(const Eigen::MatrixXd& coords, const Eigen::MatrixXd& u,
                             const Material& mat, bool with_tangent = true);

/// Column-wise central differences of the element internal force.
Eigen::MatrixXd element_tangent_fd(const Eigen::MatrixXd& coords, const Eigen::MatrixXd& u,
                                   const Material& mat, double step = 1e-7);

// ---------------------------------------------------------------------------
// Global system and Newton-Raphson

struct SystemState {
  Eigen::VectorXd residual;               // f_int - f_ext, zero on Dirichlet dofs
  Eigen::SparseMatrix<double> tangent;    // identity rows/cols on Dirichlet dofs
};

Eigen::VectorXd internal_forces(const GridMesh& mesh, const Material& mat, const Eigen::VectorXd& u);

SystemState assemble_system(const GridMesh& mesh, const Material& mat, const Eigen::VectorXd& u,
                            const Eigen::VectorXd& f_ext, bool with_tangent = true);

/// Total potential energy sum_e int W dV - f_ext . u.
double total_potential(const GridMesh& mesh, const Material& mat, const Eigen::VectorXd& u,
                       const Eigen::VectorXd& f_ext);

/// Dirichlet dofs as a boolean mask over the compact numbering.
std::vector<std::uint8_t> dirichlet_dof_mask(const GridMesh& mesh);

struct NewtonOptions {
  double relative_tolerance = 1e-8;
  int max_iterations = 20;
  double initial_increment = 1.0;
  double min_increment = 1.0 / 64.0;
  bool grow_increment = true;
  int successes_before_growth = 2;
};

struct FemSolution {
  Eigen::VectorXd u;
  Eigen::VectorXd f_ext;
  bool converged = false;
  int newton_iterations = 0;
  int load_steps = 0;
  double residual_norm = 0.0;
  /// max-norm residual per iteration of the final load step
  std::vector<double> last_step_residuals;
};

FemSolution newton_solve(const GridMesh& mesh, const Material& mat, const Eigen::VectorXd& f_ext,
                         const NewtonOptions& opts = {});

/// Corner coordinates of element `e` (corners x dim).
Eigen::MatrixXd element_coordinates(const GridMesh& mesh, int e);

}  // namespace nfem::fem
