#include <algorithm>
#include <numeric>

#include "nfem/fem.hpp"

namespace nfem::fem {

namespace {

constexpr std::array<std::array<int, 3>, 8> kCornerOffsets{{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};

}  // namespace

GridMesh::GridMesh(int dim, std::array<int, 3> nodes, std::array<double, 3> spacing,
                   std::vector<std::uint8_t> active)
    : dim_(dim), nodes_(nodes), spacing_(spacing), active_(std::move(active)) {
  if (dim_ != 2 && dim_ != 3) throw InvalidArgument("fem", "mesh dimension must be 2 or 3");
  if (dim_ == 2) {
    nodes_[2] = 1;
    spacing_[2] = 1.0;
  }
  for (int a = 0; a < dim_; ++a) {
    if (nodes_[a] < 2) throw InvalidArgument("fem", "each axis needs at least 2 nodes");
    if (!(spacing_[a] > 0.0)) throw InvalidArgument("fem", "grid spacing must be positive");
  }
  const int count = grid_node_count();
  if (active_.empty()) active_.assign(count, 1);
  if (static_cast<int>(active_.size()) != count)
    throw InvalidArgument("fem", "active mask size does not match the node grid");

  compact_.assign(count, -1);
  for (int n = 0; n < count; ++n) {
    if (active_[n]) {
      compact_[n] = static_cast<int>(active_nodes_.size());
      active_nodes_.push_back(n);
    }
  }

  const int ez = dim_ == 3 ? nodes_[2] - 1 : 1;
  const int corners = corners_per_element();
  for (int ix = 0; ix + 1 < nodes_[0]; ++ix) {
    for (int iy = 0; iy + 1 < nodes_[1]; ++iy) {
      for (int iz = 0; iz < ez; ++iz) {
        std::array<int, 8> element{};
        element.fill(-1);
        bool all_active = true;
        for (int c = 0; c < corners; ++c) {
          const auto& o = kCornerOffsets[c];
          const int n = node_index(ix + o[0], iy + o[1], iz + o[2]);
          element[c] = n;
          all_active = all_active && active_[n];
        }
        if (all_active) elements_.push_back(element);
      }
    }
  }
}

std::vector<int> GridMesh::grid_shape() const {
  return {nodes_.begin(), nodes_.begin() + dim_};
}

int GridMesh::node_index(int ix, int iy, int iz) const {
  return (ix * nodes_[1] + iy) * nodes_[2] + iz;
}

std::array<int, 3> GridMesh::node_position(int node) const {
  const int iz = node % nodes_[2];
  const int rest = node / nodes_[2];
  return {rest / nodes_[1], rest % nodes_[1], iz};
}

Eigen::Vector3d GridMesh::coordinates(int node) const {
  const auto p = node_position(node);
  return {p[0] * spacing_[0], p[1] * spacing_[1], dim_ == 3 ? p[2] * spacing_[2] : 0.0};
}

void GridMesh::set_dirichlet_nodes(std::vector<int> nodes) {
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  dirichlet_ = std::move(nodes);
}

void GridMesh::set_load_nodes(std::vector<int> nodes) {
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  load_ = std::move(nodes);
}

void GridMesh::validate() const {
  const int count = grid_node_count();
  auto check_set = [&](const std::vector<int>& set, const char* name) {
    for (int n : set) {
      if (n < 0 || n >= count)
        throw InvalidArgument("fem", std::string(name) + " node index out of range");
      if (!active_[n]) throw InvalidArgument("fem", std::string(name) + " node is inactive");
    }
  };
  check_set(dirichlet_, "dirichlet");
  check_set(load_, "load");
  std::vector<int> both;
  std::set_intersection(dirichlet_.begin(), dirichlet_.end(), load_.begin(), load_.end(),
                        std::back_inserter(both));
  if (!both.empty()) throw InvalidArgument("fem", "dirichlet and load node sets overlap");
  for (const auto& e : elements_) {
    for (int c = 0; c < corners_per_element(); ++c) {
      if (e[c] < 0 || e[c] >= count) throw InvalidArgument("fem", "malformed element connectivity");
      if (!active_[e[c]]) throw InvalidArgument("fem", "element references an inactive node");
    }
  }
}

GridMesh make_beam2d(const BeamGeometry& g) {
  const auto& n = g.nodes;
  GridMesh mesh(2, {n[0], n[1], 1},
                {g.lengths[0] / (n[0] - 1), g.lengths[1] / (n[1] - 1), 1.0});
  std::vector<int> clamp, load;
  for (int iy = 0; iy < n[1]; ++iy) clamp.push_back(mesh.node_index(0, iy));
  for (int ix = 1; ix < n[0]; ++ix) load.push_back(mesh.node_index(ix, n[1] - 1));
  mesh.set_dirichlet_nodes(std::move(clamp));
  mesh.set_load_nodes(std::move(load));
  mesh.validate();
  return mesh;
}

GridMesh make_beam3d(const BeamGeometry& g) {
  const auto& n = g.nodes;
  GridMesh mesh(3, n,
                {g.lengths[0] / (n[0] - 1), g.lengths[1] / (n[1] - 1), g.lengths[2] / (n[2] - 1)});
  std::vector<int> clamp, load;
  for (int iy = 0; iy < n[1]; ++iy)
    for (int iz = 0; iz < n[2]; ++iz) clamp.push_back(mesh.node_index(0, iy, iz));
  for (int ix = 1; ix < n[0]; ++ix)
    for (int iy = 0; iy < n[1]; ++iy) load.push_back(mesh.node_index(ix, iy, n[2] - 1));
  mesh.set_dirichlet_nodes(std::move(clamp));
  mesh.set_load_nodes(std::move(load));
  mesh.validate();
  return mesh;
}

GridMesh make_lshape2d(const LShapeGeometry& g) {
  if (g.arm_width < 2 || g.arm_height < 2 || g.arm_width >= g.nx || g.arm_height >= g.ny)
    throw InvalidArgument("fem", "L-shape arms must fit inside the bounding grid");
  std::vector<std::uint8_t> active(static_cast<std::size_t>(g.nx) * g.ny, 0);
  for (int ix = 0; ix < g.nx; ++ix)
    for (int iy = 0; iy < g.ny; ++iy)
      active[ix * g.ny + iy] = (iy < g.arm_height || ix < g.arm_width) ? 1 : 0;
  GridMesh mesh(2, {g.nx, g.ny, 1}, {g.spacing, g.spacing, 1.0}, std::move(active));
  std::vector<int> clamp, load;
  for (int ix = 0; ix < g.arm_width; ++ix) clamp.push_back(mesh.node_index(ix, g.ny - 1));
  for (int ix = g.arm_width; ix < g.nx; ++ix) load.push_back(mesh.node_index(ix, g.arm_height - 1));
  mesh.set_dirichlet_nodes(std::move(clamp));
  mesh.set_load_nodes(std::move(load));
  mesh.validate();
  return mesh;
}

Eigen::MatrixXd element_coordinates(const GridMesh& mesh, int e) {
  const int corners = mesh.corners_per_element();
  const int dim = mesh.dim();
  Eigen::MatrixXd coords(corners, dim);
  const auto& element = mesh.elements().at(e);
  for (int c = 0; c < corners; ++c) coords.row(c) = mesh.coordinates(element[c]).head(dim).transpose();
  return coords;
}

}  // namespace nfem::fem
