#pragma once

// Force/displacement datasets in grid layout (node raster order, channels last).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nfem/fem.hpp"

namespace nfem::data {

struct ForceRange {
  double min = -2.5;
  double max = 2.5;
};

struct NoiseSpec {
  double threshold = 0.7;  // newtons, max-norm of the excited-node force
  double level = 0.2;      // std of the multiplicative perturbation
};

struct Sample {
  std::vector<double> f;
  std::vector<double> u;
};

struct SampleSet {
  std::string problem_id;
  int dim = 2;
  std::vector<int> grid_shape;
  std::vector<Sample> samples;
  ForceRange force_range;
  std::uint64_t seed = 0;
  std::optional<NoiseSpec> noise;
  std::size_t redraws = 0;  // reporting only, not persisted

  std::size_t node_count() const;
  std::size_t values_per_sample() const { return node_count() * static_cast<std::size_t>(dim); }
  std::size_t size() const { return samples.size(); }
};

/// Bitwise equality of everything persisted by save_dataset.
bool same_content(const SampleSet& a, const SampleSet& b);

// ---------------------------------------------------------------------------
// Generation

struct LoadCase {
  Eigen::VectorXd f;  // compact dof vector of the mesh
  int node = -1;      // excited raster node
};

/// One node drawn uniformly from the load set, each force component uniform in
/// [min, max]; every other dof is zero.
LoadCase generate_load_case(const fem::GridMesh& mesh, const ForceRange& range, std::mt19937_64& rng);

struct GenerateOptions {
  std::string problem_id = "beam2d";
  fem::NewtonOptions newton;
  double max_redraw_rate = 0.2;
  int threads = 0;  // 0: NFEM_THREADS or hardware concurrency
};

/// Solves `count` random load cases. Sample i uses its own random stream
/// derived from (seed, i), so the result does not depend on thread count.
/// Load cases whose Newton solve fails are redrawn from the same stream.
/// Values are ordered over the mesh's active nodes (raster order with
/// inactive nodes skipped); for fully active meshes that is the grid itself.
SampleSet generate_dataset(const fem::GridMesh& mesh, const fem::Material& mat, std::size_t count,
                           const ForceRange& range, std::uint64_t seed, const GenerateOptions& opts = {});

/// Worker count honouring the NFEM_THREADS cap.
int worker_count(int requested = 0);

// ---------------------------------------------------------------------------
// Grid embedding of partially active meshes

struct GridEmbedding {
  std::vector<int> grid_shape;        // full bounding grid
  std::vector<int> active_to_raster;  // compact node -> raster node
  std::vector<std::uint8_t> active;   // raster node -> active flag
};

GridEmbedding embedding_for(const fem::GridMesh& mesh);

/// Scatters samples indexed over active nodes into the bounding grid with
/// zeros at void nodes.
SampleSet embed(const SampleSet& compact, const GridEmbedding& embedding);
SampleSet extract(const SampleSet& grid, const GridEmbedding& embedding);

/// L-shape padding: 80 active nodes -> 16 x 8 grid.
SampleSet embed_lshape(const SampleSet& l_samples, const fem::GridMesh& lshape_mesh);

// ---------------------------------------------------------------------------
// Node ordering experiments

enum class OrderingStrategy { preferred, gmsh_like, random };

struct OrderingMap {
  std::vector<int> permutation;  // node index -> raster position
  OrderingStrategy strategy = OrderingStrategy::preferred;

  OrderingMap inverse() const;
  bool is_bijection() const;
};

OrderingMap make_ordering(OrderingStrategy strategy, const std::vector<int>& grid_shape, std::uint64_t seed = 7);
OrderingStrategy parse_ordering(const std::string& name);
std::string to_string(OrderingStrategy strategy);

SampleSet apply_ordering(const SampleSet& samples, const OrderingMap& map);

// ---------------------------------------------------------------------------
// Noise, splitting, persistence

/// Multiplies every displacement dof of samples whose excited-node force has
/// max-norm below `threshold` by (1 + eta), eta ~ Normal(0, level^2).
SampleSet inject_noise(const SampleSet& samples, double threshold, double level, std::uint64_t seed);

/// Max-norm of the force field (the excited-node force for single-load samples).
double force_magnitude(const Sample& s);

std::pair<SampleSet, SampleSet> split_dataset(const SampleSet& samples, double test_fraction, std::uint64_t seed);

void save_dataset(const SampleSet& samples, const std::filesystem::path& path);
/// When `expected_shape` is given, a file with a different grid shape is rejected.
SampleSet load_dataset(const std::filesystem::path& path,
                       const std::optional<std::vector<int>>& expected_shape = std::nullopt);

}  // namespace nfem::data
