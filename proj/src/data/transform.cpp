#include <algorithm>
#include <cmath>
#include <numeric>

#include "nfem/dataset.hpp"

namespace nfem::data {

// ---------------------------------------------------------------------------
// Embedding

GridEmbedding embedding_for(const fem::GridMesh& mesh) {
  GridEmbedding e;
  e.grid_shape = mesh.grid_shape();
  e.active_to_raster = mesh.active_nodes();
  e.active = mesh.active_mask();
  return e;
}

SampleSet embed(const SampleSet& compact, const GridEmbedding& embedding) {
  if (compact.node_count() != embedding.active_to_raster.size())
    throw ShapeError("data", "sample set has " + std::to_string(compact.node_count()) +
                                 " nodes, embedding expects " + std::to_string(embedding.active_to_raster.size()));
  SampleSet out = compact;
  out.grid_shape = embedding.grid_shape;
  const std::size_t dim = compact.dim;
  const std::size_t values = out.values_per_sample();
  for (std::size_t s = 0; s < compact.samples.size(); ++s) {
    auto scatter = [&](const std::vector<double>& in) {
      std::vector<double> v(values, 0.0);
      for (std::size_t a = 0; a < embedding.active_to_raster.size(); ++a)
        for (std::size_t c = 0; c < dim; ++c) v[embedding.active_to_raster[a] * dim + c] = in[a * dim + c];
      return v;
    };
    out.samples[s].f = scatter(compact.samples[s].f);
    out.samples[s].u = scatter(compact.samples[s].u);
  }
  return out;
}

SampleSet extract(const SampleSet& grid, const GridEmbedding& embedding) {
  if (grid.grid_shape != embedding.grid_shape) throw ShapeError("data", "grid shape does not match the embedding");
  SampleSet out = grid;
  out.grid_shape = {static_cast<int>(embedding.active_to_raster.size())};
  const std::size_t dim = grid.dim;
  for (std::size_t s = 0; s < grid.samples.size(); ++s) {
    auto gather = [&](const std::vector<double>& in) {
      std::vector<double> v(embedding.active_to_raster.size() * dim);
      for (std::size_t a = 0; a < embedding.active_to_raster.size(); ++a)
        for (std::size_t c = 0; c < dim; ++c) v[a * dim + c] = in[embedding.active_to_raster[a] * dim + c];
      return v;
    };
    out.samples[s].f = gather(grid.samples[s].f);
    out.samples[s].u = gather(grid.samples[s].u);
  }
  return out;
}

SampleSet embed_lshape(const SampleSet& l_samples, const fem::GridMesh& lshape_mesh) {
  if (l_samples.node_count() != static_cast<std::size_t>(lshape_mesh.active_count()))
    throw ShapeError("data", "L-shape samples must be indexed over the " +
                                 std::to_string(lshape_mesh.active_count()) + " active nodes");
  return embed(l_samples, embedding_for(lshape_mesh));
}

// ---------------------------------------------------------------------------
// Orderings

OrderingMap OrderingMap::inverse() const {
  OrderingMap inv;
  inv.strategy = strategy;
  inv.permutation.assign(permutation.size(), -1);
  for (std::size_t i = 0; i < permutation.size(); ++i) inv.permutation[permutation[i]] = static_cast<int>(i);
  return inv;
}

bool OrderingMap::is_bijection() const {
  std::vector<char> seen(permutation.size(), 0);
  for (int p : permutation) {
    if (p < 0 || static_cast<std::size_t>(p) >= permutation.size() || seen[p]) return false;
    seen[p] = 1;
  }
  return true;
}

OrderingStrategy parse_ordering(const std::string& name) {
  if (name == "preferred") return OrderingStrategy::preferred;
  if (name == "gmsh" || name == "gmsh-like" || name == "gmsh_like") return OrderingStrategy::gmsh_like;
  if (name == "random") return OrderingStrategy::random;
  throw InvalidArgument("data", "unknown ordering strategy '" + name + "' (preferred, gmsh-like, random)");
}

std::string to_string(OrderingStrategy strategy) {
  switch (strategy) {
    case OrderingStrategy::preferred: return "preferred";
    case OrderingStrategy::gmsh_like: return "gmsh-like";
    case OrderingStrategy::random: return "random";
  }
  return "?";
}

OrderingMap make_ordering(OrderingStrategy strategy, const std::vector<int>& grid_shape, std::uint64_t seed) {
  const std::size_t n = std::accumulate(grid_shape.begin(), grid_shape.end(), std::size_t{1},
                                        [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
  OrderingMap map;
  map.strategy = strategy;
  map.permutation.resize(n);
  std::iota(map.permutation.begin(), map.permutation.end(), 0);
  switch (strategy) {
    case OrderingStrategy::preferred:
      break;
    case OrderingStrategy::random: {
      std::mt19937_64 rng(seed);
      std::shuffle(map.permutation.begin(), map.permutation.end(), rng);
      break;
    }
    case OrderingStrategy::gmsh_like: {
      // Corners first, then edge (and in 3D face) nodes, then the interior;
      // raster order within each class.
      const int rank = static_cast<int>(grid_shape.size());
      std::vector<int> boundary_axes(n, 0);
      for (std::size_t node = 0; node < n; ++node) {
        std::size_t rest = node;
        for (int a = rank - 1; a >= 0; --a) {
          const int i = static_cast<int>(rest % grid_shape[a]);
          rest /= grid_shape[a];
          if (i == 0 || i == grid_shape[a] - 1) ++boundary_axes[node];
        }
      }
      std::vector<int> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return boundary_axes[a] > boundary_axes[b]; });
      for (std::size_t pos = 0; pos < n; ++pos) map.permutation[order[pos]] = static_cast<int>(pos);
      break;
    }
  }
  return map;
}

SampleSet apply_ordering(const SampleSet& samples, const OrderingMap& map) {
  if (map.permutation.size() != samples.node_count())
    throw ShapeError("data", "ordering has " + std::to_string(map.permutation.size()) + " nodes, samples have " +
                                 std::to_string(samples.node_count()));
  if (!map.is_bijection()) throw InvalidArgument("data", "ordering map is not a bijection");
  SampleSet out = samples;
  const std::size_t dim = samples.dim;
  for (std::size_t s = 0; s < samples.samples.size(); ++s) {
    for (std::size_t node = 0; node < map.permutation.size(); ++node) {
      const std::size_t to = static_cast<std::size_t>(map.permutation[node]);
      for (std::size_t c = 0; c < dim; ++c) {
        out.samples[s].f[to * dim + c] = samples.samples[s].f[node * dim + c];
        out.samples[s].u[to * dim + c] = samples.samples[s].u[node * dim + c];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Noise and splitting

SampleSet inject_noise(const SampleSet& samples, double threshold, double level, std::uint64_t seed) {
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("data", "noise level must lie in (0, 1)");
  SampleSet out = samples;
  out.noise = NoiseSpec{threshold, level};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> eta(0.0, level);
  for (auto& s : out.samples) {
    if (!(force_magnitude(s) < threshold)) continue;
    for (double& u : s.u) u *= 1.0 + eta(rng);
  }
  return out;
}

std::pair<SampleSet, SampleSet> split_dataset(const SampleSet& samples, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw InvalidArgument("data", "test fraction must lie in (0, 1)");
  const std::size_t n = samples.samples.size();
  if (n < 2) throw InvalidArgument("data", "need at least 2 samples to split");
  const std::size_t n_test =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction)), 1, n - 1);

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::sort(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());

  SampleSet test = samples, train = samples;
  test.samples.clear();
  train.samples.clear();
  for (std::size_t k = 0; k < n; ++k) (k < n_test ? test : train).samples.push_back(samples.samples[idx[k]]);
  return {std::move(train), std::move(test)};
}

}  // namespace nfem::data
