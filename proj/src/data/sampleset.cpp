#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "nfem/dataset.hpp"

namespace nfem::data {

std::size_t SampleSet::node_count() const {
  return std::accumulate(grid_shape.begin(), grid_shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

namespace {

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool bits_equal(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace

bool same_content(const SampleSet& a, const SampleSet& b) {
  if (a.dim != b.dim || a.grid_shape != b.grid_shape || a.samples.size() != b.samples.size() ||
      a.seed != b.seed || !bits_equal(a.force_range.min, b.force_range.min) ||
      !bits_equal(a.force_range.max, b.force_range.max) || a.noise.has_value() != b.noise.has_value())
    return false;
  if (a.noise && (!bits_equal(a.noise->threshold, b.noise->threshold) || !bits_equal(a.noise->level, b.noise->level)))
    return false;
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    if (!bits_equal(a.samples[i].f, b.samples[i].f) || !bits_equal(a.samples[i].u, b.samples[i].u)) return false;
  return true;
}

double force_magnitude(const Sample& s) {
  double m = 0.0;
  for (double v : s.f) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace nfem::data
