#include "nfem/binary_io.hpp"
#include "nfem/dataset.hpp"

namespace nfem::data {

namespace {
constexpr std::string_view kMagic = "NFEMDS1\n";
}

void save_dataset(const SampleSet& samples, const std::filesystem::path& path) {
  const std::size_t values = samples.values_per_sample();
  io::Writer w(kMagic);
  w.put(static_cast<std::uint32_t>(samples.dim));
  w.put(static_cast<std::uint32_t>(samples.grid_shape.size()));
  for (int e : samples.grid_shape) w.put(static_cast<std::uint32_t>(e));
  w.put(static_cast<std::uint64_t>(samples.samples.size()));
  w.put(samples.force_range.min);
  w.put(samples.force_range.max);
  w.put(static_cast<std::uint64_t>(samples.seed));
  w.put(static_cast<std::uint8_t>(samples.noise ? 1 : 0));
  if (samples.noise) {
    w.put(samples.noise->threshold);
    w.put(samples.noise->level);
  }
  for (const auto& s : samples.samples) {
    if (s.f.size() != values || s.u.size() != values)
      throw ShapeError("data", "sample size does not match grid shape x dim");
    w.put_doubles(s.f);
    w.put_doubles(s.u);
  }
  w.write_file(path, "data");
}

SampleSet load_dataset(const std::filesystem::path& path, const std::optional<std::vector<int>>& expected_shape) {
  io::Reader r(path, kMagic, "data");
  SampleSet set;
  set.problem_id = path.stem().string();
  set.dim = static_cast<int>(r.get<std::uint32_t>());
  if (set.dim != 2 && set.dim != 3) throw FormatError("data", "dataset dim must be 2 or 3");
  const auto rank = r.get<std::uint32_t>();
  if (rank < 1 || rank > 3) throw FormatError("data", "dataset grid rank must be 1..3");
  for (std::uint32_t a = 0; a < rank; ++a) set.grid_shape.push_back(static_cast<int>(r.get<std::uint32_t>()));
  if (expected_shape && *expected_shape != set.grid_shape)
    throw ShapeError("data", "dataset grid shape does not match the requested problem grid");
  const auto count = r.get<std::uint64_t>();
  set.force_range.min = r.get<double>();
  set.force_range.max = r.get<double>();
  set.seed = r.get<std::uint64_t>();
  if (r.get<std::uint8_t>()) {
    NoiseSpec n;
    n.threshold = r.get<double>();
    n.level = r.get<double>();
    set.noise = n;
  }
  const std::size_t values = set.values_per_sample();
  std::vector<Sample> samples(count);
  for (auto& s : samples) {
    s.f.resize(values);
    s.u.resize(values);
    r.get_doubles(s.f);
    r.get_doubles(s.u);
  }
  r.expect_end();
  set.samples = std::move(samples);
  return set;
}

}  // namespace nfem::data
