#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "nfem/dataset.hpp"

namespace nfem::data {

int worker_count(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("NFEM_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = std::min(n, cap);
  }
  return std::max(1, n);
}

LoadCase generate_load_case(const fem::GridMesh& mesh, const ForceRange& range, std::mt19937_64& rng) {
  const auto& nodes = mesh.load_nodes();
  if (nodes.empty()) throw InvalidArgument("data", "mesh has no load nodes");
  if (range.min > range.max) throw InvalidArgument("data", "force range min exceeds max");
  LoadCase lc;
  lc.f = Eigen::VectorXd::Zero(mesh.dof_count());
  std::uniform_int_distribution<std::size_t> pick(0, nodes.size() - 1);
  lc.node = nodes[pick(rng)];
  std::uniform_real_distribution<double> component(range.min, range.max);
  for (int i = 0; i < mesh.dim(); ++i)
    lc.f[mesh.dof(lc.node, i)] = range.min == range.max ? range.min : component(rng);
  return lc;
}

namespace {

std::mt19937_64 sample_stream(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

SampleSet generate_dataset(const fem::GridMesh& mesh, const fem::Material& mat, std::size_t count,
                           const ForceRange& range, std::uint64_t seed, const GenerateOptions& opts) {
  if (count < 1) throw InvalidArgument("data", "dataset count must be at least 1");
  mesh.validate();

  SampleSet set;
  set.problem_id = opts.problem_id;
  set.dim = mesh.dim();
  if (mesh.active_count() == mesh.grid_node_count())
    set.grid_shape = mesh.grid_shape();
  else
    set.grid_shape = {mesh.active_count()};
  set.force_range = range;
  set.seed = seed;
  set.samples.resize(count);

  const std::size_t redraw_budget = static_cast<std::size_t>(opts.max_redraw_rate * static_cast<double>(count));
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> redraws{0};
  std::atomic<bool> abort{false};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count || abort) return;
      try {
        auto rng = sample_stream(seed, i);
        for (;;) {
          const LoadCase lc = generate_load_case(mesh, range, rng);
          try {
            const auto sol = fem::newton_solve(mesh, mat, lc.f, opts.newton);
            set.samples[i].f.assign(lc.f.data(), lc.f.data() + lc.f.size());
            set.samples[i].u.assign(sol.u.data(), sol.u.data() + sol.u.size());
            break;
          } catch (const fem::NonConverged&) {
            if (redraws.fetch_add(1) + 1 > redraw_budget)
              throw Error("data", "redraw rate exceeded " + std::to_string(opts.max_redraw_rate * 100.0) +
                                      "% of " + std::to_string(count) + " load cases");
          }
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        abort = true;
        return;
      }
    }
  };

  const int threads = std::min<int>(worker_count(opts.threads), static_cast<int>(count));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  set.redraws = redraws;
  return set;
}

}  // namespace nfem::data
