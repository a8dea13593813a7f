#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "nfem/cli.hpp"
#include "nfem/csv.hpp"
#include "nfem/error.hpp"
#include "nfem/metrics.hpp"
#include "nfem/train.hpp"

namespace nfem::cli {

namespace {

namespace fs = std::filesystem;

const std::vector<std::string> kCommands = {"generate", "train",          "evaluate",        "sweep",
                                            "ablate-ordering", "ablate-channels", "bench"};

// Dataset split and ordering shared by the commands that consume a dataset.
struct Prepared {
  fem::GridMesh mesh;
  data::SampleSet train;
  data::SampleSet test;
  data::OrderingMap ordering;
  std::vector<double> raster_mask;  // empty when every node is active
  std::vector<double> mask;         // in the ordered frame
};

std::vector<double> active_mask(const fem::GridMesh& mesh) {
  const auto& active = mesh.active_mask();
  if (std::all_of(active.begin(), active.end(), [](std::uint8_t a) { return a != 0; })) return {};
  return {active.begin(), active.end()};
}

Prepared prepare(const RunConfig& c) {
  Prepared p;
  p.mesh = build_mesh(c);
  const auto all = data::load_dataset(resolve_path(c, c.dataset.file), p.mesh.grid_shape());
  if (all.dim != c.dim()) throw InvalidArgument("cli", "dataset dimension does not match problem " + c.problem);
  auto [train, test] = data::split_dataset(all, c.dataset.test_fraction, c.dataset.split_seed);
  p.ordering = data::make_ordering(data::parse_ordering(c.dataset.ordering), p.mesh.grid_shape(), c.dataset.ordering_seed);
  p.train = data::apply_ordering(train, p.ordering);
  p.test = data::apply_ordering(test, p.ordering);
  p.raster_mask = active_mask(p.mesh);
  if (!p.raster_mask.empty()) {
    p.mask.assign(p.raster_mask.size(), 0.0);
    for (std::size_t node = 0; node < p.mask.size(); ++node) p.mask[p.ordering.permutation[node]] = p.raster_mask[node];
  }
  return p;
}

// Ordered-frame field back to raster node order.
std::vector<double> to_raster(const std::vector<double>& field, const data::OrderingMap& map, int components) {
  std::vector<double> out(field.size());
  for (std::size_t node = 0; node < map.permutation.size(); ++node)
    for (int k = 0; k < components; ++k)
      out[node * components + k] = field[static_cast<std::size_t>(map.permutation[node]) * components + k];
  return out;
}

train::TrainConfig train_config(const RunConfig& c, std::ostream& log) {
  train::TrainConfig tc;
  tc.epochs = c.train.epochs;
  tc.batch_size = c.train.batch_size;
  tc.lr = c.train.lr;
  tc.mc_samples = c.train.mc_samples;
  tc.kl_scale = c.train.kl_scale;
  tc.seed = c.train.seed;
  if (c.train.log_every > 0) {
    const int every = c.train.log_every;
    const int last = c.train.epochs;
    tc.on_epoch = [&log, every, last](int epoch, double loss) {
      if (epoch == 1 || epoch % every == 0 || epoch == last)
        log << "epoch " << epoch << "/" << last << " loss " << csv::number(loss) << "\n" << std::flush;
    };
  }
  return tc;
}

unet::Model load_model(const RunConfig& c, const Prepared* p) {
  auto model = unet::load_checkpoint(resolve_path(c, c.model.checkpoint));
  if (p && model.config().grid_shape != p->mesh.grid_shape())
    throw InvalidArgument("cli", "checkpoint grid shape does not match the dataset grid");
  return model;
}

int sweep_node(const RunConfig& c, const fem::GridMesh& mesh) {
  if (c.sweep.node >= 0) {
    if (c.sweep.node >= mesh.grid_node_count() || !mesh.is_active(c.sweep.node))
      throw InvalidArgument("cli", "sweep.node " + std::to_string(c.sweep.node) + " is not an active node");
    return c.sweep.node;
  }
  if (mesh.load_nodes().empty()) throw InvalidArgument("cli", "mesh has no load nodes");
  return mesh.load_nodes().back();
}

void require_preferred(const RunConfig& c, const char* command) {
  if (data::parse_ordering(c.dataset.ordering) != data::OrderingStrategy::preferred)
    throw InvalidArgument("cli", std::string(command) + " requires dataset.ordering = preferred");
}

using Artifacts = std::vector<Manifest::Artifact>;

void add(Artifacts& out, const RunConfig& c, const std::string& name, bool volatile_content = false) {
  out.push_back(checksum_artifact(c.output_dir, name, volatile_content));
}

Artifacts cmd_generate(const RunConfig& c, std::ostream& log) {
  const auto mesh = build_mesh(c);
  data::GenerateOptions opts;
  opts.problem_id = c.problem;
  opts.max_redraw_rate = c.dataset.max_redraw_rate;
  opts.threads = c.threads;
  log << "generating " << c.dataset.count << " samples for " << c.problem << "\n" << std::flush;
  auto set = data::generate_dataset(mesh, build_material(c), static_cast<std::size_t>(c.dataset.count),
                                    {c.dataset.force_min, c.dataset.force_max}, c.dataset.seed, opts);
  if (c.problem == "lshape2d") set = data::embed_lshape(set, mesh);
  if (c.dataset.noise)
    set = data::inject_noise(set, c.dataset.noise_threshold, c.dataset.noise_level, c.dataset.noise_seed);
  log << "redraws: " << set.redraws << "\n";
  data::save_dataset(set, resolve_path(c, c.dataset.file));
  Artifacts out;
  if (!fs::path(c.dataset.file).is_absolute()) add(out, c, c.dataset.file);
  return out;
}

Artifacts cmd_train(const RunConfig& c, std::ostream& log) {
  const auto p = prepare(c);
  unet::Model model(build_model_config(c, p.mesh.grid_shape()), c.model.seed);
  log << "training " << c.model.mode << " U-Net (" << model.parameter_count() << " parameters) on "
      << p.train.size() << " samples\n" << std::flush;
  auto tc = train_config(c, log);
  tc.node_mask = p.mask;
  const auto history = train::train(model, p.train, tc);
  unet::save_checkpoint(model, resolve_path(c, c.model.checkpoint));
  history.write_csv(fs::path(c.output_dir) / "history.csv");
  log << "fit " << (history.fit_ok() ? "ok" : "weak") << ": loss " << csv::number(history.loss.front()) << " -> "
      << csv::number(history.loss.back()) << "\n";
  Artifacts out;
  if (!fs::path(c.model.checkpoint).is_absolute()) add(out, c, c.model.checkpoint);
  add(out, c, "history.csv");
  return out;
}

Artifacts cmd_evaluate(const RunConfig& c, std::ostream& log) {
  const auto p = prepare(c);
  const auto model = load_model(c, &p);
  metrics::EvalOptions eo;
  eo.node_mask = p.mask;
  eo.passes = c.eval.passes;
  eo.seed = c.eval.seed;
  eo.keep_fields = true;
  const auto ev = metrics::evaluate(model, p.test, eo);
  metrics::report_table(ev).write(fs::path(c.output_dir) / "report.csv");
  log << "e_bar " << csv::number(ev.report.e_bar) << " sigma_e " << csv::number(ev.report.sigma_e)
      << " mean relative l2 " << csv::number(ev.mean_relative_l2) << " slope " << csv::number(ev.slope) << "\n";

  Artifacts out;
  add(out, c, "report.csv");
  const int dim = c.dim();
  const bool has_std = model.config().mode != unet::Mode::deterministic;
  const int cases = std::min<int>(c.eval.vtk_cases, static_cast<int>(p.test.size()));
  for (int k = 0; k < cases; ++k) {
    const auto& s = p.test.samples[k];
    const auto ref = to_raster(s.u, p.ordering, dim);
    const auto pred = to_raster(ev.predictions[k], p.ordering, dim);
    const auto err = metrics::nodal_error_field(pred, ref, dim);
    std::vector<VtkField> fields{{"displacement_fem", ref, dim},
                                 {"displacement_pred", pred, dim},
                                 {"nodal_l2_error", err.per_node, 1}};
    if (has_std) fields.push_back({"predictive_std", to_raster(ev.stds[k], p.ordering, dim), dim});
    const std::string name = "case_" + std::to_string(k) + ".vtk";
    write_vtk(fs::path(c.output_dir) / name, p.mesh, fields, "nfem " + c.problem + " test case " + std::to_string(k));
    add(out, c, name);
  }
  return out;
}

Artifacts cmd_sweep(const RunConfig& c, std::ostream& log) {
  require_preferred(c, "sweep");
  const auto mesh = build_mesh(c);
  const auto model = load_model(c, nullptr);
  uq::SweepOptions so;
  so.node = sweep_node(c, mesh);
  so.component = c.sweep.component;
  so.magnitudes = uq::linspace(c.sweep.min, c.sweep.max, c.sweep.count);
  so.passes = c.sweep.passes;
  so.seed = c.sweep.seed;
  log << "sweeping node " << so.node << " component " << so.component << " over " << so.magnitudes.size()
      << " forces\n" << std::flush;
  const auto rows = uq::force_sweep(model, mesh, build_material(c), so);
  uq::sweep_table(rows).write(fs::path(c.output_dir) / "sweep.csv");
  Artifacts out;
  add(out, c, "sweep.csv");
  return out;
}

metrics::AblationSetup ablation_setup(const RunConfig& c, const Prepared& p, std::ostream& log) {
  metrics::AblationSetup setup;
  setup.model = build_model_config(c, p.mesh.grid_shape());
  setup.model_seed = c.model.seed;
  setup.train = train_config(c, log);
  setup.train.node_mask = p.raster_mask;
  setup.ordering_seed = c.dataset.ordering_seed;
  return setup;
}

Artifacts cmd_ablate_ordering(const RunConfig& c, std::ostream& log) {
  require_preferred(c, "ablate-ordering");
  const auto p = prepare(c);
  std::vector<data::OrderingStrategy> strategies;
  for (const auto& s : c.ablate.strategies) strategies.push_back(data::parse_ordering(s));
  const auto rows = metrics::ablation_ordering(p.train, p.test, strategies, ablation_setup(c, p, log));
  metrics::ablation_table(rows).write(fs::path(c.output_dir) / "ablation_ordering.csv");
  for (const auto& r : rows) log << r.label << ": e_bar " << csv::number(r.report.e_bar) << "\n";
  Artifacts out;
  add(out, c, "ablation_ordering.csv", true);
  return out;
}

Artifacts cmd_ablate_channels(const RunConfig& c, std::ostream& log) {
  const auto p = prepare(c);
  const auto rows = metrics::ablation_channels(p.train, p.test, c.ablate.channels, ablation_setup(c, p, log));
  metrics::ablation_table(rows).write(fs::path(c.output_dir) / "ablation_channels.csv");
  for (const auto& r : rows) log << "c = " << r.channels << ": e_bar " << csv::number(r.report.e_bar) << "\n";
  Artifacts out;
  add(out, c, "ablation_channels.csv", true);
  return out;
}

template <class F>
double median_ms(int repeats, F&& body) {
  std::vector<double> ms;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  return ms[ms.size() / 2];
}

Artifacts cmd_bench(const RunConfig& c, std::ostream& log) {
  require_preferred(c, "bench");
  const auto mesh = build_mesh(c);
  const auto mat = build_material(c);
  const auto model = load_model(c, nullptr);
  const int node = sweep_node(c, mesh);
  const bool det = model.config().mode == unet::Mode::deterministic;
  const int passes = model.config().mode == unet::Mode::vb ? c.bench.passes : 1;

  csv::Table table({"force", "fem_ms", "newton_iterations", "load_steps", "unet_ms", "unet_passes", "converged"});
  for (double force : c.bench.forces) {
    const auto f = uq::point_load(mesh, node, c.sweep.component, force);
    const auto f_dofs = uq::grid_to_dofs(mesh, f);
    fem::FemSolution sol;
    bool converged = true;
    double fem_ms = 0.0;
    try {
      fem_ms = median_ms(c.bench.repeats, [&] { sol = fem::newton_solve(mesh, mat, f_dofs); });
    } catch (const fem::NonConverged&) {
      converged = false;
      fem_ms = std::numeric_limits<double>::quiet_NaN();
    }
    const double unet_ms = median_ms(c.bench.repeats, [&] {
      if (det)
        uq::predict_det(model, f);
      else
        uq::predict_mc(model, f, passes, c.sweep.seed);
    });
    table.add_row({csv::number(force), csv::number(fem_ms), std::to_string(converged ? sol.newton_iterations : 0),
                   std::to_string(converged ? sol.load_steps : 0), csv::number(unet_ms), std::to_string(passes),
                   converged ? "true" : "false"});
    log << "F = " << csv::number(force) << " N: fem " << csv::number(fem_ms) << " ms, U-Net "
        << csv::number(unet_ms) << " ms\n" << std::flush;
  }
  table.write(fs::path(c.output_dir) / "bench.csv");
  Artifacts out;
  add(out, c, "bench.csv", true);
  return out;
}

// Splits `--key value` / `--key=value` pairs left over after CLI11 parsing.
std::vector<std::pair<std::string, std::string>> flag_pairs(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0 || arg.size() == 2)
      throw InvalidArgument("cli", "unexpected argument '" + arg + "' (overrides are --key value)");
    const std::string body = arg.substr(2);
    if (const auto eq = body.find('='); eq != std::string::npos) {
      pairs.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else {
      if (i + 1 >= extras.size()) throw InvalidArgument("config", "--" + body + ": missing value for '" + body + "'");
      pairs.emplace_back(body, extras[++i]);
    }
  }
  return pairs;
}

std::vector<std::pair<std::string, std::string>> resolved_pairs(const RunConfig& c) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream in(echo(c));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    pairs.emplace_back(line.substr(0, eq), line.substr(eq + 3));
  }
  return pairs;
}

// Runs a command, echoes the resolved config and writes the manifest.
Artifacts execute(const std::string& command, const RunConfig& c, std::ostream& log) {
  fs::create_directories(c.output_dir);
  {
    std::ofstream out(fs::path(c.output_dir) / "config.resolved");
    out << echo(c);
    if (!out) throw IoError("cli", "cannot write config.resolved to " + c.output_dir);
  }
  auto artifacts = run_command(command, c, log);
  artifacts.insert(artifacts.begin(), checksum_artifact(c.output_dir, "config.resolved", true));
  Manifest m{command, resolved_pairs(c), artifacts};
  write_manifest(fs::path(c.output_dir) / ("manifest." + command + ".txt"), m);
  return artifacts;
}

void replay(const fs::path& manifest_path, const std::string& output_dir, std::ostream& out, std::ostream& log) {
  const auto m = read_manifest(manifest_path);
  if (std::find(kCommands.begin(), kCommands.end(), m.command) == kCommands.end())
    throw FormatError("cli", "manifest names unknown command '" + m.command + "'");
  RunConfig c;
  for (const auto& [k, v] : m.config)
    if (!v.empty()) apply_override(c, k, v);
  if (!output_dir.empty()) c.output_dir = output_dir;
  resolve(c);
  execute(m.command, c, log);

  std::size_t checked = 0;
  std::vector<std::string> mismatched;
  for (const auto& a : m.artifacts) {
    if (a.volatile_content) continue;
    const auto now = checksum_artifact(c.output_dir, a.name, false);
    if (now.crc != a.crc || now.size != a.size) mismatched.push_back(a.name);
    ++checked;
  }
  if (!mismatched.empty()) {
    std::string names;
    for (const auto& n : mismatched) names += (names.empty() ? "" : ", ") + n;
    throw Error("cli", "replay of " + m.command + " differs in: " + names);
  }
  out << "replay " << m.command << ": " << checked << " artifacts reproduced bitwise\n";
}

}  // namespace

std::vector<Manifest::Artifact> run_command(const std::string& command, const RunConfig& c, std::ostream& log) {
  if (command == "generate") return cmd_generate(c, log);
  if (command == "train") return cmd_train(c, log);
  if (command == "evaluate") return cmd_evaluate(c, log);
  if (command == "sweep") return cmd_sweep(c, log);
  if (command == "ablate-ordering") return cmd_ablate_ordering(c, log);
  if (command == "ablate-channels") return cmd_ablate_channels(c, log);
  if (command == "bench") return cmd_bench(c, log);
  throw InvalidArgument("cli", "unknown command '" + command + "'");
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural-network surrogates for hyperelastic finite element problems", "nfem"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::string manifest_path;
  std::string replay_dir;

  for (const auto& name : kCommands) {
    auto* sub = app.add_subcommand(name, "run the " + name + " stage");
    sub->allow_extras();
    sub->add_option("--config", config_path, "key = value configuration file");
  }
  auto* keys = app.add_subcommand("keys", "list every configuration key with its default");
  auto* rep = app.add_subcommand("replay", "re-run a manifest and verify its artifacts bitwise");
  rep->add_option("--manifest", manifest_path, "manifest file written by a previous run")->required();
  rep->add_option("--output_dir", replay_dir, "directory for the re-run (default: the recorded one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "error: cli: " << e.what() << "\n";
    return 2;
  }

  try {
    auto* sub = app.get_subcommands().front();
    if (sub == keys) {
      out << echo(RunConfig{});
      return 0;
    }
    if (sub == rep) {
      replay(manifest_path, replay_dir, out, err);
      return 0;
    }
    RunConfig c = config_path.empty() ? RunConfig{} : parse_config_file(config_path);
    for (const auto& [k, v] : flag_pairs(sub->remaining())) apply_override(c, k, v);
    resolve(c);
    const auto artifacts = execute(sub->get_name(), c, err);
    for (const auto& a : artifacts) out << (fs::path(c.output_dir) / a.name).string() << "\n";
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
  }
  return 1;
}

}  // namespace nfem::cli
