#pragma once

// Run configuration, subcommands, manifests and file export for the `nfem`
// command-line tool.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "nfem/dataset.hpp"
#include "nfem/fem.hpp"
#include "nfem/unet.hpp"
#include "nfem/uq.hpp"

namespace nfem::cli {

struct RunConfig {
  std::string problem = "beam2d";  // beam2d | lshape2d | beam3d
  std::string output_dir = "nfem_out";
  int threads = 0;

  struct Geometry {
    // 0 selects the problem default.
    int nx = 0, ny = 0, nz = 0;
    double lx = 0, ly = 0, lz = 0;
    int arm_width = 4, arm_height = 4;
    double spacing = 0.25;
  } geometry;

  struct MaterialKeys {
    double E = 500.0;
    double nu = 0.4;
  } material;

  struct Dataset {
    std::string file = "dataset.bin";  // relative paths resolve against output_dir
    int count = 1000;
    double force_min = -2.5;
    double force_max = 2.5;
    std::uint64_t seed = 1;
    bool noise = false;
    double noise_threshold = 0.7;
    double noise_level = 0.2;
    std::uint64_t noise_seed = 11;
    double test_fraction = 0.05;
    std::uint64_t split_seed = 2;
    std::string ordering = "preferred";
    std::uint64_t ordering_seed = 7;
    double max_redraw_rate = 0.2;
  } dataset;

  struct ModelKeys {
    std::string mode = "deterministic";
    int levels = 0;  // 0: 3 in 2D, 4 in 3D
    int channels = 32;
    bool constant_channels = false;
    int input_pad = 2;
    double sigma_p = 0.1;
    std::uint64_t seed = 3;
    std::string checkpoint = "model.nfemw";
  } model;

  struct Train {
    int epochs = 0;  // 0: 600 in 2D, 75 in 3D
    int batch_size = 4;
    double lr = 1e-4;
    int mc_samples = 1;
    double kl_scale = 0.0;  // 0: batch_size / N
    std::uint64_t seed = 4;
    int log_every = 10;
  } train;

  struct Eval {
    int passes = 300;
    std::uint64_t seed = 5;
    int vtk_cases = 3;
  } eval;

  struct Sweep {
    int node = -1;  // raster node; -1: last load node
    int component = 1;
    double min = -8.0;
    double max = 8.0;
    int count = 17;
    int passes = 300;
    std::uint64_t seed = 6;
  } sweep;

  struct Ablate {
    std::vector<std::string> strategies{"preferred", "gmsh_like", "random"};
    std::vector<int> channels{8, 16, 32};
  } ablate;

  struct Bench {
    std::vector<double> forces{0.5, 1.0, 2.0, 4.0};
    int repeats = 3;
    int passes = 30;
  } bench;

  int dim() const { return problem == "beam3d" ? 3 : 2; }
};

/// Parses `key = value` lines (`#` starts a comment). Errors cite the line.
RunConfig parse_config_text(const std::string& text, const std::string& source = "<config>");
RunConfig parse_config_file(const std::filesystem::path& path);
/// Sets one key from a command-line flag (`--key value`).
void apply_override(RunConfig& config, const std::string& key, const std::string& value);
/// Fills problem-dependent defaults and checks invariants.
void resolve(RunConfig& config);
/// Every key with its current value, one `key = value` per line.
std::string echo(const RunConfig& config);
std::vector<std::string> config_keys();

fem::GridMesh build_mesh(const RunConfig& config);
fem::Material build_material(const RunConfig& config);
unet::UNetConfig build_model_config(const RunConfig& config, const std::vector<int>& grid_shape);
std::filesystem::path resolve_path(const RunConfig& config, const std::string& file);

// ---------------------------------------------------------------------------
// Export

/// Legacy ASCII VTK unstructured grid of the mesh with point data on every
/// grid node. Vector fields are grid-layout arrays with dim values per node.
struct VtkField {
  std::string name;
  std::vector<double> values;
  int components = 1;  // 1: SCALARS, otherwise VECTORS (padded to 3)
};

std::string vtk_string(const fem::GridMesh& mesh, const std::vector<VtkField>& fields, const std::string& title);
void write_vtk(const std::filesystem::path& path, const fem::GridMesh& mesh, const std::vector<VtkField>& fields,
               const std::string& title);

// ---------------------------------------------------------------------------
// Manifests

struct Manifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> config;  // resolved key/value pairs
  struct Artifact {
    std::string name;  // relative to output_dir
    std::uint32_t crc = 0;
    std::uint64_t size = 0;
    bool volatile_content = false;  // wall-clock timings, excluded from replay checks
  };
  std::vector<Artifact> artifacts;
};

Manifest::Artifact checksum_artifact(const std::filesystem::path& dir, const std::string& name, bool volatile_content);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Subcommands

/// Runs one subcommand with a resolved configuration and returns the
/// artifacts it wrote (relative to output_dir). Progress goes to `log`.
std::vector<Manifest::Artifact> run_command(const std::string& command, const RunConfig& config, std::ostream& log);

/// Full command-line entry: parses arguments, runs, reports errors as one
/// `error: <module>: <message>` line. Returns the process exit code.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nfem::cli
