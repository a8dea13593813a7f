#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "nfem/cli.hpp"
#include "nfem/csv.hpp"
#include "nfem/error.hpp"

namespace nfem::cli {

namespace {

// Raised by value parsers; callers add the key and location.
struct BadValue {
  std::string expected;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_value(const std::string& text);

template <>
int parse_value<int>(const std::string& text) {
  int v = 0;
  const auto* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || p != end) throw BadValue{"integer"};
  return v;
}

template <>
std::uint64_t parse_value<std::uint64_t>(const std::string& text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || p != end) throw BadValue{"unsigned integer"};
  return v;
}

template <>
double parse_value<double>(const std::string& text) {
  double v = 0;
  const auto* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || p != end) throw BadValue{"number"};
  return v;
}

template <>
bool parse_value<bool>(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw BadValue{"boolean"};
}

template <>
std::string parse_value<std::string>(const std::string& text) {
  return text;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

template <>
std::vector<int> parse_value<std::vector<int>>(const std::string& text) {
  std::vector<int> out;
  try {
    for (const auto& s : split_list(text)) out.push_back(parse_value<int>(s));
  } catch (const BadValue&) {
    throw BadValue{"comma-separated integers"};
  }
  return out;
}

template <>
std::vector<double> parse_value<std::vector<double>>(const std::string& text) {
  std::vector<double> out;
  try {
    for (const auto& s : split_list(text)) out.push_back(parse_value<double>(s));
  } catch (const BadValue&) {
    throw BadValue{"comma-separated numbers"};
  }
  return out;
}

template <>
std::vector<std::string> parse_value<std::vector<std::string>>(const std::string& text) {
  return split_list(text);
}

std::string format_value(int v) { return std::to_string(v); }
std::string format_value(std::uint64_t v) { return std::to_string(v); }
// Shortest text that parses back to the same double.
std::string format_value(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const std::string& v) { return v; }

template <class T>
std::string format_value(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += format_value(v[i]);
  }
  return out;
}

struct KeyDef {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T, class Access>
KeyDef key(std::string name, Access access) {
  return {std::move(name),
          [access](RunConfig& c, const std::string& v) { access(c) = parse_value<T>(v); },
          [access](const RunConfig& c) { return format_value(access(const_cast<RunConfig&>(c))); }};
}

#define NFEM_KEY(T, name, member) key<T>(name, [](RunConfig& c) -> T& { return c.member; })

const std::vector<KeyDef>& registry() {
  using S = std::string;
  using U = std::uint64_t;
  static const std::vector<KeyDef> keys = {
      NFEM_KEY(S, "problem", problem),
      NFEM_KEY(S, "output_dir", output_dir),
      NFEM_KEY(int, "threads", threads),
      NFEM_KEY(int, "geometry.nx", geometry.nx),
      NFEM_KEY(int, "geometry.ny", geometry.ny),
      NFEM_KEY(int, "geometry.nz", geometry.nz),
      NFEM_KEY(double, "geometry.lx", geometry.lx),
      NFEM_KEY(double, "geometry.ly", geometry.ly),
      NFEM_KEY(double, "geometry.lz", geometry.lz),
      NFEM_KEY(int, "geometry.arm_width", geometry.arm_width),
      NFEM_KEY(int, "geometry.arm_height", geometry.arm_height),
      NFEM_KEY(double, "geometry.spacing", geometry.spacing),
      NFEM_KEY(double, "material.E", material.E),
      NFEM_KEY(double, "material.nu", material.nu),
      NFEM_KEY(S, "dataset.file", dataset.file),
      NFEM_KEY(int, "dataset.count", dataset.count),
      NFEM_KEY(double, "dataset.force_min", dataset.force_min),
      NFEM_KEY(double, "dataset.force_max", dataset.force_max),
      NFEM_KEY(U, "dataset.seed", dataset.seed),
      NFEM_KEY(bool, "dataset.noise", dataset.noise),
      NFEM_KEY(double, "dataset.noise_threshold", dataset.noise_threshold),
      NFEM_KEY(double, "dataset.noise_level", dataset.noise_level),
      NFEM_KEY(U, "dataset.noise_seed", dataset.noise_seed),
      NFEM_KEY(double, "dataset.test_fraction", dataset.test_fraction),
      NFEM_KEY(U, "dataset.split_seed", dataset.split_seed),
      NFEM_KEY(S, "dataset.ordering", dataset.ordering),
      NFEM_KEY(U, "dataset.ordering_seed", dataset.ordering_seed),
      NFEM_KEY(double, "dataset.max_redraw_rate", dataset.max_redraw_rate),
      NFEM_KEY(S, "model.mode", model.mode),
      NFEM_KEY(int, "model.levels", model.levels),
      NFEM_KEY(int, "model.channels", model.channels),
      NFEM_KEY(bool, "model.constant_channels", model.constant_channels),
      NFEM_KEY(int, "model.input_pad", model.input_pad),
      NFEM_KEY(double, "model.sigma_p", model.sigma_p),
      NFEM_KEY(U, "model.seed", model.seed),
      NFEM_KEY(S, "model.checkpoint", model.checkpoint),
      NFEM_KEY(int, "train.epochs", train.epochs),
      NFEM_KEY(int, "train.batch_size", train.batch_size),
      NFEM_KEY(double, "train.lr", train.lr),
      NFEM_KEY(int, "train.mc_samples", train.mc_samples),
      NFEM_KEY(double, "train.kl_scale", train.kl_scale),
      NFEM_KEY(U, "train.seed", train.seed),
      NFEM_KEY(int, "train.log_every", train.log_every),
      NFEM_KEY(int, "eval.passes", eval.passes),
      NFEM_KEY(U, "eval.seed", eval.seed),
      NFEM_KEY(int, "eval.vtk_cases", eval.vtk_cases),
      NFEM_KEY(int, "sweep.node", sweep.node),
      NFEM_KEY(int, "sweep.component", sweep.component),
      NFEM_KEY(double, "sweep.min", sweep.min),
      NFEM_KEY(double, "sweep.max", sweep.max),
      NFEM_KEY(int, "sweep.count", sweep.count),
      NFEM_KEY(int, "sweep.passes", sweep.passes),
      NFEM_KEY(U, "sweep.seed", sweep.seed),
      NFEM_KEY(std::vector<S>, "ablate.strategies", ablate.strategies),
      NFEM_KEY(std::vector<int>, "ablate.channels", ablate.channels),
      NFEM_KEY(std::vector<double>, "bench.forces", bench.forces),
      NFEM_KEY(int, "bench.repeats", bench.repeats),
      NFEM_KEY(int, "bench.passes", bench.passes),
  };
  return keys;
}

#undef NFEM_KEY

const KeyDef* find_key(const std::string& name) {
  for (const auto& k : registry())
    if (k.name == name) return &k;
  return nullptr;
}

void set_key(RunConfig& config, const std::string& name, const std::string& value, const std::string& where) {
  const KeyDef* def = find_key(name);
  if (!def) throw InvalidArgument("config", where + ": unknown key '" + name + "'");
  if (value.empty()) throw InvalidArgument("config", where + ": missing value for '" + name + "'");
  try {
    def->set(config, value);
  } catch (const BadValue& bad) {
    throw InvalidArgument("config", where + ": type mismatch for '" + name + "': expected " + bad.expected +
                                        ", got '" + value + "'");
  }
}

void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidArgument("config", message);
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> names;
  for (const auto& k : registry()) names.push_back(k.name);
  return names;
}

RunConfig parse_config_text(const std::string& text, const std::string& source) {
  RunConfig config;
  std::set<std::string> seen;
  std::stringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string where = source + ":" + std::to_string(number);
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidArgument("config", where + ": expected 'key = value'");
    const std::string name = trim(line.substr(0, eq));
    if (name.empty()) throw InvalidArgument("config", where + ": missing key before '='");
    if (!seen.insert(name).second) throw InvalidArgument("config", where + ": duplicate key '" + name + "'");
    set_key(config, name, trim(line.substr(eq + 1)), where);
  }
  return config;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config", "cannot read config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

void apply_override(RunConfig& config, const std::string& key, const std::string& value) {
  set_key(config, key, trim(value), "--" + key);
}

std::string echo(const RunConfig& config) {
  std::string out;
  for (const auto& k : registry()) out += k.name + " = " + k.get(config) + "\n";
  return out;
}

void resolve(RunConfig& c) {
  require(c.problem == "beam2d" || c.problem == "lshape2d" || c.problem == "beam3d",
          "problem must be one of beam2d, lshape2d, beam3d (got '" + c.problem + "')");
  auto& g = c.geometry;
  if (c.problem == "beam2d") {
    if (g.nx == 0) g.nx = 16;
    if (g.ny == 0) g.ny = 4;
    if (g.nz == 0) g.nz = 1;
    if (g.lx == 0) g.lx = 4.0;
    if (g.ly == 0) g.ly = 1.0;
    if (g.lz == 0) g.lz = 1.0;
  } else if (c.problem == "beam3d") {
    if (g.nx == 0) g.nx = 28;
    if (g.ny == 0) g.ny = 12;
    if (g.nz == 0) g.nz = 12;
    if (g.lx == 0) g.lx = 7.0;
    if (g.ly == 0) g.ly = 3.0;
    if (g.lz == 0) g.lz = 3.0;
  } else {
    if (g.nx == 0) g.nx = 16;
    if (g.ny == 0) g.ny = 8;
    if (g.nz == 0) g.nz = 1;
    if (g.lx == 0) g.lx = (g.nx - 1) * g.spacing;
    if (g.ly == 0) g.ly = (g.ny - 1) * g.spacing;
    if (g.lz == 0) g.lz = 1.0;
  }
  require(g.nx >= 2 && g.ny >= 2 && g.nz >= 1, "geometry needs at least 2 nodes along x and y");
  require(g.lx > 0 && g.ly > 0 && g.lz > 0 && g.spacing > 0, "geometry lengths must be positive");

  require(c.material.E > 0, "material.E must be positive");
  require(c.material.nu > -1.0 && c.material.nu < 0.5,
          "material.nu = " + csv::number(c.material.nu) + " violates -1 < nu < 0.5");

  require(c.dataset.count >= 1, "dataset.count must be at least 1");
  require(c.dataset.force_min < c.dataset.force_max, "dataset.force_min must be below dataset.force_max");
  require(c.dataset.test_fraction > 0 && c.dataset.test_fraction < 1, "dataset.test_fraction must lie in (0, 1)");
  require(c.dataset.noise_level >= 0 && c.dataset.noise_threshold >= 0, "noise parameters must be non-negative");
  data::parse_ordering(c.dataset.ordering);
  for (const auto& s : c.ablate.strategies) data::parse_ordering(s);

  unet::parse_mode(c.model.mode);
  c.model.mode = unet::to_string(unet::parse_mode(c.model.mode));
  if (c.model.levels == 0) c.model.levels = c.dim() == 3 ? 4 : 3;
  require(c.model.levels >= 1, "model.levels must be positive");
  require(c.model.channels >= 1, "model.channels must be positive");
  require(c.model.input_pad >= 0, "model.input_pad must be non-negative");
  require(c.model.sigma_p > 0, "model.sigma_p must be positive");
  for (int ch : c.ablate.channels) require(ch >= 1, "ablate.channels entries must be positive");

  if (c.train.epochs == 0) c.train.epochs = c.dim() == 3 ? 75 : 600;
  require(c.train.epochs >= 1, "train.epochs must be positive");
  require(c.train.batch_size >= 2, "train.batch_size must be at least 2");
  require(c.train.lr > 0, "train.lr must be positive");
  require(c.train.mc_samples >= 1, "train.mc_samples must be at least 1");
  require(c.train.kl_scale >= 0, "train.kl_scale must be non-negative");

  require(c.eval.passes >= 2 && c.sweep.passes >= 2 && c.bench.passes >= 2, "Monte Carlo passes must be at least 2");
  require(c.eval.vtk_cases >= 0, "eval.vtk_cases must be non-negative");
  require(c.sweep.component >= 0 && c.sweep.component < c.dim(), "sweep.component must be below the dimension");
  require(c.sweep.count >= 1, "sweep.count must be positive");
  require(c.bench.repeats >= 1, "bench.repeats must be positive");
  require(!c.output_dir.empty(), "output_dir must not be empty");
}

fem::GridMesh build_mesh(const RunConfig& c) {
  const auto& g = c.geometry;
  if (c.problem == "beam2d") return fem::make_beam2d({{g.nx, g.ny, 1}, {g.lx, g.ly, 1.0}});
  if (c.problem == "beam3d") return fem::make_beam3d({{g.nx, g.ny, g.nz}, {g.lx, g.ly, g.lz}});
  return fem::make_lshape2d({g.nx, g.ny, g.arm_width, g.arm_height, g.spacing});
}

fem::Material build_material(const RunConfig& c) { return fem::Material::from_E_nu(c.material.E, c.material.nu); }

unet::UNetConfig build_model_config(const RunConfig& c, const std::vector<int>& grid_shape) {
  unet::UNetConfig m;
  m.dim = c.dim();
  m.grid_shape = grid_shape;
  m.levels = c.model.levels;
  m.base_channels = c.model.channels;
  m.mode = unet::parse_mode(c.model.mode);
  m.input_pad = c.model.input_pad;
  m.constant_channels = c.model.constant_channels;
  m.sigma_p = c.model.sigma_p;
  m.validate();
  return m;
}

std::filesystem::path resolve_path(const RunConfig& c, const std::string& file) {
  std::filesystem::path p(file);
  return p.is_absolute() ? p : std::filesystem::path(c.output_dir) / p;
}

}  // namespace nfem::cli
