#include <cstdio>
#include <fstream>
#include <sstream>

#include "nfem/binary_io.hpp"
#include "nfem/cli.hpp"
#include "nfem/error.hpp"

namespace nfem::cli {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void write_text(const std::filesystem::path& path, const std::string& text, const char* module) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(module, "cannot write " + path.string());
  out << text;
  if (!out) throw IoError(module, "write failed: " + path.string());
}

}  // namespace

std::string vtk_string(const fem::GridMesh& mesh, const std::vector<VtkField>& fields, const std::string& title) {
  const int n = mesh.grid_node_count();
  const int dim = mesh.dim();
  std::ostringstream out;
  out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << n << " double\n";
  for (int node = 0; node < n; ++node) {
    const auto x = mesh.coordinates(node);
    out << fmt(x[0]) << ' ' << fmt(x[1]) << ' ' << fmt(dim == 3 ? x[2] : 0.0) << '\n';
  }

  // Mesh corners are already in VTK_QUAD / VTK_HEXAHEDRON order.
  const int corners = mesh.corners_per_element();
  const auto& elements = mesh.elements();
  out << "CELLS " << elements.size() << ' ' << elements.size() * (corners + 1) << '\n';
  for (const auto& e : elements) {
    out << corners;
    for (int k = 0; k < corners; ++k) out << ' ' << e[k];
    out << '\n';
  }
  out << "CELL_TYPES " << elements.size() << '\n';
  for (std::size_t e = 0; e < elements.size(); ++e) out << (dim == 2 ? 9 : 12) << '\n';

  if (!fields.empty()) out << "POINT_DATA " << n << '\n';
  for (const auto& f : fields) {
    if (f.values.size() != static_cast<std::size_t>(n) * f.components)
      throw ShapeError("cli", "VTK field '" + f.name + "' has " + std::to_string(f.values.size()) + " values, expected " +
                                  std::to_string(static_cast<std::size_t>(n) * f.components));
    if (f.components == 1) {
      out << "SCALARS " << f.name << " double 1\nLOOKUP_TABLE default\n";
      for (double v : f.values) out << fmt(v) << '\n';
    } else {
      out << "VECTORS " << f.name << " double\n";
      for (int node = 0; node < n; ++node) {
        for (int k = 0; k < 3; ++k) {
          if (k) out << ' ';
          out << fmt(k < f.components ? f.values[static_cast<std::size_t>(node) * f.components + k] : 0.0);
        }
        out << '\n';
      }
    }
  }
  return out.str();
}

void write_vtk(const std::filesystem::path& path, const fem::GridMesh& mesh, const std::vector<VtkField>& fields,
               const std::string& title) {
  write_text(path, vtk_string(mesh, fields, title), "cli");
}

Manifest::Artifact checksum_artifact(const std::filesystem::path& dir, const std::string& name, bool volatile_content) {
  const auto path = dir / name;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cli", "artifact missing: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return {name, io::crc32(bytes), bytes.size(), volatile_content};
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ostringstream out;
  out << "# nfem run manifest\n";
  out << "command = " << m.command << '\n';
  for (const auto& [k, v] : m.config) out << "config." << k << " = " << v << '\n';
  for (const auto& a : m.artifacts) {
    char crc[16];
    std::snprintf(crc, sizeof crc, "%08x", a.crc);
    out << "artifact." << a.name << " = " << crc << ' ' << a.size << (a.volatile_content ? " volatile" : "") << '\n';
  }
  write_text(path, out.str(), "cli");
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cli", "manifest not found: " + path.string());
  Manifest m;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string where = path.string() + ":" + std::to_string(number);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw FormatError("cli", where + ": expected 'key = value'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (key == "command") {
      m.command = value;
    } else if (key.rfind("config.", 0) == 0) {
      m.config.emplace_back(key.substr(7), value);
    } else if (key.rfind("artifact.", 0) == 0) {
      std::istringstream fields(value);
      std::string crc, flag;
      Manifest::Artifact a;
      a.name = key.substr(9);
      if (!(fields >> crc >> a.size)) throw FormatError("cli", where + ": malformed artifact entry");
      a.crc = static_cast<std::uint32_t>(std::stoul(crc, nullptr, 16));
      if (fields >> flag) a.volatile_content = trim(flag) == "volatile";
      m.artifacts.push_back(a);
    } else {
      throw FormatError("cli", where + ": unknown manifest entry '" + key + "'");
    }
  }
  if (m.command.empty()) throw FormatError("cli", path.string() + ": manifest has no command");
  return m;
}

}  // namespace nfem::cli
