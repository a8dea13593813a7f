#include "nfem/binary_io.hpp"
#include "nfem/unet.hpp"

namespace nfem::unet {

namespace {

constexpr const char* kMagic = "NFEMW1\n";

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const UNetConfig& c = model.config();
  io::Writer w(kMagic);
  w.put_string(config_echo(c));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.dim));
  for (int n : c.grid_shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(n));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.levels));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.base_channels));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.convs_per_level));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.mode));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.input_pad));
  w.put<std::uint8_t>(c.constant_channels ? 1 : 0);
  w.put<double>(c.sigma_p);
  w.put<double>(c.bn_momentum);
  w.put<double>(c.bn_eps);

  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.params().size()));
  for (const auto& p : model.params()) {
    w.put_string(p.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.shape.size()));
    for (std::size_t n : p.shape) w.put<std::uint64_t>(n);
    w.put_doubles(p.value);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.bn_states().size()));
  for (const auto& s : model.bn_states()) {
    w.put<std::uint64_t>(s.running_mean.size());
    w.put_doubles(s.running_mean);
    w.put_doubles(s.running_var);
  }
  w.write_file(path, "unet");
}

Model load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("unet", "checkpoint not found: " + path.string());
  io::Reader r(path, kMagic, "unet");
  r.get_string();  // echo, informational
  UNetConfig c;
  c.dim = static_cast<int>(r.get<std::uint32_t>());
  if (c.dim != 2 && c.dim != 3) throw FormatError("unet", "checkpoint has invalid dim");
  c.grid_shape.resize(c.dim);
  for (int& n : c.grid_shape) n = static_cast<int>(r.get<std::uint32_t>());
  c.levels = static_cast<int>(r.get<std::uint32_t>());
  c.base_channels = static_cast<int>(r.get<std::uint32_t>());
  c.convs_per_level = static_cast<int>(r.get<std::uint32_t>());
  const auto mode = r.get<std::uint8_t>();
  if (mode > 2) throw FormatError("unet", "checkpoint has invalid mode");
  c.mode = static_cast<Mode>(mode);
  c.input_pad = static_cast<int>(r.get<std::uint32_t>());
  c.constant_channels = r.get<std::uint8_t>() != 0;
  c.sigma_p = r.get<double>();
  c.bn_momentum = r.get<double>();
  c.bn_eps = r.get<double>();

  Model model(c, 0);
  const auto count = r.get<std::uint32_t>();
  if (count != model.params().size()) throw FormatError("unet", "checkpoint parameter count does not match config");
  for (auto& p : model.params()) {
    const std::string name = r.get_string();
    if (name != p.name) throw FormatError("unet", "checkpoint parameter " + name + " where " + p.name + " expected");
    const auto rank = r.get<std::uint32_t>();
    ad::Shape shape(rank);
    for (auto& n : shape) n = static_cast<std::size_t>(r.get<std::uint64_t>());
    if (shape != p.shape) throw FormatError("unet", "checkpoint shape mismatch for " + name);
    r.get_doubles(p.value);
  }
  const auto states = r.get<std::uint32_t>();
  if (states != model.bn_states().size()) throw FormatError("unet", "checkpoint batchnorm count does not match");
  for (auto& s : model.bn_states()) {
    if (r.get<std::uint64_t>() != s.running_mean.size()) throw FormatError("unet", "batchnorm channel mismatch");
    r.get_doubles(s.running_mean);
    r.get_doubles(s.running_var);
  }
  r.expect_end();
  return model;
}

}  // namespace nfem::unet
