#include <cmath>
#include <numeric>
#include <sstream>

#include "nfem/unet.hpp"

namespace nfem::unet {

Mode parse_mode(const std::string& name) {
  if (name == "deterministic" || name == "det") return Mode::deterministic;
  if (name == "mle") return Mode::mle;
  if (name == "vb") return Mode::vb;
  throw InvalidArgument("unet", "unknown mode '" + name + "' (expected deterministic, mle or vb)");
}

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::deterministic:
      return "deterministic";
    case Mode::mle:
      return "mle";
    case Mode::vb:
      return "vb";
  }
  return "?";
}

void UNetConfig::validate() const {
  if (dim != 2 && dim != 3) throw InvalidArgument("unet", "dim must be 2 or 3");
  if (static_cast<int>(grid_shape.size()) != dim)
    throw InvalidArgument("unet", "grid_shape needs " + std::to_string(dim) + " extents");
  if (levels < 1) throw InvalidArgument("unet", "levels must be >= 1");
  if (base_channels < 1) throw InvalidArgument("unet", "base_channels must be >= 1");
  if (convs_per_level < 1) throw InvalidArgument("unet", "convs_per_level must be >= 1");
  if (input_pad < 0) throw InvalidArgument("unet", "input_pad must be >= 0");
  if (!(sigma_p > 0)) throw InvalidArgument("unet", "sigma_p must be positive");
  if (!(bn_momentum >= 0 && bn_momentum < 1)) throw InvalidArgument("unet", "bn_momentum must lie in [0, 1)");
  if (!(bn_eps > 0)) throw InvalidArgument("unet", "bn_eps must be positive");
  const int div = 1 << (levels - 1);
  for (int a = 0; a < dim; ++a) {
    const int n = grid_shape[a];
    if (n < 1) throw InvalidArgument("unet", "grid extents must be positive");
    const int padded = n + 2 * input_pad;
    if (padded % div == 0) continue;
    std::string hint = "no symmetric padding works (odd extent)";
    for (int p = 0; p <= div; ++p)
      if ((n + 2 * p) % div == 0) {
        hint = "input_pad = " + std::to_string(p) + " would work";
        break;
      }
    throw InvalidArgument("unet", "padded extent " + std::to_string(padded) + " on axis " + std::to_string(a) +
                                      " is not divisible by 2^(levels-1) = " + std::to_string(div) + "; " + hint);
  }
}

int UNetConfig::channels_at(int level) const { return constant_channels ? base_channels : base_channels << level; }

std::vector<int> UNetConfig::padded_shape() const {
  std::vector<int> s = grid_shape;
  for (int& n : s) n += 2 * input_pad;
  return s;
}

std::vector<std::vector<int>> UNetConfig::level_extents() const {
  std::vector<std::vector<int>> out;
  std::vector<int> s = padded_shape();
  for (int l = 0; l < levels; ++l) {
    out.push_back(s);
    for (int& n : s) n /= 2;
  }
  return out;
}

std::size_t UNetConfig::grid_nodes() const {
  return std::accumulate(grid_shape.begin(), grid_shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

int Model::add_param(const std::string& name, ad::Shape shape, std::vector<double> value) {
  params_.emplace_back(name, std::move(shape), std::move(value));
  return static_cast<int>(params_.size()) - 1;
}

void Model::add_conv(const std::string& name, LayerKind kind, int c_in, int c_out, bool variational, bool batchnorm,
                     std::mt19937_64& rng) {
  ConvLayer layer;
  layer.name = name;
  layer.kind = kind;
  layer.c_in = c_in;
  layer.c_out = c_out;
  layer.variational = variational;

  ad::Shape kshape;
  std::size_t taps = 1;
  if (kind == LayerKind::conv3x3) {
    for (int a = 0; a < config_.dim; ++a) kshape.push_back(3);
    taps = config_.dim == 3 ? 27 : 9;
  }
  kshape.push_back(static_cast<std::size_t>(c_in));
  kshape.push_back(static_cast<std::size_t>(c_out));
  const std::size_t n = ad::numel(kshape);
  const double stddev = std::sqrt(2.0 / static_cast<double>(taps * c_in));
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<double> w(n);
  for (double& v : w) v = normal(rng);

  if (variational) {
    layer.mu = add_param(name + ".mu", kshape, std::move(w));
    layer.rho = add_param(name + ".rho", kshape, std::vector<double>(n, ad::inverse_softplus(0.01 * stddev)));
    layer.mu_p = add_param(name + ".mu_p", kshape, std::vector<double>(n, 0.0));
  } else {
    layer.kernel = add_param(name + ".kernel", kshape, std::move(w));
  }
  layer.bias = add_param(name + ".bias", {static_cast<std::size_t>(c_out)}, std::vector<double>(c_out, 0.0));
  if (batchnorm) {
    layer.gamma = add_param(name + ".gamma", {static_cast<std::size_t>(c_out)}, std::vector<double>(c_out, 1.0));
    layer.beta = add_param(name + ".beta", {static_cast<std::size_t>(c_out)}, std::vector<double>(c_out, 0.0));
    layer.bn = static_cast<int>(bn_states_.size());
    bn_states_.emplace_back(static_cast<std::size_t>(c_out), config_.bn_momentum, config_.bn_eps);
  }
  layers_.push_back(std::move(layer));
}

Model::Model(UNetConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const bool vb = config_.mode == Mode::vb;
  const int L = config_.levels;
  int c_in = config_.dim;
  for (int l = 0; l < L; ++l) {
    const int c = config_.channels_at(l);
    for (int k = 0; k < config_.convs_per_level; ++k) {
      add_conv("enc" + std::to_string(l) + ".conv" + std::to_string(k), LayerKind::conv3x3, c_in, c, vb && k % 2 == 1,
               true, rng);
      c_in = c;
    }
  }
  for (int l = L - 2; l >= 0; --l) {
    const int c = config_.channels_at(l);
    c_in += c;  // concatenated skip
    for (int k = 0; k < config_.convs_per_level; ++k) {
      add_conv("dec" + std::to_string(l) + ".conv" + std::to_string(k), LayerKind::conv3x3, c_in, c, vb && k % 2 == 1,
               true, rng);
      c_in = c;
    }
  }
  add_conv("head", LayerKind::conv1x1, c_in, config_.out_channels(), false, false, rng);
}

std::vector<ad::Parameter*> Model::trainable() {
  std::vector<ad::Parameter*> out;
  for (auto& p : params_)
    if (p.trainable) out.push_back(&p);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

std::size_t Model::variational_layer_count() const {
  return static_cast<std::size_t>(
      std::count_if(layers_.begin(), layers_.end(), [](const ConvLayer& l) { return l.variational; }));
}

std::size_t Model::conv3x3_count() const {
  return static_cast<std::size_t>(
      std::count_if(layers_.begin(), layers_.end(), [](const ConvLayer& l) { return l.kind == LayerKind::conv3x3; }));
}

std::vector<std::size_t> Model::variational_sizes() const {
  std::vector<std::size_t> out;
  for (const auto& l : layers_)
    if (l.variational) out.push_back(params_[l.mu].size());
  return out;
}

ad::Parameter& Model::param(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw InvalidArgument("unet", "no parameter named " + name);
}

const ad::Parameter& Model::param(const std::string& name) const { return const_cast<Model*>(this)->param(name); }

void Model::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

ForwardPass Model::forward(ad::Tape& tape, const ad::Tensor& f, const ForwardOptions& options) {
  const ad::GridDims d = ad::grid_dims(f.shape());
  if (d.spatial_rank != config_.dim || d.channels != static_cast<std::size_t>(config_.dim))
    throw ShapeError("unet", "input shape " + ad::shape_string(f.shape()) + " does not match a " +
                                 std::to_string(config_.dim) + "D force grid");
  for (int a = 0; a < config_.dim; ++a)
    if (d.extent[a] != static_cast<std::size_t>(config_.grid_shape[a]))
      throw ShapeError("unet", "input shape " + ad::shape_string(f.shape()) + " does not match grid shape");
  if (options.eps && options.eps->size() != variational_layer_count())
    throw InvalidArgument("unet", "eps needs one draw per variational layer");

  ForwardPass pass;
  const auto bind = [&](int index) {
    ad::Parameter& p = params_[index];
    return options.track_parameters ? tape.parameter(p) : tape.constant(p.shape, p.value);
  };

  const auto apply = [&](const ConvLayer& layer, const ad::Tensor& x) {
    ad::Tensor kernel;
    if (layer.variational) {
      VariationalDraw draw{{}, bind(layer.mu), bind(layer.rho), bind(layer.mu_p)};
      const std::size_t n = draw.mu.size();
      if (options.eps) {
        const auto& e = (*options.eps)[pass.draws.size()];
        if (e.size() != n) throw ShapeError("unet", "eps draw for " + layer.name + " has the wrong size");
        draw.w = ad::reparameterize(tape, draw.mu, draw.rho, e);
      } else if (options.rng) {
        std::normal_distribution<double> normal;
        std::vector<double> e(n);
        for (double& v : e) v = normal(*options.rng);
        draw.w = ad::reparameterize(tape, draw.mu, draw.rho, e);
      } else {
        draw.w = draw.mu;
      }
      kernel = draw.w;
      pass.draws.push_back(draw);
    } else {
      kernel = bind(layer.kernel);
    }
    const ad::Tensor bias = bind(layer.bias);
    if (layer.kind == LayerKind::conv1x1) return ad::conv1x1(tape, x, kernel, bias);
    ad::Tensor y = ad::conv3x3(tape, x, kernel, bias);
    y = ad::batchnorm(tape, y, bind(layer.gamma), bind(layer.beta), bn_states_[layer.bn], options.training);
    return ad::relu(tape, y);
  };

  const int L = config_.levels;
  const int per = config_.convs_per_level;
  std::size_t li = 0;
  ad::Tensor x = ad::pad_spatial(tape, f, static_cast<std::size_t>(config_.input_pad));
  std::vector<ad::Tensor> skips;
  for (int l = 0; l < L; ++l) {
    for (int k = 0; k < per; ++k) x = apply(layers_[li++], x);
    if (l < L - 1) {
      skips.push_back(x);
      x = ad::maxpool2(tape, x);
    }
  }
  for (int l = L - 2; l >= 0; --l) {
    x = ad::upsample_concat(tape, x, skips[l]);
    for (int k = 0; k < per; ++k) x = apply(layers_[li++], x);
  }
  x = apply(layers_[li++], x);
  pass.output = ad::crop_spatial(tape, x, static_cast<std::size_t>(config_.input_pad));
  return pass;
}

std::vector<double> Model::infer(const std::vector<double>& f, std::mt19937_64* rng) const {
  ad::Shape shape{1};
  for (int n : config_.grid_shape) shape.push_back(static_cast<std::size_t>(n));
  shape.push_back(static_cast<std::size_t>(config_.dim));
  if (f.size() != ad::numel(shape))
    throw ShapeError("unet", "force field has " + std::to_string(f.size()) + " values, expected " +
                                 std::to_string(ad::numel(shape)));
  ad::Tape tape;
  ForwardOptions opts;
  opts.rng = rng;
  // Inference mode neither binds parameters as leaves nor touches batchnorm
  // state, so the model is not modified.
  auto pass = const_cast<Model*>(this)->forward(tape, tape.constant(shape, f), opts);
  return {pass.output.values().begin(), pass.output.values().end()};
}

double analytic_kl(std::span<const double> mu, std::span<const double> rho, std::span<const double> mu_p,
                   double sigma_p) {
  if (mu.size() != rho.size() || mu.size() != mu_p.size())
    throw ShapeError("unet", "analytic_kl: mu, rho and mu_p sizes differ");
  if (!(sigma_p > 0)) throw InvalidArgument("unet", "analytic_kl: sigma_p must be positive");
  const double sp2 = sigma_p * sigma_p;
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double s = ad::softplus(rho[i]);
    const double dm = mu[i] - mu_p[i];
    kl += std::log(sigma_p / s) + (s * s + dm * dm) / (2 * sp2) - 0.5;
  }
  return kl;
}

double analytic_kl(const Model& model) {
  double kl = 0.0;
  for (const auto& l : model.layers())
    if (l.variational)
      kl += analytic_kl(model.params()[l.mu].value, model.params()[l.rho].value, model.params()[l.mu_p].value,
                        model.config().sigma_p);
  return kl;
}

std::string config_echo(const UNetConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "dim = " << c.dim << "\ngrid_shape = ";
  for (std::size_t i = 0; i < c.grid_shape.size(); ++i) os << (i ? "," : "") << c.grid_shape[i];
  os << "\nlevels = " << c.levels << "\nbase_channels = " << c.base_channels
     << "\nconvs_per_level = " << c.convs_per_level << "\nmode = " << to_string(c.mode)
     << "\ninput_pad = " << c.input_pad << "\nconstant_channels = " << (c.constant_channels ? "true" : "false")
     << "\nsigma_p = " << c.sigma_p << "\nbn_momentum = " << c.bn_momentum << "\nbn_eps = " << c.bn_eps << "\n";
  return os.str();
}

}  // namespace nfem::unet
