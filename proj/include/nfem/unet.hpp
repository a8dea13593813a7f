#pragma once

// Encoder-decoder U-Net on node grids in deterministic, MLE and
// variational-Bayes variants.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "nfem/autodiff.hpp"

namespace nfem::unet {

enum class Mode { deterministic, mle, vb };

Mode parse_mode(const std::string& name);
std::string to_string(Mode mode);

struct UNetConfig {
  int dim = 2;
  std::vector<int> grid_shape{16, 4};
  int levels = 3;
  int base_channels = 32;
  int convs_per_level = 2;
  Mode mode = Mode::deterministic;
  int input_pad = 2;
  /// Same channel count c on every level instead of c * 2^level.
  bool constant_channels = false;
  double sigma_p = 0.1;
  double bn_momentum = 0.99;
  double bn_eps = 1e-3;

  /// Throws InvalidArgument; a divisibility failure names the padding needed.
  void validate() const;
  int channels_at(int level) const;
  int out_channels() const { return mode == Mode::deterministic ? dim : 2 * dim; }
  std::vector<int> padded_shape() const;
  /// Spatial extents seen by each encoder level.
  std::vector<std::vector<int>> level_extents() const;
  std::size_t grid_nodes() const;
};

enum class LayerKind { conv3x3, conv1x1 };

struct ConvLayer {
  std::string name;
  LayerKind kind = LayerKind::conv3x3;
  int c_in = 0;
  int c_out = 0;
  bool variational = false;
  // Indices into Model::params. Deterministic layers use `kernel`;
  // variational layers use `mu`, `rho`, `mu_p`. -1 when absent.
  int kernel = -1;
  int mu = -1;
  int rho = -1;
  int mu_p = -1;
  int bias = -1;
  int gamma = -1;
  int beta = -1;
  int bn = -1;  // index into Model::bn_states
};

/// Weights drawn for one variational layer during a forward pass.
struct VariationalDraw {
  ad::Tensor w, mu, rho, mu_p;
};

struct ForwardOptions {
  /// Batch statistics and running-stat updates in batchnorm.
  bool training = false;
  /// Bind parameters as differentiable leaves (otherwise as constants).
  bool track_parameters = false;
  /// Source of weight noise for variational layers. Null uses the
  /// posterior means.
  std::mt19937_64* rng = nullptr;
  /// Fixed standard-normal draws per variational layer (overrides rng).
  const std::vector<std::vector<double>>* eps = nullptr;
};

struct ForwardPass {
  ad::Tensor output;  // (batch, grid..., out_channels), padding cropped
  std::vector<VariationalDraw> draws;
};

class Model {
 public:
  Model() = default;
  /// He-normal weights from `seed`; vb layers get rho = softplus^-1(0.01 * std)
  /// and a zero prior mean.
  Model(UNetConfig config, std::uint64_t seed);

  const UNetConfig& config() const { return config_; }
  const std::vector<ConvLayer>& layers() const { return layers_; }

  std::vector<ad::Parameter>& params() { return params_; }
  const std::vector<ad::Parameter>& params() const { return params_; }
  std::vector<ad::BatchNormState>& bn_states() { return bn_states_; }
  const std::vector<ad::BatchNormState>& bn_states() const { return bn_states_; }

  std::vector<ad::Parameter*> trainable();
  std::size_t parameter_count() const;
  std::size_t variational_layer_count() const;
  std::size_t conv3x3_count() const;
  /// Sizes of the weight tensors of each variational layer, in layer order.
  std::vector<std::size_t> variational_sizes() const;

  ad::Parameter& param(const std::string& name);
  const ad::Parameter& param(const std::string& name) const;

  /// `f` has shape (batch, grid..., dim).
  ForwardPass forward(ad::Tape& tape, const ad::Tensor& f, const ForwardOptions& options);

  /// Inference-mode forward on a single force field in grid layout; returns
  /// the raw output (grid nodes x out_channels). Does not modify the model.
  std::vector<double> infer(const std::vector<double>& f, std::mt19937_64* rng = nullptr) const;

  void zero_grad();

 private:
  int add_param(const std::string& name, ad::Shape shape, std::vector<double> value);
  void add_conv(const std::string& name, LayerKind kind, int c_in, int c_out, bool variational, bool batchnorm,
                std::mt19937_64& rng);

  UNetConfig config_;
  std::vector<ConvLayer> layers_;
  std::vector<ad::Parameter> params_;
  std::vector<ad::BatchNormState> bn_states_;
};

/// Closed-form KL(q || p) summed over every variational weight:
/// q = N(mu, softplus(rho)^2), p = N(mu_p, sigma_p^2).
double analytic_kl(const Model& model);
double analytic_kl(std::span<const double> mu, std::span<const double> rho, std::span<const double> mu_p,
                   double sigma_p);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);
/// Human-readable key = value listing of the configuration.
std::string config_echo(const UNetConfig& config);

}  // namespace nfem::unet
