#pragma once

// Dense channels-last tensors with a recorded tape for reverse-mode
// differentiation. Grid tensors are laid out (batch, x, y[, z], channels).

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nfem/error.hpp"

namespace nfem::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Trainable (or frozen) array that outlives tapes. Adam moments live here.
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> m;
  std::vector<double> v;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string name, Shape shape, std::vector<double> value, bool trainable = true);

  std::size_t size() const { return value.size(); }
  void zero_grad();
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on demand during backward
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  Parameter* param = nullptr;
  const void* tape = nullptr;
  bool requires_grad = false;
  std::string op;

  std::vector<double>& ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::span<const double> values() const { return node_->value; }
  /// Gradient accumulated by the last backward pass; empty if never reached.
  std::span<const double> grad() const { return node_->grad; }
  double item() const;
  bool requires_grad() const { return node_->requires_grad; }
  bool valid() const { return static_cast<bool>(node_); }

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Shape shape, std::vector<double> values);
  /// Leaf that receives a gradient (kept on the node, see Tensor::grad).
  Tensor variable(Shape shape, std::vector<double> values);
  /// Leaf bound to a Parameter; backward accumulates into Parameter::grad.
  Tensor parameter(Parameter& p);

  /// Appends an op result. `backward` reads node.grad and accumulates into
  /// the parents' grads; it is dropped when no parent needs a gradient.
  Tensor record(Shape shape, std::vector<double> values, const std::vector<Tensor>& parents, std::string op,
                std::function<void(Node&)> backward);

  /// Reverse pass from a scalar loss. Allowed once per tape.
  void backward(const Tensor& loss);

  /// Gradient of `t` after backward; zeros when `t` is not upstream of the loss.
  std::vector<double> grad_of(const Tensor& t) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  Tensor add_leaf(Shape shape, std::vector<double> values, bool requires_grad, Parameter* param, const char* op);

  std::vector<std::shared_ptr<Node>> nodes_;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Grid helpers

struct GridDims {
  std::size_t batch = 1;
  std::array<std::size_t, 3> extent{1, 1, 1};
  std::size_t channels = 1;
  int spatial_rank = 2;

  std::size_t positions() const { return extent[0] * extent[1] * extent[2]; }
  Shape shape() const;
};

GridDims grid_dims(const Shape& shape);

// ---------------------------------------------------------------------------
// Layer operations

/// Zero padding of `pad` nodes on each side of every spatial axis.
Tensor pad_spatial(Tape& tape, const Tensor& x, std::size_t pad);
Tensor crop_spatial(Tape& tape, const Tensor& x, std::size_t pad);

/// Same-size 3x3 (3x3x3) convolution with zero padding 1.
/// Kernel shape (3, 3[, 3], c_in, c_out), bias shape (c_out).
Tensor conv3x3(Tape& tape, const Tensor& x, const Tensor& kernel, const Tensor& bias);
/// Per-node linear map across channels; kernel (c_in, c_out), bias (c_out).
Tensor conv1x1(Tape& tape, const Tensor& x, const Tensor& kernel, const Tensor& bias);

/// 2x2 (2x2x2) max pooling; gradient goes to the first maximum in raster order.
Tensor maxpool2(Tape& tape, const Tensor& x);
/// Nearest-neighbour 2x repeat of `coarse` followed by channel concatenation
/// with `skip`.
Tensor upsample_concat(Tape& tape, const Tensor& coarse, const Tensor& skip);

Tensor relu(Tape& tape, const Tensor& x);
Tensor softplus(Tape& tape, const Tensor& x);
double softplus(double x);
double inverse_softplus(double y);
double sigmoid(double x);

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.99;
  double eps = 1e-3;

  explicit BatchNormState(std::size_t channels = 0, double momentum = 0.99, double eps = 1e-3);
};

/// Per-channel normalisation over batch and spatial axes (training) or with
/// running statistics (inference). Training mode updates `state`.
Tensor batchnorm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                 bool training);

Tensor slice_channels(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double s);
Tensor sum(Tape& tape, const Tensor& a);
Tensor dot(Tape& tape, const Tensor& a, const Tensor& b);
Tensor square(Tape& tape, const Tensor& a);

/// Mean over the batch of sum_l mask_l (pred_l - target_l)^2. `node_mask`
/// (one weight per grid node, may be empty) is shared by all channels.
Tensor mse_loss(Tape& tape, const Tensor& pred, const Tensor& target, std::span<const double> node_mask = {});

/// sum_k sum_l mask_l [log(sqrt(2 pi) sigma) + (target - mu)^2 / (2 sigma^2)],
/// sigma = softplus(rho).
Tensor gaussian_nll(Tape& tape, const Tensor& mu, const Tensor& rho, const Tensor& target,
                    std::span<const double> node_mask = {});

/// w = mu + softplus(rho) * eps (reparameterised Gaussian draw).
Tensor reparameterize(Tape& tape, const Tensor& mu, const Tensor& rho, std::span<const double> eps);

/// sum_j [log q(w_j | mu_j, softplus(rho_j)) - log p(w_j | mu_p_j, sigma_p)].
Tensor gaussian_kl_sample(Tape& tape, const Tensor& w, const Tensor& mu, const Tensor& rho, const Tensor& mu_p,
                          double sigma_p);

// ---------------------------------------------------------------------------
// Optimiser

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update at step t >= 1 from Parameter::grad. Throws
/// NonFiniteError (and leaves every parameter untouched) on a non-finite
/// gradient.
void adam_step(std::span<Parameter* const> params, const AdamConfig& cfg, long t);

}  // namespace nfem::ad
