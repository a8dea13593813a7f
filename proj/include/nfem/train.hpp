#pragma once

// Loss functions and the mini-batch Adam training loop.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "nfem/dataset.hpp"
#include "nfem/unet.hpp"

namespace nfem::train {

/// Samples stacked along the batch axis, channels last.
struct Batch {
  std::size_t size = 0;
  std::vector<double> f;
  std::vector<double> u;
};

Batch make_batch(const data::SampleSet& set, std::span<const std::size_t> indices);

struct LossOptions {
  bool training = true;
  /// Bind parameters as differentiable leaves so backward reaches them.
  bool track_parameters = true;
  /// Per-node weight (0 excludes padded nodes); empty means all ones.
  std::span<const double> node_mask;
  /// vb only: weight-noise source, draws per step, KL weight.
  std::mt19937_64* rng = nullptr;
  const std::vector<std::vector<double>>* eps = nullptr;
  int mc_samples = 1;
  double kl_scale = 1.0;
};

struct LossTerms {
  ad::Tensor total;
  double nll = 0.0;  // data term (squared error for the deterministic loss)
  double kl = 0.0;   // unscaled KL sample, vb only
};

/// Mean over the batch of the squared l2 prediction error.
LossTerms loss_det(ad::Tape& tape, unet::Model& model, const Batch& batch, const LossOptions& opts = {});
/// Gaussian negative log-likelihood summed over batch and dofs.
LossTerms loss_mle(ad::Tape& tape, unet::Model& model, const Batch& batch, const LossOptions& opts = {});
/// Average over mc_samples weight draws of NLL + kl_scale * KL sample.
LossTerms loss_vb(ad::Tape& tape, unet::Model& model, const Batch& batch, const LossOptions& opts);
/// Dispatches on the model mode.
LossTerms loss_for(ad::Tape& tape, unet::Model& model, const Batch& batch, const LossOptions& opts);

struct TrainConfig {
  int epochs = 600;
  int batch_size = 4;
  double lr = 1e-4;
  int mc_samples = 1;
  /// KL weight per batch; <= 0 selects batch_size / N.
  double kl_scale = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> node_mask;
  /// Called after every epoch with (epoch, mean loss).
  std::function<void(int, double)> on_epoch;

  void validate() const;
};

struct History {
  std::vector<double> loss;
  std::vector<double> kl;
  std::vector<double> nll;
  long steps = 0;

  /// Final epoch loss at least 10x below the first.
  bool fit_ok() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Shuffled mini-batches each epoch; a short final batch wraps around to the
/// start of the permutation. Non-finite losses abort with the batch index.
History train(unet::Model& model, const data::SampleSet& train_set, const TrainConfig& config);

}  // namespace nfem::train
