#pragma once

// Validation metrics, error fields, sensitivity regression and ablations.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nfem/csv.hpp"
#include "nfem/dataset.hpp"
#include "nfem/train.hpp"
#include "nfem/unet.hpp"

namespace nfem::metrics {

/// Mean absolute dof error over active nodes. `node_mask` (one entry per
/// node, nonzero = active) may be empty when every node is active.
double sample_error(std::span<const double> pred, std::span<const double> ref, int dim,
                    std::span<const double> node_mask = {});

struct ErrorReport {
  std::vector<double> errors;  // e_m per test sample
  double e_bar = 0.0;
  double sigma_e = 0.0;  // corrected sample standard deviation
  std::size_t n = 0;     // active dofs per sample
  std::size_t M = 0;
};

/// Mean and corrected standard deviation; needs at least two errors.
ErrorReport aggregate(std::span<const double> errors, std::size_t dof_count = 0);

struct NodalError {
  std::vector<double> per_node;  // l2 norm of the error at each node
  double relative_l2 = 0.0;      // ||pred - ref|| / ||ref||
};

NodalError nodal_error_field(std::span<const double> pred, std::span<const double> ref, int dim);
double relative_l2(std::span<const double> pred, std::span<const double> ref);

/// Through-origin least squares slope sum(xy) / sum(x^2).
double sensitivity_slope(std::span<const double> errors, std::span<const double> magnitudes);

/// Fraction of active dofs with |mean - ref| <= 2 std.
double coverage_fraction(std::span<const double> mean, std::span<const double> std, std::span<const double> ref,
                         int dim, std::span<const double> node_mask = {});

/// Node carrying the largest force and the l2 norm of the reference
/// displacement there.
int excited_node(const data::Sample& s, int dim);
double excited_displacement(const data::Sample& s, int dim);

struct Evaluation {
  ErrorReport report;
  std::vector<double> relative_l2;  // per sample
  std::vector<double> magnitudes;   // excited-node displacement per sample
  double mean_relative_l2 = 0.0;
  double pooled_relative_l2 = 0.0;  // over all test dofs at once
  double slope = 0.0;
  double coverage = 0.0;            // NaN for deterministic models
  std::vector<std::vector<double>> predictions;
  std::vector<std::vector<double>> stds;
};

struct EvalOptions {
  std::vector<double> node_mask;
  int passes = 300;
  std::uint64_t seed = 0;
  bool keep_fields = false;
};

Evaluation evaluate(const unet::Model& model, const data::SampleSet& test, const EvalOptions& opts = {});

csv::Table report_table(const Evaluation& eval);

// ---------------------------------------------------------------------------
// Ablations

struct AblationRow {
  std::string label;
  int channels = 0;
  std::size_t parameters = 0;
  ErrorReport report;
  double mean_relative_l2 = 0.0;
  double train_seconds = 0.0;
  bool fit_ok = false;
};

struct AblationSetup {
  unet::UNetConfig model;
  std::uint64_t model_seed = 0;
  train::TrainConfig train;
  std::uint64_t ordering_seed = 7;
};

/// One model per ordering, identical seeds and data; errors in the permuted frame.
std::vector<AblationRow> ablation_ordering(const data::SampleSet& train_set, const data::SampleSet& test_set,
                                           const std::vector<data::OrderingStrategy>& strategies,
                                           const AblationSetup& setup);

/// Constant-channel U-Net per channel count.
std::vector<AblationRow> ablation_channels(const data::SampleSet& train_set, const data::SampleSet& test_set,
                                           const std::vector<int>& channels, const AblationSetup& setup);

csv::Table ablation_table(const std::vector<AblationRow>& rows);

}  // namespace nfem::metrics
