#include <cmath>
#include <limits>

#include "nfem/metrics.hpp"
#include "nfem/uq.hpp"

namespace nfem::metrics {

namespace {

void check_sizes(std::size_t a, std::size_t b, int dim, std::span<const double> node_mask, const char* op) {
  if (a != b) throw ShapeError("metrics", std::string(op) + ": prediction and reference sizes differ");
  if (dim < 1 || a % static_cast<std::size_t>(dim) != 0)
    throw ShapeError("metrics", std::string(op) + ": size is not a multiple of dim");
  if (!node_mask.empty() && node_mask.size() * dim != a)
    throw ShapeError("metrics", std::string(op) + ": node mask does not match the field");
}

bool active(std::span<const double> node_mask, std::size_t node) { return node_mask.empty() || node_mask[node] != 0; }

}  // namespace

double sample_error(std::span<const double> pred, std::span<const double> ref, int dim,
                    std::span<const double> node_mask) {
  check_sizes(pred.size(), ref.size(), dim, node_mask, "sample_error");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!active(node_mask, i / dim)) continue;
    s += std::abs(pred[i] - ref[i]);
    ++n;
  }
  if (n == 0) throw InvalidArgument("metrics", "sample_error: no active dofs");
  return s / static_cast<double>(n);
}

ErrorReport aggregate(std::span<const double> errors, std::size_t dof_count) {
  if (errors.size() < 2) throw InvalidArgument("metrics", "aggregate needs at least two errors for sigma_e");
  ErrorReport r;
  r.errors.assign(errors.begin(), errors.end());
  r.M = errors.size();
  r.n = dof_count;
  double s = 0.0;
  for (double e : errors) s += e;
  r.e_bar = s / static_cast<double>(r.M);
  double ss = 0.0;
  for (double e : errors) ss += (e - r.e_bar) * (e - r.e_bar);
  r.sigma_e = std::sqrt(ss / static_cast<double>(r.M - 1));
  return r;
}

NodalError nodal_error_field(std::span<const double> pred, std::span<const double> ref, int dim) {
  check_sizes(pred.size(), ref.size(), dim, {}, "nodal_error_field");
  NodalError out;
  out.per_node.assign(pred.size() / dim, 0.0);
  double num = 0.0, den = 0.0;
  for (std::size_t node = 0; node < out.per_node.size(); ++node) {
    double s = 0.0;
    for (int c = 0; c < dim; ++c) {
      const std::size_t i = node * dim + c;
      s += (pred[i] - ref[i]) * (pred[i] - ref[i]);
      den += ref[i] * ref[i];
    }
    out.per_node[node] = std::sqrt(s);
    num += s;
  }
  if (den == 0.0) throw InvalidArgument("metrics", "relative l2 error is undefined for a zero reference field");
  out.relative_l2 = std::sqrt(num / den);
  return out;
}

double relative_l2(std::span<const double> pred, std::span<const double> ref) {
  return nodal_error_field(pred, ref, 1).relative_l2;
}

double sensitivity_slope(std::span<const double> errors, std::span<const double> magnitudes) {
  if (errors.size() != magnitudes.size()) throw ShapeError("metrics", "sensitivity_slope: size mismatch");
  if (errors.size() < 2) throw InvalidArgument("metrics", "sensitivity_slope needs at least two points");
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    sxy += magnitudes[i] * errors[i];
    sxx += magnitudes[i] * magnitudes[i];
  }
  if (sxx == 0.0) throw InvalidArgument("metrics", "sensitivity_slope: all displacement magnitudes are zero");
  return sxy / sxx;
}

double coverage_fraction(std::span<const double> mean, std::span<const double> std, std::span<const double> ref,
                         int dim, std::span<const double> node_mask) {
  check_sizes(mean.size(), ref.size(), dim, node_mask, "coverage_fraction");
  if (std.size() != mean.size()) throw ShapeError("metrics", "coverage_fraction: std size differs");
  std::size_t hit = 0, n = 0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    if (!active(node_mask, i / dim)) continue;
    ++n;
    if (std::abs(mean[i] - ref[i]) <= 2.0 * std[i]) ++hit;
  }
  if (n == 0) throw InvalidArgument("metrics", "coverage_fraction: no active dofs");
  return static_cast<double>(hit) / static_cast<double>(n);
}

int excited_node(const data::Sample& s, int dim) {
  int best = -1;
  double best_norm = 0.0;
  for (std::size_t node = 0; node * dim < s.f.size(); ++node) {
    double n2 = 0.0;
    for (int c = 0; c < dim; ++c) n2 += s.f[node * dim + c] * s.f[node * dim + c];
    if (n2 > best_norm) {
      best_norm = n2;
      best = static_cast<int>(node);
    }
  }
  return best;
}

double excited_displacement(const data::Sample& s, int dim) {
  const int node = excited_node(s, dim);
  if (node < 0) return 0.0;
  double n2 = 0.0;
  for (int c = 0; c < dim; ++c) n2 += s.u[node * dim + c] * s.u[node * dim + c];
  return std::sqrt(n2);
}

Evaluation evaluate(const unet::Model& model, const data::SampleSet& test, const EvalOptions& opts) {
  if (test.grid_shape != model.config().grid_shape) throw ShapeError("metrics", "test set grid does not match model");
  const int dim = test.dim;
  const bool probabilistic = model.config().mode != unet::Mode::deterministic;
  Evaluation ev;
  std::vector<double> errors;
  double num = 0.0, den = 0.0;
  std::size_t hit = 0, total = 0;
  for (std::size_t k = 0; k < test.size(); ++k) {
    const auto& s = test.samples[k];
    const auto p = uq::predict(model, s.f, opts.passes, opts.seed + k);
    errors.push_back(sample_error(p.mean, s.u, dim, opts.node_mask));
    double e2 = 0.0, r2 = 0.0;
    for (std::size_t i = 0; i < s.u.size(); ++i) {
      if (!active(opts.node_mask, i / dim)) continue;
      e2 += (p.mean[i] - s.u[i]) * (p.mean[i] - s.u[i]);
      r2 += s.u[i] * s.u[i];
      if (probabilistic) {
        ++total;
        if (std::abs(p.mean[i] - s.u[i]) <= 2.0 * p.std[i]) ++hit;
      }
    }
    num += e2;
    den += r2;
    ev.relative_l2.push_back(r2 > 0 ? std::sqrt(e2 / r2) : std::numeric_limits<double>::quiet_NaN());
    ev.magnitudes.push_back(excited_displacement(s, dim));
    if (opts.keep_fields) {
      ev.predictions.push_back(p.mean);
      ev.stds.push_back(p.std);
    }
  }
  std::size_t active_nodes = test.node_count();
  if (!opts.node_mask.empty()) {
    active_nodes = 0;
    for (double m : opts.node_mask) active_nodes += m != 0;
  }
  ev.report = aggregate(errors, active_nodes * dim);
  double rel_sum = 0.0;
  std::size_t rel_n = 0;
  for (double r : ev.relative_l2)
    if (!std::isnan(r)) rel_sum += r, ++rel_n;
  ev.mean_relative_l2 = rel_n ? rel_sum / rel_n : std::numeric_limits<double>::quiet_NaN();
  ev.pooled_relative_l2 = den > 0 ? std::sqrt(num / den) : std::numeric_limits<double>::quiet_NaN();
  ev.slope = sensitivity_slope(ev.report.errors, ev.magnitudes);
  ev.coverage = probabilistic ? static_cast<double>(hit) / static_cast<double>(total)
                              : std::numeric_limits<double>::quiet_NaN();
  return ev;
}

csv::Table report_table(const Evaluation& ev) {
  csv::Table t({"sample", "e_m", "relative_l2", "excited_displacement"});
  for (std::size_t k = 0; k < ev.report.errors.size(); ++k)
    t.add_row({std::to_string(k), csv::number(ev.report.errors[k]), csv::number(ev.relative_l2[k]),
               csv::number(ev.magnitudes[k])});
  t.add_row({"e_bar", csv::number(ev.report.e_bar), csv::number(ev.mean_relative_l2), ""});
  t.add_row({"sigma_e", csv::number(ev.report.sigma_e), "", ""});
  t.add_row({"pooled_relative_l2", "", csv::number(ev.pooled_relative_l2), ""});
  t.add_row({"sensitivity_slope", csv::number(ev.slope), "", ""});
  t.add_row({"coverage_2sigma", csv::number(ev.coverage), "", ""});
  return t;
}

}  // namespace nfem::metrics
