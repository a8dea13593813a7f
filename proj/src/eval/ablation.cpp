#include <chrono>

#include "nfem/metrics.hpp"

namespace nfem::metrics {

namespace {

AblationRow train_and_score(const std::string& label, const unet::UNetConfig& config, const AblationSetup& setup,
                            const data::SampleSet& train_set, const data::SampleSet& test_set,
                            const std::vector<double>& node_mask) {
  unet::Model model(config, setup.model_seed);
  train::TrainConfig tc = setup.train;
  tc.node_mask = node_mask;
  const auto t0 = std::chrono::steady_clock::now();
  const auto history = train::train(model, train_set, tc);
  AblationRow row;
  row.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  row.label = label;
  row.channels = config.base_channels;
  row.parameters = model.parameter_count();
  row.fit_ok = history.fit_ok();
  EvalOptions eo;
  eo.node_mask = node_mask;
  eo.seed = setup.train.seed;
  const auto ev = evaluate(model, test_set, eo);
  row.report = ev.report;
  row.mean_relative_l2 = ev.mean_relative_l2;
  return row;
}

}  // namespace

std::vector<AblationRow> ablation_ordering(const data::SampleSet& train_set, const data::SampleSet& test_set,
                                           const std::vector<data::OrderingStrategy>& strategies,
                                           const AblationSetup& setup) {
  if (strategies.empty()) throw InvalidArgument("metrics", "ablation_ordering needs at least one strategy");
  std::vector<AblationRow> rows;
  for (auto strategy : strategies) {
    const auto map = data::make_ordering(strategy, train_set.grid_shape, setup.ordering_seed);
    std::vector<double> mask;
    if (!setup.train.node_mask.empty()) {
      mask.assign(setup.train.node_mask.size(), 0.0);
      for (std::size_t node = 0; node < mask.size(); ++node) mask[map.permutation[node]] = setup.train.node_mask[node];
    }
    rows.push_back(train_and_score(data::to_string(strategy), setup.model, setup,
                                   data::apply_ordering(train_set, map), data::apply_ordering(test_set, map), mask));
  }
  return rows;
}

std::vector<AblationRow> ablation_channels(const data::SampleSet& train_set, const data::SampleSet& test_set,
                                           const std::vector<int>& channels, const AblationSetup& setup) {
  if (channels.empty()) throw InvalidArgument("metrics", "ablation_channels needs at least one channel count");
  std::vector<AblationRow> rows;
  for (int c : channels) {
    if (c < 1) throw InvalidArgument("metrics", "channel counts must be positive");
    unet::UNetConfig config = setup.model;
    config.base_channels = c;
    config.constant_channels = true;
    rows.push_back(train_and_score("c=" + std::to_string(c), config, setup, train_set, test_set,
                                   setup.train.node_mask));
  }
  return rows;
}

csv::Table ablation_table(const std::vector<AblationRow>& rows) {
  csv::Table t({"label", "channels", "parameters", "e_bar", "sigma_e", "mean_relative_l2", "train_seconds", "fit_ok"});
  for (const auto& r : rows)
    t.add_row({r.label, std::to_string(r.channels), std::to_string(r.parameters), csv::number(r.report.e_bar),
               csv::number(r.report.sigma_e), csv::number(r.mean_relative_l2), csv::number(r.train_seconds),
               r.fit_ok ? "true" : "false"});
  return t;
}

}  // namespace nfem::metrics
