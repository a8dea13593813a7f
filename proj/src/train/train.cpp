#include <algorithm>
#include <cmath>
#include <numeric>

#include "nfem/csv.hpp"
#include "nfem/train.hpp"

namespace nfem::train {

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("train", "epochs must be >= 1");
  if (batch_size < 2) throw InvalidArgument("train", "batch_size must be >= 2 (batchnorm needs batch statistics)");
  if (!(lr >= 0) || !std::isfinite(lr)) throw InvalidArgument("train", "lr must be finite and >= 0");
  if (mc_samples < 1) throw InvalidArgument("train", "mc_samples must be >= 1");
}

bool History::fit_ok() const { return !loss.empty() && loss.back() <= 0.1 * loss.front(); }

void History::write_csv(const std::filesystem::path& path) const {
  csv::Table t({"epoch", "loss", "kl", "nll"});
  for (std::size_t e = 0; e < loss.size(); ++e)
    t.add_row({std::to_string(e + 1), csv::number(loss[e]), csv::number(kl[e]), csv::number(nll[e])});
  t.write(path);
}

History train(unet::Model& model, const data::SampleSet& train_set, const TrainConfig& config) {
  config.validate();
  const std::size_t N = train_set.size();
  if (N == 0) throw InvalidArgument("train", "training set is empty");
  if (train_set.grid_shape != model.config().grid_shape || train_set.dim != model.config().dim)
    throw ShapeError("train", "training set grid does not match the model");

  const std::size_t B = static_cast<std::size_t>(config.batch_size);
  LossOptions opts;
  opts.node_mask = config.node_mask;
  opts.mc_samples = config.mc_samples;
  opts.kl_scale = config.kl_scale > 0 ? config.kl_scale : static_cast<double>(B) / static_cast<double>(N);

  std::mt19937_64 shuffle_rng(config.seed);
  std::seed_seq noise_seed{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                           0x5eedu};
  std::mt19937_64 noise_rng(noise_seed);
  opts.rng = &noise_rng;

  auto params = model.trainable();
  ad::AdamConfig adam;
  adam.lr = config.lr;

  History h;
  std::vector<std::size_t> order(N);
  std::vector<std::size_t> idx(B);
  const std::size_t batches = (N + B - 1) / B;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sum_loss = 0.0, sum_kl = 0.0, sum_nll = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      for (std::size_t k = 0; k < B; ++k) idx[k] = order[(b * B + k) % N];
      const Batch batch = make_batch(train_set, idx);
      ad::Tape tape;
      model.zero_grad();
      LossTerms terms;
      try {
        terms = loss_for(tape, model, batch, opts);
        tape.backward(terms.total);
        ad::adam_step(params, adam, ++h.steps);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("train", "divergence at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                                          ": " + e.what());
      }
      sum_loss += terms.total.item();
      sum_kl += terms.kl;
      sum_nll += terms.nll;
    }
    h.loss.push_back(sum_loss / batches);
    h.kl.push_back(sum_kl / batches);
    h.nll.push_back(sum_nll / batches);
    if (config.on_epoch) config.on_epoch(epoch, h.loss.back());
  }
  return h;
}

}  // namespace nfem::train
