#include "nfem/train.hpp"

namespace nfem::train {

Batch make_batch(const data::SampleSet& set, std::span<const std::size_t> indices) {
  Batch b;
  b.size = indices.size();
  const std::size_t n = set.values_per_sample();
  b.f.reserve(b.size * n);
  b.u.reserve(b.size * n);
  for (std::size_t i : indices) {
    if (i >= set.size()) throw InvalidArgument("train", "batch index " + std::to_string(i) + " out of range");
    const auto& s = set.samples[i];
    b.f.insert(b.f.end(), s.f.begin(), s.f.end());
    b.u.insert(b.u.end(), s.u.begin(), s.u.end());
  }
  return b;
}

namespace {

ad::Shape batch_shape(const unet::Model& model, std::size_t batch) {
  ad::Shape s{batch};
  for (int n : model.config().grid_shape) s.push_back(static_cast<std::size_t>(n));
  s.push_back(static_cast<std::size_t>(model.config().dim));
  return s;
}

void check_batch(const unet::Model& model, const Batch& batch) {
  if (batch.size == 0) throw InvalidArgument("train", "empty batch");
  const std::size_t n = ad::numel(batch_shape(model, batch.size));
  if (batch.f.size() != n || batch.u.size() != n)
    throw ShapeError("train", "batch does not match the model grid (" + std::to_string(batch.f.size()) + " values, " +
                                  std::to_string(n) + " expected)");
}

unet::ForwardOptions forward_options(const LossOptions& opts) {
  unet::ForwardOptions o;
  o.training = opts.training;
  o.track_parameters = opts.track_parameters;
  o.rng = opts.rng;
  o.eps = opts.eps;
  return o;
}

void require_mode(const unet::Model& model, unet::Mode mode, const char* loss) {
  if (model.config().mode != mode)
    throw InvalidArgument("train", std::string(loss) + " needs a " + unet::to_string(mode) + " model, got " +
                                       unet::to_string(model.config().mode));
}

}  // namespace

LossTerms loss_det(ad::Tape& tape, unet::Model& model, const Batch& batch, const LossOptions& opts) {
  require_mode(model, unet::Mode::deterministic, "loss_det");
  check_batch(model, batch);
  const auto shape = batch_shape(model, batch.size);
  auto pass = model.forward(tape, tape.constant(shape, batch.f), forward_options(opts));
  LossTerms t;
  t.total = ad::mse_loss(tape, pass.output, tape.constant(shape, batch.u), opts.node_mask);
  t.nll = t.total.item();
  return t;
}

LossTerms loss_mle(ad::Tape& tape, unet::Model& model, const Batch& batch, const LossOptions& opts) {
  require_mode(model, unet::Mode::mle, "loss_mle");
  check_batch(model, batch);
  const auto shape = batch_shape(model, batch.size);
  const std::size_t dim = static_cast<std::size_t>(model.config().dim);
  auto pass = model.forward(tape, tape.constant(shape, batch.f), forward_options(opts));
  auto mu = ad::slice_channels(tape, pass.output, 0, dim);
  auto rho = ad::slice_channels(tape, pass.output, dim, 2 * dim);
  LossTerms t;
  t.total = ad::gaussian_nll(tape, mu, rho, tape.constant(shape, batch.u), opts.node_mask);
  t.nll = t.total.item();
  return t;
}

LossTerms loss_vb(ad::Tape& tape, unet::Model& model, const Batch& batch, const LossOptions& opts) {
  require_mode(model, unet::Mode::vb, "loss_vb");
  check_batch(model, batch);
  if (opts.mc_samples < 1) throw InvalidArgument("train", "mc_samples must be >= 1");
  if (!opts.rng && !opts.eps) throw InvalidArgument("train", "loss_vb needs an rng or fixed eps draws");
  const int draws = opts.eps ? 1 : opts.mc_samples;
  const auto shape = batch_shape(model, batch.size);
  const std::size_t dim = static_cast<std::size_t>(model.config().dim);
  const auto f = tape.constant(shape, batch.f);
  const auto u = tape.constant(shape, batch.u);

  LossTerms t;
  ad::Tensor total;
  for (int m = 0; m < draws; ++m) {
    auto pass = model.forward(tape, f, forward_options(opts));
    auto mu = ad::slice_channels(tape, pass.output, 0, dim);
    auto rho = ad::slice_channels(tape, pass.output, dim, 2 * dim);
    auto nll = ad::gaussian_nll(tape, mu, rho, u, opts.node_mask);
    ad::Tensor kl;
    for (const auto& d : pass.draws) {
      auto term = ad::gaussian_kl_sample(tape, d.w, d.mu, d.rho, d.mu_p, model.config().sigma_p);
      kl = kl.valid() ? ad::add(tape, kl, term) : term;
    }
    t.nll += nll.item() / draws;
    auto term = nll;
    if (kl.valid()) {
      t.kl += kl.item() / draws;
      term = ad::add(tape, nll, ad::scale(tape, kl, opts.kl_scale));
    }
    total = total.valid() ? ad::add(tape, total, term) : term;
  }
  t.total = draws == 1 ? total : ad::scale(tape, total, 1.0 / draws);
  return t;
}

LossTerms loss_for(ad::Tape& tape, unet::Model& model, const Batch& batch, const LossOptions& opts) {
  switch (model.config().mode) {
    case unet::Mode::deterministic:
      return loss_det(tape, model, batch, opts);
    case unet::Mode::mle:
      return loss_mle(tape, model, batch, opts);
    case unet::Mode::vb:
      return loss_vb(tape, model, batch, opts);
  }
  throw InvalidArgument("train", "unknown model mode");
}

}  // namespace nfem::train
