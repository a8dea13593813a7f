#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "nfem/unet.hpp"
#include "test_helpers.hpp"

using namespace nfem;
using unet::Mode;
using unet::Model;
using unet::UNetConfig;

namespace {

UNetConfig tiny(Mode mode = Mode::deterministic) {
  UNetConfig c;
  c.grid_shape = {4, 4};
  c.levels = 2;
  c.base_channels = 2;
  c.mode = mode;
  return c;
}

std::vector<double> random_field(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

ad::Shape batch_shape(const UNetConfig& c, std::size_t batch, int channels) {
  ad::Shape s{batch};
  for (int n : c.grid_shape) s.push_back(static_cast<std::size_t>(n));
  s.push_back(static_cast<std::size_t>(channels));
  return s;
}

}  // namespace

TEST(UNetConfig, BeamLevelExtents2D) {
  UNetConfig c;
  c.grid_shape = {16, 4};
  const auto ext = c.level_extents();
  ASSERT_EQ(ext.size(), 3u);
  EXPECT_EQ(ext[0], (std::vector<int>{20, 8}));
  EXPECT_EQ(ext[1], (std::vector<int>{10, 4}));
  EXPECT_EQ(ext[2], (std::vector<int>{5, 2}));
}

TEST(UNetConfig, BeamLevelExtents3D) {
  UNetConfig c;
  c.dim = 3;
  c.grid_shape = {28, 12, 12};
  c.levels = 4;
  const auto ext = c.level_extents();
  ASSERT_EQ(ext.size(), 4u);
  EXPECT_EQ(ext[0], (std::vector<int>{32, 16, 16}));
  EXPECT_EQ(ext[3], (std::vector<int>{4, 2, 2}));
  EXPECT_NO_THROW(c.validate());
}

TEST(UNetConfig, DivisibilityViolationNamesPadding) {
  UNetConfig c;
  c.grid_shape = {16, 4};
  c.input_pad = 1;
  try {
    c.validate();
    FAIL() << "expected InvalidArgument";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("input_pad = 0"), std::string::npos) << e.what();
  }
}

TEST(UNetModel, ParameterCount3DBelowDenseLayer) {
  UNetConfig c;
  c.dim = 3;
  c.grid_shape = {28, 12, 12};
  c.levels = 4;
  c.base_channels = 64;
  const Model m(c, 1);
  EXPECT_LT(static_cast<double>(m.parameter_count()), 146.3e6);
  EXPECT_GT(m.parameter_count(), 1'000'000u);
}

TEST(UNetModel, ParameterCountGrowsWithChannels) {
  std::size_t prev = 0;
  for (int ch : {8, 16, 32}) {
    UNetConfig c;
    c.base_channels = ch;
    c.constant_channels = true;
    const std::size_t n = Model(c, 1).parameter_count();
    EXPECT_GT(n, prev);
    prev = n;
  }
}

TEST(UNetModel, VbHasHalfTheConvolutionsVariational) {
  UNetConfig c;
  c.mode = Mode::vb;
  const Model m(c, 1);
  EXPECT_EQ(m.conv3x3_count(), 10u);
  EXPECT_EQ(m.variational_layer_count(), 5u);
  for (const auto& l : m.layers())
    if (l.kind == unet::LayerKind::conv1x1) EXPECT_FALSE(l.variational);
  EXPECT_EQ(c.out_channels(), 4);
}

TEST(UNetModel, SameSeedSameParameters) {
  const Model a(tiny(Mode::vb), 42), b(tiny(Mode::vb), 42), other(tiny(Mode::vb), 43);
  ASSERT_EQ(a.params().size(), b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i) EXPECT_EQ(a.params()[i].value, b.params()[i].value);
  EXPECT_NE(a.params()[0].value, other.params()[0].value);
}

TEST(UNetModel, VbRhoInitialisedFromHeScale) {
  const Model m(tiny(Mode::vb), 1);
  const auto& rho = m.param("enc0.conv1.rho");
  const double he = std::sqrt(2.0 / (9.0 * 2.0));
  EXPECT_NEAR(ad::softplus(rho.value[0]), 0.01 * he, 1e-15);
  for (double v : m.param("enc0.conv1.mu_p").value) EXPECT_EQ(v, 0.0);
}

TEST(UNetForward, OutputShapeMatchesInputGrid) {
  UNetConfig c;
  c.grid_shape = {16, 4};
  c.base_channels = 4;
  Model m(c, 1);
  ad::Tape tape;
  auto f = tape.constant(batch_shape(c, 3, 2), random_field(3 * 64 * 2, 1));
  auto pass = m.forward(tape, f, {});
  EXPECT_EQ(pass.output.shape(), f.shape());
}

TEST(UNetForward, ShapeMismatchRejected) {
  Model m(tiny(), 1);
  ad::Tape tape;
  auto f = tape.constant({1, 4, 2, 2}, std::vector<double>(16, 0.0));
  EXPECT_THROW(m.forward(tape, f, {}), ShapeError);
  EXPECT_THROW(m.infer(std::vector<double>(5, 0.0)), ShapeError);
}

TEST(UNetForward, ZeroWeightsGiveZeroOutput) {
  Model m(tiny(), 1);
  for (auto& p : m.params()) std::fill(p.value.begin(), p.value.end(), 0.0);
  const auto out = m.infer(random_field(32, 2));
  for (double v : out) EXPECT_EQ(v, 0.0);
}

TEST(UNetForward, InferenceIsPure) {
  const Model m(tiny(), 1);
  const auto f = random_field(32, 3);
  EXPECT_EQ(m.infer(f), m.infer(f));
}

TEST(UNetForward, VbSameRngSeedSameOutput) {
  const Model m(tiny(Mode::vb), 1);
  const auto f = random_field(32, 4);
  std::mt19937_64 r1(9), r2(9), r3(10);
  const auto a = m.infer(f, &r1);
  EXPECT_EQ(a, m.infer(f, &r2));
  EXPECT_NE(a, m.infer(f, &r3));
}

TEST(UNetForward, VbZeroPosteriorVarianceIsDeterministic) {
  Model m(tiny(Mode::vb), 1);
  for (const auto& l : m.layers())
    if (l.variational) std::fill(m.params()[l.rho].value.begin(), m.params()[l.rho].value.end(), -60.0);
  const auto f = random_field(32, 5);
  std::mt19937_64 r1(1), r2(2);
  const auto a = m.infer(f, &r1);
  const auto b = m.infer(f, &r2);
  const auto mean = m.infer(f);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i], b[i], 1e-12);
    EXPECT_NEAR(a[i], mean[i], 1e-12);
  }
}

TEST(UNetForward, VbMonteCarloMeanStabilises) {
  Model m(tiny(Mode::vb), 1);
  // Widen the posterior so the draws actually spread.
  for (const auto& l : m.layers())
    if (l.variational)
      std::fill(m.params()[l.rho].value.begin(), m.params()[l.rho].value.end(), ad::inverse_softplus(0.1));
  const auto f = random_field(32, 6);
  const int T = 300;
  std::mt19937_64 rng(11);
  std::vector<double> sum, sum2;
  for (int t = 0; t < T; ++t) {
    const auto y = m.infer(f, &rng);
    if (sum.empty()) sum.assign(y.size(), 0.0), sum2.assign(y.size(), 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) sum[i] += y[i], sum2[i] += y[i] * y[i];
  }
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const double mean = sum[i] / T;
    const double sd = std::sqrt(std::max(0.0, (sum2[i] - T * mean * mean) / (T - 1)));
    EXPECT_LT(sd / std::sqrt(static_cast<double>(T)), 0.1 * sd + 1e-15);
  }
}

TEST(UNetForward, TrainingModeUpdatesRunningStats) {
  Model m(tiny(), 1);
  ad::Tape tape;
  unet::ForwardOptions o;
  o.training = true;
  m.forward(tape, tape.constant(batch_shape(m.config(), 2, 2), random_field(64, 7)), o);
  EXPECT_NE(m.bn_states()[0].running_mean[0], 0.0);
}

// U-Net forward + MSE loss against central differences on randomly chosen weights.
TEST(UNetGradient, ComposedLossMatchesFiniteDifferences) {
  for (Mode mode : {Mode::deterministic, Mode::vb}) {
    Model m(tiny(mode), 5);
    const auto c = m.config();
    const auto f = random_field(2 * 16 * 2, 8);
    const auto u = random_field(2 * 16 * c.out_channels(), 9);
    std::vector<std::vector<double>> eps;
    for (std::size_t n : m.variational_sizes()) eps.push_back(random_field(n, 10 + n));

    const auto loss = [&](bool track) {
      ad::Tape tape;
      unet::ForwardOptions o;
      o.training = true;
      o.track_parameters = track;
      o.eps = &eps;
      auto pass = m.forward(tape, tape.constant(batch_shape(c, 2, 2), f), o);
      auto l = ad::mse_loss(tape, pass.output, tape.constant(pass.output.shape(), u));
      if (track) {
        m.zero_grad();
        tape.backward(l);
      }
      return l.item();
    };
    loss(true);

    std::mt19937_64 pick(3);
    int checked = 0;
    while (checked < 10) {
      auto& p = m.params()[pick() % m.params().size()];
      const std::size_t i = pick() % p.size();
      const double g = p.grad[i];
      const double x0 = p.value[i];
      const double h = 1e-6;
      p.value[i] = x0 + h;
      const double fp = loss(false);
      p.value[i] = x0 - h;
      const double fm = loss(false);
      p.value[i] = x0;
      const double fd = (fp - fm) / (2 * h);
      EXPECT_LT(std::abs(fd - g) / std::max(1.0, std::abs(fd)), 1e-5)
          << unet::to_string(mode) << " " << p.name << "[" << i << "] fd=" << fd << " ad=" << g;
      ++checked;
    }
  }
}

TEST(UNetCheckpoint, RoundTripIsBitExact) {
  const auto dir = test::scratch_dir();
  Model m(tiny(Mode::vb), 3);
  m.bn_states()[1].running_mean[0] = 0.123456789;
  save_checkpoint(m, dir / "w.bin");
  const Model r = unet::load_checkpoint(dir / "w.bin");
  EXPECT_EQ(r.config().mode, Mode::vb);
  EXPECT_EQ(r.config().grid_shape, m.config().grid_shape);
  ASSERT_EQ(r.params().size(), m.params().size());
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    EXPECT_EQ(r.params()[i].name, m.params()[i].name);
    EXPECT_EQ(r.params()[i].value, m.params()[i].value);
  }
  EXPECT_EQ(r.bn_states()[1].running_mean, m.bn_states()[1].running_mean);
  const auto f = random_field(32, 1);
  EXPECT_EQ(r.infer(f), m.infer(f));
}

TEST(UNetCheckpoint, MissingAndCorruptFilesRejected) {
  const auto dir = test::scratch_dir();
  try {
    unet::load_checkpoint(dir / "absent.bin");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("checkpoint not found"), std::string::npos);
  }
  save_checkpoint(Model(tiny(), 1), dir / "w.bin");
  std::filesystem::resize_file(dir / "w.bin", std::filesystem::file_size(dir / "w.bin") - 9);
  EXPECT_THROW(unet::load_checkpoint(dir / "w.bin"), FormatError);
}

TEST(UNetKl, AnalyticKlNonNegativeAndZeroIffEqual) {
  const std::vector<double> mu{0.1, -0.2}, mp{0.1, -0.2};
  const double sp = 0.1;
  const std::vector<double> rho(2, ad::inverse_softplus(sp));
  EXPECT_NEAR(unet::analytic_kl(mu, rho, mp, sp), 0.0, 1e-15);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 200; ++k) {
    const std::vector<double> a{u(rng)}, b{u(rng)}, r{u(rng) * 4};
    EXPECT_GT(unet::analytic_kl(a, r, b, 0.1), 0.0);
  }
}
