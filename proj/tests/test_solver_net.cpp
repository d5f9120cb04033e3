#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <complex>
#include <random>

#include "shockcast/solver_net.hpp"
#include "support/gradcheck.hpp"

namespace ad = shockcast::ad;
namespace nn = shockcast::nn;
namespace oc = shockcast::oracle;
using oc::DTensor;
using shockcast::Conditioning;
using shockcast::SolverNet;
using shockcast::SolverNetConfig;
using shockcast::Trunk;

namespace {

SolverNetConfig toy(Trunk trunk, Conditioning cond) {
  SolverNetConfig c;
  c.trunk = trunk;
  c.conditioning = cond;
  c.width = trunk == Trunk::unet_lite ? 2 : 3;
  c.levels = 2;
  c.layers = 2;
  c.modes = 3;
  c.experts = 2;
  c.embed_pairs = 2;
  c.embed_dim = 3;
  c.gate_hidden = 3;
  c.norm_groups = 1;
  return c;
}

const std::vector<std::pair<Trunk, Conditioning>> kPairs = {
    {Trunk::unet_lite, Conditioning::cond_layer_norm},
    {Trunk::unet_lite, Conditioning::euler_residual},
    {Trunk::unet_lite, Conditioning::moe},
    {Trunk::ffno_lite, Conditioning::spatial_spectral},
    {Trunk::ffno_lite, Conditioning::euler_residual},
    {Trunk::ffno_lite, Conditioning::moe},
};

// Gives every parameter, including the zero-initialized head, random values.
template <class T>
void randomize(SolverNet<T>& net, unsigned seed, double amp = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  for (auto& [name, p] : net.params())
    for (auto& v : p.values()) v = static_cast<T>(v + u(rng));
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

std::string pair_name(Trunk t, Conditioning c) {
  return SolverNetConfig{t, c}.label();
}

}  // namespace

TEST(SolverNetConfig, RejectsUnsupportedPairs) {
  SolverNetConfig c;
  c.trunk = Trunk::unet_lite;
  c.conditioning = Conditioning::spatial_spectral;
  EXPECT_THROW(c.validate(), shockcast::ConfigError);
  c.trunk = Trunk::ffno_lite;
  c.conditioning = Conditioning::cond_layer_norm;
  EXPECT_THROW(c.validate(), shockcast::ConfigError);
  c.conditioning = Conditioning::moe;
  c.experts = 0;
  EXPECT_THROW(c.validate(), shockcast::ConfigError);
  EXPECT_THROW(SolverNet<float>(c, 1), shockcast::ConfigError);
}

TEST(SolverNetConfig, JsonRoundTrip) {
  SolverNetConfig c;
  c.trunk = Trunk::ffno_lite;
  c.conditioning = Conditioning::moe;
  c.modes = 5;
  c.expert_width_scaling = false;
  nlohmann::json j = c;
  EXPECT_EQ(j["trunk"], "ffno_lite");
  EXPECT_EQ(j["conditioning"], "moe");
  auto back = j.get<SolverNetConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
}

TEST(SolverNet, OutputShapeMatchesInputAndZeroHeadGivesZero) {
  for (auto [t, c] : kPairs) {
    SolverNetConfig cfg;
    cfg.trunk = t;
    cfg.conditioning = c;
    SolverNet<float> net(cfg, 3);
    std::mt19937_64 rng(5);
    std::normal_distribution<float> n(0.f, 1.f);
    std::vector<float> x(2 * 4 * 64 * 64);
    for (auto& v : x) v = n(rng);
    ad::NoGradGuard guard;
    auto y = net.forward(ad::Tensor<float>({2, 4, 64, 64}, x), std::vector<float>{0.3f, -1.f});
    EXPECT_EQ(y.shape(), (ad::Shape{2, 4, 64, 64})) << pair_name(t, c);
    for (float v : y.values()) ASSERT_EQ(v, 0.f) << pair_name(t, c);
  }
}

TEST(SolverNet, RejectsBadInputShapes) {
  SolverNet<float> unet(SolverNetConfig{}, 1);
  EXPECT_THROW(unet.forward(ad::Tensor<float>({1, 3, 8, 8}), std::vector<float>{0.f}),
               shockcast::ShapeError);
  EXPECT_THROW(unet.forward(ad::Tensor<float>({1, 4, 6, 6}), std::vector<float>{0.f}),
               shockcast::ShapeError);
  EXPECT_THROW(unet.forward(ad::Tensor<float>({2, 4, 8, 8}), std::vector<float>{0.f}),
               shockcast::ShapeError);
  SolverNetConfig f;
  f.trunk = Trunk::ffno_lite;
  f.conditioning = Conditioning::spatial_spectral;
  SolverNet<float> ffno(f, 1);
  EXPECT_THROW(ffno.forward(ad::Tensor<float>({1, 4, 8, 8}), std::vector<float>{0.f}),
               shockcast::ShapeError);
}

TEST(SolverNet, TimestepChangesOutputForEveryConditioning) {
  for (auto [t, c] : kPairs) {
    SolverNet<double> net(toy(t, c), 11);
    randomize(net, 12);
    std::mt19937_64 rng(13);
    auto x = oc::random_tensor(rng, {1, 4, 8, 8}, false);
    ad::NoGradGuard guard;
    auto y1 = net.forward(x, std::vector<double>{0.4});
    auto y2 = net.forward(x, std::vector<double>{0.8});
    EXPECT_GT(max_abs_diff(y1.values(), y2.values()), 0.0) << pair_name(t, c);
  }
}

TEST(SolverNet, Deterministic) {
  for (auto [t, c] : kPairs) {
    SolverNet<double> a(toy(t, c), 21), b(toy(t, c), 21);
    auto pa = a.params().to_arrays(), pb = b.params().to_arrays();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t k = 0; k < pa.size(); ++k) EXPECT_EQ(pa[k].data, pb[k].data);
  }
}

// Full-model gradient, all parameters and the input, against central differences.
TEST(SolverNetGradient, MatchesFiniteDifferencesForEveryPair) {
  const auto start = std::chrono::steady_clock::now();
  for (auto [t, c] : kPairs) {
    SolverNet<double> net(toy(t, c), 31);
    randomize(net, 32, 0.3);
    std::mt19937_64 rng(33);
    auto x = oc::random_tensor(rng, {2, 4, 8, 8});
    // The timestep stays fixed: central differences cannot resolve the 1e4
    // embedding frequency; its derivative is checked in closed form below.
    auto dt = oc::random_tensor(rng, {2, 1}, false);
    std::vector<DTensor> inputs{x};
    for (auto& [_, p] : net.params()) inputs.push_back(p);
    const double err = oc::gradcheck(inputs, [&] { return oc::project(net.forward(x, dt)); });
    EXPECT_LT(err, 1e-5) << pair_name(t, c);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 60.0);
}

TEST(SolverNet, MoeWithOneExpertIsBitIdenticalToEulerResidual) {
  for (Trunk t : {Trunk::unet_lite, Trunk::ffno_lite}) {
    auto ec = toy(t, Conditioning::euler_residual);
    auto mc = toy(t, Conditioning::moe);
    mc.experts = 1;
    SolverNet<double> euler(ec, 41), moe(mc, 42);
    randomize(euler, 43);
    for (auto& [name, p] : euler.params()) moe.params().at(name).values() = p.values();
    std::mt19937_64 rng(44);
    auto x = oc::random_tensor(rng, {2, 4, 8, 8}, false);
    ad::NoGradGuard guard;
    auto a = euler.forward(x, std::vector<double>{0.7, -0.2});
    auto b = moe.forward(x, std::vector<double>{0.7, -0.2});
    EXPECT_EQ(a.values(), b.values()) << (t == Trunk::unet_lite ? "unet" : "ffno");
  }
}

TEST(TimeEmbedding, SinusoidDerivativeMatchesClosedForm) {
  const std::size_t pairs = 32;
  auto dt = DTensor::parameter({2, 1}, {0.37, -1.2});
  auto feats = nn::sinusoidal_features(dt, pairs);
  ad::backward(oc::project(feats, 7));
  std::mt19937_64 prng(7);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> w(feats.numel());
  for (auto& v : w) v = nd(prng);
  for (std::size_t n = 0; n < 2; ++n) {
    double expect = 0.0;
    for (std::size_t k = 0; k < pairs; ++k) {
      const double f = std::pow(10.0, 4.0 * static_cast<double>(k) / 31.0);
      const double x = dt.values()[n];
      EXPECT_NEAR(feats.values()[n * 64 + 2 * k], std::sin(f * x), 1e-12);
      expect += w[n * 64 + 2 * k] * f * std::cos(f * x) - w[n * 64 + 2 * k + 1] * f * std::sin(f * x);
    }
    EXPECT_NEAR(dt.grad()[n], expect, 1e-9 * std::abs(expect));
  }
  auto lo = DTensor::parameter({3, 1}, {0.1, 0.5, -0.9});
  EXPECT_LT(oc::gradcheck({lo}, [&] { return oc::project(nn::sinusoidal_features(lo, 1)); }), 1e-8);
}

// ---------------------------------------------------------------------------
// Conditioning operators

TEST(CondGroupNorm, ZeroCoefficientsReduceToPlainGroupNorm) {
  std::mt19937_64 rng(51);
  auto z = oc::random_tensor(rng, {2, 4, 5, 5}, false);
  DTensor zeros({2, 4});
  auto a = ad::cond_group_norm(z, zeros, zeros, 2);
  auto b = ad::group_norm(z, std::size_t{2});
  EXPECT_EQ(a.values(), b.values());
}

TEST(CondGroupNorm, MeanEqualsShiftMeanWhenScaleIsZero) {
  std::mt19937_64 rng(52);
  auto z = oc::random_tensor(rng, {2, 4, 5, 5}, false);
  auto shift = oc::random_tensor(rng, {2, 4}, false);
  auto out = ad::cond_group_norm(z, DTensor({2, 4}), shift, 2);
  for (std::size_t n = 0; n < 2; ++n) {
    double m = 0.0, mb = 0.0;
    for (std::size_t k = 0; k < 100; ++k) m += out.values()[n * 100 + k];
    for (std::size_t c = 0; c < 4; ++c) mb += shift.values()[n * 4 + c];
    EXPECT_NEAR(m / 100.0, mb / 4.0, 1e-12);
  }
}

TEST(CondGroupNorm, SiteRespondsToTimestepWithDistinctHeadRows) {
  ad::ParamSet<double> ps;
  std::mt19937_64 rng(53);
  nn::Builder<double> b(ps, rng);
  nn::NormSite<double> site{2, b.linear("film", 3, 8)};
  nn::NormSite<double> plain{2, std::nullopt};
  auto z = oc::random_tensor(rng, {1, 4, 4, 4}, false);
  nn::StepContext<double> c1{DTensor({1, 1}), DTensor({1, 3}, {0.1, 0.2, 0.3})};
  nn::StepContext<double> c2{DTensor({1, 1}), DTensor({1, 3}, {-0.4, 0.9, 0.0})};
  EXPECT_GT(max_abs_diff(site(z, c1).values(), site(z, c2).values()), 1e-3);
  for (auto& v : ps.at("film.w").values()) v = 0.0;
  EXPECT_EQ(site(z, c1).values(), plain(z, c1).values());
}

TEST(EulerResidual, IdentitiesAndTimestepDerivative) {
  std::mt19937_64 rng(61);
  auto z = oc::random_tensor(rng, {2, 3, 4, 4}, false);
  auto f = oc::random_tensor(rng, {2, 3, 4, 4}, false);
  auto W = DTensor({3, 1}, {0.0, 0.0, 0.0});
  auto c1 = DTensor({3}, {1.0, 1.0, 1.0});
  DTensor dt({2, 1}, {0.5, -1.5});
  auto plain = ad::euler_residual(z, f, ad::linear(dt, W, c1));
  EXPECT_EQ(plain.values(), ad::add(z, f).values());

  auto skip = ad::euler_residual(z, f, ad::linear(DTensor({2, 1}), oc::random_tensor(rng, {3, 1}, false),
                                                  DTensor({3})));
  EXPECT_EQ(skip.values(), z.values());

  // d z'/d dt = W * F(z), checked against central differences
  auto Wr = oc::random_tensor(rng, {3, 1}, false);
  auto cr = oc::random_tensor(rng, {3}, false);
  auto dtp = oc::random_tensor(rng, {2, 1});
  auto fn = [&] { return oc::project(ad::euler_residual(z, f, ad::linear(dtp, Wr, cr))); };
  EXPECT_LT(oc::gradcheck({dtp}, fn), 1e-8);
  // and against the closed form
  std::mt19937_64 prng(99);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> proj(z.numel());
  for (auto& p : proj) p = nd(prng);
  for (std::size_t n = 0; n < 2; ++n) {
    double expect = 0.0;
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t k = 0; k < 16; ++k) {
        const std::size_t i = (n * 3 + ch) * 16 + k;
        expect += proj[i] * Wr.values()[ch] * f.values()[i];
      }
    EXPECT_NEAR(dtp.grad()[n], expect, 1e-10);
  }
}

TEST(Moe, GateSumsToOneAndRejectsEmptyExperts) {
  ad::ParamSet<double> ps;
  std::mt19937_64 rng(71);
  nn::Builder<double> b(ps, rng);
  nn::Gate<double> gate{b.linear("g1", 4, 6), b.linear("g2", 6, 4)};
  for (double d : {-1e3, -3.0, 0.0, 0.25, 7.0, 1e4}) {
    auto e = nn::TimeEmbedding<double>::make(b, "emb" + std::to_string(d), 2, 4);
    auto g = gate(e(DTensor({1, 1}, {d})));
    double s = 0.0;
    for (double v : g.values()) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  DTensor z({1, 2, 2, 2});
  EXPECT_THROW(ad::moe_residual<double>(z, {}, {}, DTensor({1, 0})), shockcast::ConfigError);
}

TEST(Moe, SaturatedGateMatchesSingleExpert) {
  std::mt19937_64 rng(72);
  const std::size_t K = 4;
  auto z = oc::random_tensor(rng, {2, 3, 4, 4}, false);
  std::vector<DTensor> f, a;
  for (std::size_t k = 0; k < K; ++k) {
    f.push_back(oc::random_tensor(rng, {2, 3, 4, 4}, false));
    a.push_back(oc::random_tensor(rng, {2, 3}, false));
  }
  auto gate = ad::softmax(DTensor({2, 4}, {10, -10, -10, -10, 10, -10, -10, -10}));
  auto moe = ad::moe_residual(z, f, a, gate);
  auto single = ad::euler_residual(z, f[0], a[0]);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < moe.numel(); ++k) {
    num += std::pow(moe.values()[k] - single.values()[k], 2);
    den += std::pow(single.values()[k], 2);
  }
  EXPECT_LT(std::sqrt(num / den), 1e-4);
}

namespace {

// Naive DFT of a real row, all L coefficients.
std::vector<std::complex<double>> dft(const double* x, std::size_t L) {
  std::vector<std::complex<double>> X(L);
  for (std::size_t k = 0; k < L; ++k)
    for (std::size_t t = 0; t < L; ++t)
      X[k] += x[t] * std::polar(1.0, -2.0 * M_PI * static_cast<double>(k * t) / static_cast<double>(L));
  return X;
}

}  // namespace

TEST(SpectralCondition, UnitAndZeroMultipliers) {
  std::mt19937_64 rng(81);
  auto z = oc::random_tensor(rng, {2, 3, 8, 8}, false);
  std::vector<double> ones(2 * 3 * 2, 0.0);
  for (std::size_t k = 0; k < 6; ++k) ones[2 * k] = 1.0;
  auto same = ad::spectral_condition(z, DTensor({2, 3, 2}, ones));
  EXPECT_LT(max_abs_diff(same.values(), z.values()), 1e-12);

  auto cut = ad::spectral_condition(z, DTensor({2, 3, 2}));
  for (std::size_t r = 0; r < 2 * 3 * 8; ++r) {
    auto X = dft(cut.data() + r * 8, 8);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_LT(std::abs(X[k]), 1e-12);
    auto X0 = dft(z.data() + r * 8, 8);
    for (std::size_t k = 3; k <= 4; ++k) EXPECT_LT(std::abs(X[k] - X0[k]), 1e-12);
  }
}

TEST(SpectralCondition, ParsevalAccounting) {
  std::mt19937_64 rng(82);
  const std::size_t L = 8, M = 3;
  auto z = oc::random_tensor(rng, {1, 2, 8, L}, false);
  auto xi = oc::random_tensor(rng, {1, M, 2}, false);
  auto out = ad::spectral_condition(z, xi);
  double energy = 0.0;
  for (double v : out.values()) energy += v * v;
  double expect = 0.0;
  for (std::size_t r = 0; r < 16; ++r) {
    auto X = dft(z.data() + r * L, L);
    for (std::size_t k = 0; k <= L / 2; ++k) {
      const double w = (k == 0 || k == L / 2) ? 1.0 : 2.0;
      std::complex<double> c = X[k];
      if (k < M) {
        std::complex<double> s(xi.values()[2 * k], xi.values()[2 * k + 1]);
        // a real signal cannot carry an imaginary DC component
        c = k == 0 ? std::complex<double>((X[0] * s).real(), 0.0) : X[k] * s;
      }
      expect += w * std::norm(c) / static_cast<double>(L);
    }
  }
  EXPECT_NEAR(energy, expect, 1e-10 * expect);
}

TEST(SpectralBranch, UnitMultiplierMatchesUnconditionedLayer) {
  ad::ParamSet<double> ps;
  std::mt19937_64 rng(91);
  nn::Builder<double> b(ps, rng);
  const std::size_t C = 3, M = 3;
  nn::SpectralBranch<double> br;
  br.modes = M;
  br.weight_x = b.tensor("wx", {C, C, M, 2}, ad::normal_values<double>(rng, C * C * M * 2, 0.5));
  br.weight_y = b.tensor("wy", {C, C, M, 2}, ad::normal_values<double>(rng, C * C * M * 2, 0.5));
  br.mlp1 = b.conv("m1", C, 2 * C, 1);
  br.mlp2 = b.conv("m2", 2 * C, C, 1);
  nn::SpectralBranch<double> plain = br;
  br.xi_x = b.linear("xx", 4, 2 * M, nn::Init::zero);
  br.xi_y = b.linear("xy", 4, 2 * M, nn::Init::zero);
  for (std::size_t m = 0; m < M; ++m) {
    br.xi_x->bias.values()[2 * m] = 1.0;
    br.xi_y->bias.values()[2 * m] = 1.0;
  }
  auto z = oc::random_tensor(rng, {2, C, 8, 8}, false);
  nn::StepContext<double> ctx{DTensor({2, 1}), oc::random_tensor(rng, {2, 4}, false)};
  EXPECT_EQ(br(z, ctx).values(), plain(z, ctx).values());
}
