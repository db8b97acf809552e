#include "curricula/ranker.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"

using namespace curricula;

namespace {

std::vector<double> random_vector(std::mt19937_64& gen, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = nd(gen);
  return v;
}

RankerModel random_model(std::mt19937_64& gen, std::size_t in, std::size_t hidden) {
  RankerModel m(in, hidden, 0);
  auto t = random_vector(gen, m.theta().size(), 0.7);
  std::copy(t.begin(), t.end(), m.theta().begin());
  return m;
}

// Forward pass written out independently of RankerModel's layout helpers.
double reference_score(const std::vector<double>& theta, std::size_t in, std::size_t hidden,
                       const std::vector<double>& x) {
  double out = theta[(in + 1) * hidden + hidden];
  for (std::size_t j = 0; j < hidden; ++j) {
    double z = theta[in * hidden + j];
    for (std::size_t k = 0; k < in; ++k) z += theta[j * in + k] * x[k];
    out += theta[(in + 1) * hidden + j] * std::tanh(z);
  }
  return out;
}

// Relative error of an analytic gradient against central differences,
// ||analytic - numeric|| / max(||analytic||, ||numeric||) in the Euclidean norm.
template <typename LossFn>
double fd_relative_error(RankerModel model, const std::vector<double>& analytic, LossFn loss) {
  const double h = 1e-5;
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double orig = model.theta()[i];
    model.theta()[i] = orig + h;
    const double up = loss(model);
    model.theta()[i] = orig - h;
    const double down = loss(model);
    model.theta()[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
    a2 += analytic[i] * analytic[i];
    n2 += numeric * numeric;
  }
  const double denom = std::sqrt(std::max(a2, n2));
  return denom == 0.0 ? 0.0 : std::sqrt(diff2) / denom;
}

}  // namespace

TEST(Features, HandComputedFixture) {
  std::map<std::string, Document> docs = {{"d1", {"d1", "apple banana kiwi apple"}},
                                          {"d2", {"d2", "kiwi"}},
                                          {"d3", {"d3", "banana"}}};
  auto index = build_index(docs, AnalyzerConfig{false, false});
  Featurizer f(index, BM25Params{}, {{"apple", 1}, {"kiwi", 1}});
  auto v = f("apple banana cherry", "d1");
  ASSERT_EQ(v.size(), static_cast<std::size_t>(kFeatureCount));

  // N = 3, avglen = 2, len(d1) = 4; df(apple) = 1, df(banana) = 2, cherry unseen.
  const double idf_apple = std::log(1.0 + 2.5 / 1.5);
  const double idf_banana = std::log(1.0 + 1.5 / 2.5);
  const double idf_cherry = std::log(1.0 + 3.5 / 0.5);
  const double norm = 0.9 * (1.0 - 0.4 + 0.4 * 4.0 / 2.0);
  const double bm25 = idf_apple * 2.0 * 1.9 / (2.0 + norm) + idf_banana * 1.9 / (1.0 + norm);
  EXPECT_NEAR(v[kBm25Score], bm25, 1e-12);
  EXPECT_NEAR(v[kQueryCoverage], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(v[kIdfWeightedOverlap], (idf_apple + idf_banana) / (idf_apple + idf_banana + idf_cherry), 1e-12);
  EXPECT_NEAR(v[kLogDocLength], std::log(5.0), 1e-15);
  EXPECT_EQ(v[kBigramMatches], 1.0);         // "apple banana" once
  EXPECT_NEAR(v[kTopicalMatch], 1.0 / 3.0, 1e-15);  // apple's cluster-mate kiwi appears
}

TEST(Features, FullAndZeroOverlap) {
  std::map<std::string, Document> docs = {{"d1", {"d1", "x y z"}}, {"d2", {"d2", "p q"}}};
  auto index = build_index(docs, AnalyzerConfig{false, false});
  Featurizer f(index, BM25Params{});
  EXPECT_EQ(f("x y", "d1")[kQueryCoverage], 1.0);
  auto none = f("x y", "d2");
  EXPECT_EQ(none[kBm25Score], 0.0);
  EXPECT_EQ(none[kQueryCoverage], 0.0);
  EXPECT_EQ(none[kIdfWeightedOverlap], 0.0);
  EXPECT_EQ(none[kTopicalMatch], 0.0);
  EXPECT_THROW(f("x", "missing"), DataError);
}

TEST(Standardizer, ZeroMeanUnitVariance) {
  std::vector<FeatureVector> rows = {{1, 5}, {3, 5}, {5, 5}};
  auto s = Standardizer::fit(rows);
  EXPECT_DOUBLE_EQ(s.mean[0], 3.0);
  EXPECT_DOUBLE_EQ(s.scale[0], std::sqrt(8.0 / 3.0));
  EXPECT_EQ(s.scale[1], 1.0);
  FeatureVector r{5, 5};
  s.apply(r);
  EXPECT_DOUBLE_EQ(r[0], 2.0 / std::sqrt(8.0 / 3.0));
  EXPECT_EQ(r[1], 0.0);
  FeatureVector bad{1};
  EXPECT_THROW(s.apply(bad), InvalidArgument);
}

TEST(Model, ParameterCountAndInitRange) {
  EXPECT_EQ(RankerModel::parameter_count(6, 16), 7u * 16u + 17u);
  auto m = RankerModel::initialized(6, 16, 42);
  const double a1 = 1.0 / std::sqrt(6.0), a2 = 1.0 / std::sqrt(16.0);
  for (std::size_t i = 0; i < m.theta().size(); ++i) {
    const double a = i < 6 * 16 + 16 ? a1 : a2;
    EXPECT_LE(std::fabs(m.theta()[i]), a);
  }
  EXPECT_TRUE(RankerModel::initialized(6, 16, 42) == m);
  EXPECT_FALSE(RankerModel::initialized(6, 16, 43) == m);
}

TEST(Model, ZeroAndBiasOnlyParameters) {
  RankerModel m(3, 4);
  EXPECT_EQ(m.score(std::vector<double>{1, -2, 3}), 0.0);
  m.theta().back() = 2.5;
  EXPECT_EQ(m.score(std::vector<double>{9, 9, 9}), 2.5);
  EXPECT_THROW(m.score(std::vector<double>{1, 2}), InvalidArgument);
}

TEST(Model, MatchesReferenceForwardPass) {
  std::mt19937_64 gen(1);
  for (int t = 0; t < 100; ++t) {
    const std::size_t in = 1 + gen() % 8, hidden = 1 + gen() % 20;
    auto m = random_model(gen, in, hidden);
    auto x = random_vector(gen, in);
    std::vector<double> theta(m.theta().begin(), m.theta().end());
    EXPECT_NEAR(m.score(x), reference_score(theta, in, hidden, x), 1e-12);
  }
}

TEST(Loss, PointwiseBasics) {
  RankerModel m(2, 3);
  auto at_min = pointwise_loss_and_grad(m, std::vector<double>{0.3, 0.1}, 0.0);
  EXPECT_EQ(at_min.loss, 0.0);
  for (double g : at_min.grad) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(pointwise_loss_and_grad(m, std::vector<double>{0.3, 0.1}, 1.0).loss, 1.0);
}

TEST(Loss, PairwiseBasics) {
  EXPECT_NEAR(pairwise_loss_value(0.7, 0.7), std::log(2.0), 1e-15);
  EXPECT_LT(pairwise_loss_value(50.0, 0.0), 1e-20);
  EXPECT_GT(pairwise_loss_value(50.0, 0.0), 0.0);
  EXPECT_NEAR(pairwise_loss_value(0.0, 50.0), 50.0, 1e-12);
  EXPECT_TRUE(std::isfinite(pairwise_loss_value(-800.0, 800.0)));
}

TEST(Loss, PairwiseProbabilitiesSumToOne) {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> nd(0.0, 10.0);
  for (int t = 0; t < 1000; ++t) {
    const double a = nd(gen), b = nd(gen);
    EXPECT_NEAR(pairwise_probability(a, b) + pairwise_probability(b, a), 1.0, 1e-15);
    EXPECT_NEAR(std::exp(-pairwise_loss_value(a, b)), pairwise_probability(a, b), 1e-12);
  }
}

TEST(Loss, PointwiseGradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(3);
  for (int t = 0; t < 100; ++t) {
    auto m = random_model(gen, 6, 16);
    auto x = random_vector(gen, 6);
    const double s = static_cast<double>(gen() % 3);
    auto lg = pointwise_loss_and_grad(m, x, s);
    const double err = fd_relative_error(m, lg.grad, [&](const RankerModel& mm) {
      const double r = mm.score(x);
      return (s - r) * (s - r);
    });
    EXPECT_LT(err, 1e-4);
  }
}

TEST(Loss, PairwiseGradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(4);
  for (int t = 0; t < 100; ++t) {
    auto m = random_model(gen, 6, 16);
    auto pos = random_vector(gen, 6), neg = random_vector(gen, 6);
    auto lg = pairwise_loss_and_grad(m, pos, neg);
    const double err = fd_relative_error(m, lg.grad, [&](const RankerModel& mm) {
      const double a = mm.score(pos), b = mm.score(neg);
      return -std::log(std::exp(a) / (std::exp(a) + std::exp(b)));
    });
    EXPECT_LT(err, 1e-4);
  }
}

TEST(Loss, AccumulateScalesGradient) {
  std::mt19937_64 gen(5);
  auto m = random_model(gen, 4, 5);
  auto x = random_vector(gen, 4);
  auto full = pointwise_loss_and_grad(m, x, 1.0);
  std::vector<double> half(m.theta().size(), 0.0);
  const double loss = pointwise_loss_accumulate(m, x, 1.0, 0.5, half);
  EXPECT_EQ(loss, full.loss);
  for (std::size_t i = 0; i < half.size(); ++i) EXPECT_NEAR(half[i], 0.5 * full.grad[i], 1e-15);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  std::mt19937_64 gen(6);
  auto m = random_model(gen, 3, 4);
  const auto before = m;
  AdamOptimizer opt(m.theta().size());
  opt.step(m, std::vector<double>(m.theta().size(), 0.0));
  EXPECT_TRUE(m == before);
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
  RankerModel m(1, 1);
  AdamOptimizer opt(m.theta().size(), AdamConfig{0.001});
  std::vector<double> g(m.theta().size(), 0.0);
  g[0] = 1.0;
  opt.step(m, g);
  // m_hat = 1, v_hat = 1 at t = 1, so the update is lr / (1 + eps).
  EXPECT_NEAR(m.theta()[0], -0.001 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Adam, NonFiniteGradientIsRejected) {
  RankerModel m(1, 1);
  AdamOptimizer opt(m.theta().size());
  std::vector<double> g(m.theta().size(), 0.0);
  g[1] = std::nan("");
  EXPECT_THROW(opt.step(m, g), NumericalError);
  EXPECT_THROW(opt.step(m, std::vector<double>(2, 0.0)), InvalidArgument);
}

TEST(Adam, DeterministicAcrossIdenticalRuns) {
  auto run = [] {
    std::mt19937_64 gen(7);
    auto m = RankerModel::initialized(6, 16, 99);
    AdamOptimizer opt(m.theta().size());
    for (int s = 0; s < 50; ++s) {
      auto x = random_vector(gen, 6);
      opt.step(m, pointwise_loss_and_grad(m, x, 1.0).grad);
    }
    return std::make_pair(m, opt);
  };
  auto a = run(), b = run();
  EXPECT_TRUE(a.first == b.first);
  EXPECT_TRUE(a.second == b.second);
}

TEST(Checkpoint, SaveLoadRoundTrip) {
  curricula::testing::TempDir tmp;
  auto m = RankerModel::initialized(6, 16, 1234);
  m.save(tmp / "m.bin");
  auto back = RankerModel::load(tmp / "m.bin");
  EXPECT_TRUE(back == m);
  EXPECT_EQ(back.seed(), 1234u);
  EXPECT_EQ(std::filesystem::file_size(tmp / "m.bin"), 8u + 4u + 4u + 4u + 8u + 8u + 8u * m.theta().size());
  curricula::testing::write_file(tmp / "bad.bin", "CLRANKERxxxx");
  EXPECT_THROW(RankerModel::load(tmp / "bad.bin"), DataError);
}
