#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "repair/errors.hpp"
#include "repair/gmm.hpp"

using namespace repair;

namespace {

struct Sample {
  Eigen::VectorXd losses;
  std::vector<int> component;  // 0 = low-mean generator
};

/// 70% N(0.2, 0.05^2), 30% N(1.0, 0.1^2).
Sample bimodal(std::uint64_t seed, Eigen::Index n = 10000) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution pick_high(0.3);
  std::normal_distribution<double> low(0.2, 0.05), high(1.0, 0.1);
  Sample s{Eigen::VectorXd(n), {}};
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool h = pick_high(rng);
    s.losses(i) = h ? high(rng) : low(rng);
    s.component.push_back(h ? 1 : 0);
  }
  return s;
}

}  // namespace

TEST(FitGmm, RecoversKnownMixture) {
  const auto s = bimodal(1);
  const auto fit = fit_gmm(s.losses, 200, 1e-8);
  const int k = fit.params.clean_component();
  EXPECT_NEAR(fit.params.means[k], 0.2, 0.05);
  EXPECT_NEAR(fit.params.means[1 - k], 1.0, 0.05);
  EXPECT_NEAR(fit.params.weights[k], 0.7, 0.02);

  const auto split = partition(clean_posterior(fit.params, s.losses), 0.5);
  std::size_t agree = 0;
  std::vector<bool> clean(s.component.size(), false);
  for (auto i : split.clean_ids) clean[static_cast<std::size_t>(i)] = true;
  for (std::size_t i = 0; i < clean.size(); ++i) agree += clean[i] == (s.component[i] == 0);
  EXPECT_GE(static_cast<double>(agree) / clean.size(), 0.99);
}

TEST(FitGmm, TwoPointMasses) {
  Eigen::VectorXd l(1000);
  l.head(500).setConstant(0.1);
  l.tail(500).setConstant(0.9);
  const auto fit = fit_gmm(l, 200, 1e-10);
  const int k = fit.params.clean_component();
  EXPECT_NEAR(fit.params.means[k], 0.1, 1e-6);
  EXPECT_NEAR(fit.params.means[1 - k], 0.9, 1e-6);
  EXPECT_NEAR(fit.params.weights[0], 0.5, 0.02);
  EXPECT_GE(fit.params.variances[0], kVarianceFloor);
}

TEST(FitGmm, ZeroIterationsReturnsInit) {
  Eigen::VectorXd l(11);
  for (int i = 0; i < 11; ++i) l(i) = i;  // 10th pct = 1, 90th pct = 9
  const auto fit = fit_gmm(l, 0);
  EXPECT_EQ(fit.iterations, 0);
  EXPECT_DOUBLE_EQ(fit.params.means[0], 1.0);
  EXPECT_DOUBLE_EQ(fit.params.means[1], 9.0);
  EXPECT_DOUBLE_EQ(fit.params.variances[0], 10.0);
  EXPECT_DOUBLE_EQ(fit.params.variances[1], 10.0);
  EXPECT_DOUBLE_EQ(fit.params.weights[0], 0.5);
}

TEST(FitGmm, LogLikelihoodNeverDecreases) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto s = bimodal(seed, 2000);
    const auto fit = fit_gmm(s.losses, 500, 0.0);
    for (std::size_t i = 1; i < fit.history.size(); ++i) {
      EXPECT_GE(fit.history[i], fit.history[i - 1] - 1e-10) << "seed " << seed << " step " << i;
    }
  }
}

TEST(FitGmm, DeterministicAndDegenerate) {
  const auto s = bimodal(4, 500);
  const auto a = fit_gmm(s.losses);
  const auto b = fit_gmm(s.losses);
  EXPECT_EQ(a.params.means, b.params.means);
  EXPECT_EQ(a.history, b.history);
  EXPECT_THROW(fit_gmm(Eigen::VectorXd::Constant(10, 0.3)), DegenerateFitError);
  const auto sel = select_clean(Eigen::VectorXd::Constant(10, 0.3), 0.5, true);
  EXPECT_FALSE(sel.fit.has_value());
  EXPECT_EQ(sel.split.clean_ids.size(), 10u);
}

TEST(Posterior, WellSeparatedCleanMean) {
  const auto s = bimodal(1);
  const auto fit = fit_gmm(s.losses, 200, 1e-8);
  const int k = fit.params.clean_component();
  Eigen::VectorXd at_mean(1);
  at_mean(0) = fit.params.means[k];
  EXPECT_GT(clean_posterior(fit.params, at_mean)(0), 0.99);
}

TEST(Posterior, SymmetricParamsGiveOneHalf) {
  GmmParams p{{0.5, 0.5}, {0.1, 0.1}, {0.5, 0.5}};
  Eigen::VectorXd l(4);
  l << -3.0, 0.2, 0.5, 40.0;
  const auto w = clean_posterior(p, l);
  for (auto v : w) EXPECT_NEAR(v, 0.5, 1e-15);
}

TEST(Posterior, ComplementsSumToOneAndNeverNaN) {
  GmmParams p{{0.2, 0.9}, {0.01, 0.04}, {0.6, 0.4}};
  GmmParams swapped{{0.9, 0.2}, {0.04, 0.01}, {0.4, 0.6}};
  Eigen::VectorXd l(6);
  l << -1e3, 0.0, 0.3, 0.6, 1.0, 1e4;
  const auto w = clean_posterior(p, l);
  for (Eigen::Index i = 0; i < l.size(); ++i) {
    EXPECT_FALSE(std::isnan(w(i)));
    EXPECT_GE(w(i), 0.0);
    EXPECT_LE(w(i), 1.0);
  }
  EXPECT_EQ(clean_posterior(swapped, l), w);  // component order is irrelevant
  const double a = std::log(0.6) - 0.5 * std::log(2 * M_PI * 0.01) - 0.5 * (0.3 - 0.2) * (0.3 - 0.2) / 0.01;
  const double b = std::log(0.4) - 0.5 * std::log(2 * M_PI * 0.04) - 0.5 * (0.3 - 0.9) * (0.3 - 0.9) / 0.04;
  const double other = std::exp(b) / (std::exp(a) + std::exp(b));
  EXPECT_NEAR(w(2) + other, 1.0, 1e-12);
}

TEST(Posterior, NonIncreasingBetweenMeansWithEqualVariances) {
  GmmParams p{{0.2, 0.8}, {0.02, 0.02}, {0.3, 0.7}};
  Eigen::VectorXd l = Eigen::VectorXd::LinSpaced(200, 0.2, 0.8);
  const auto w = clean_posterior(p, l);
  for (Eigen::Index i = 1; i < w.size(); ++i) EXPECT_LE(w(i), w(i - 1));
}

TEST(Partition, StrictThreshold) {
  Eigen::Vector3d w(0.9, 0.5, 0.1);
  const auto s = partition(w, 0.5);
  EXPECT_EQ(s.clean_ids, (std::vector<Eigen::Index>{0}));
  EXPECT_EQ(s.noisy_ids, (std::vector<Eigen::Index>{1, 2}));
  EXPECT_TRUE(partition(Eigen::Vector3d(0.9, 0.8, 0.7), 0.5).noisy_ids.empty());
  EXPECT_THROW(partition(w, 1.0), ParameterError);
  EXPECT_THROW(partition(w, 0.0), ParameterError);
}

TEST(PerSampleLosses, ContractAndHandValues) {
  TrainingSet data;
  data.images = Eigen::MatrixXd::Ones(3, 9);
  data.texts = Eigen::MatrixXd::Ones(3, 9);
  data.pair_ids.resize(9);
  Encoders enc{Eigen::MatrixXd::Identity(3, 3), Eigen::MatrixXd::Identity(3, 3)};
  const auto l = per_sample_losses(enc, data, 0.2, 4, 1);
  ASSERT_EQ(l.size(), 9);
  for (auto v : l) EXPECT_NEAR(v, 0.4, 1e-15);

  // Orthonormal pairs: positives 1, negatives 0 -> hinge alpha - 1 < 0.
  data.images = Eigen::MatrixXd::Identity(4, 4);
  data.texts = Eigen::MatrixXd::Identity(4, 4);
  Encoders id4{Eigen::MatrixXd::Identity(4, 4), Eigen::MatrixXd::Identity(4, 4)};
  EXPECT_TRUE(per_sample_losses(id4, data, 0.2, 2, 3).isZero());
  EXPECT_THROW(per_sample_losses(id4, data, 0.2, 1, 3), ParameterError);
}

TEST(MinMax, MapsOntoUnitInterval) {
  Eigen::Vector3d v(2.0, 4.0, 3.0);
  EXPECT_EQ(min_max_normalize(v), Eigen::Vector3d(0.0, 1.0, 0.5));
  EXPECT_TRUE(min_max_normalize(Eigen::Vector3d::Constant(2.0)).isZero());
}
