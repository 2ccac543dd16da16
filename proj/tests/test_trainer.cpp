#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "repair/errors.hpp"
#include "repair/soft_margin.hpp"
#include "repair/trainer.hpp"

using namespace repair;

namespace {

TrainingSet small_set(std::uint64_t seed = 3, Eigen::Index n = 240) {
  GenerateOptions g;
  g.n = n;
  g.d_latent = 8;
  g.d_img = 16;
  g.d_txt = 16;
  g.seed = seed;
  return training_view(generate(g));
}

struct TrainVal {
  TrainingSet train;
  TrainingSet val;
};

TrainVal split_set(std::uint64_t seed, Eigen::Index n) {
  GenerateOptions g;
  g.n = n;
  g.d_latent = 8;
  g.d_img = 16;
  g.d_txt = 16;
  g.seed = seed;
  const auto parts = split_holdout(generate(g), 0.1);
  return {training_view(parts.train), training_view(clean_holdout(parts.holdout))};
}

TrainConfig small_config() {
  TrainConfig c;
  c.epochs = 4;
  c.warmup_epochs = 2;
  c.batch_size = 32;
  c.bank_size = 64;
  c.embed_dim = 8;
  c.collect_diagnostics = false;
  return c;
}

bool bit_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST(SoftMargin, EndpointsAndInterior) {
  EXPECT_EQ(soft_margin(0.0, 10.0, 0.2), 0.0);
  EXPECT_EQ(soft_margin(1.0, 10.0, 0.2), 0.2);
  EXPECT_NEAR(soft_margin(0.5, 10.0, 0.2), 0.2 * (std::sqrt(10.0) - 1.0) / 9.0, 1e-12);
  EXPECT_NEAR(soft_margin(0.5, 10.0, 0.2), 0.0480506, 1e-7);
  EXPECT_THROW(soft_margin(0.5, 1.0, 0.2), ParameterError);
  EXPECT_THROW(soft_margin(1.5, 10.0, 0.2), ParameterError);
  EXPECT_THROW(soft_margin(-0.1, 10.0, 0.2), ParameterError);
}

TEST(SoftMargin, MonotoneAndBelowLinear) {
  double prev = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double y = i / 100.0;
    const double v = soft_margin(y, 10.0, 0.2);
    EXPECT_GT(v, prev);
    EXPECT_LE(v, 0.2 * y + 1e-15);  // convex between the endpoints
    prev = v;
  }
}

TEST(Config, ValidationNamesField) {
  auto expect_bad = [](auto mutate, const char* field) {
    TrainConfig c;
    mutate(c);
    try {
      c.validate();
      ADD_FAILURE() << "expected rejection of " << field;
    } catch (const ParameterError& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  expect_bad([](TrainConfig& c) { c.batch_size = 5; }, "batch_size");
  expect_bad([](TrainConfig& c) { c.m = 1.0; }, "m must");
  expect_bad([](TrainConfig& c) { c.p = 1.0; }, "p must");
  expect_bad([](TrainConfig& c) { c.eta = 1.0; }, "eta");
  expect_bad([](TrainConfig& c) { c.tau = -0.1; }, "tau");
  expect_bad([](TrainConfig& c) { c.warmup_epochs = 30; }, "warmup_epochs");
  expect_bad([](TrainConfig& c) { c.k = 0; }, "k must");
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

TEST(Config, DefaultK) {
  TrainConfig c;
  c.bank_size = 512;
  EXPECT_EQ(c.effective_k(), 8);
  c.bank_size = 1024;
  EXPECT_EQ(c.effective_k(), 32);
  c.k = 3;
  EXPECT_EQ(c.effective_k(), 3);
}

TEST(Variant, RoundTrip) {
  for (Variant v : {Variant::kHard, Variant::kDrop, Variant::kRcDrop, Variant::kRepair}) {
    EXPECT_EQ(parse_variant(to_string(v)), v);
  }
  EXPECT_THROW(parse_variant("rcdrop"), ParameterError);
}

TEST(Warmup, LossMostlyDecreasesAndBanksFill) {
  const auto data = small_set(4, 400);
  auto cfg = small_config();
  cfg.warmup_epochs = 11;
  cfg.epochs = 12;
  cfg.lr = 0.02;
  auto s = init_state(cfg, data.images.rows(), data.texts.rows());
  const auto rep = warmup(s, data, cfg);
  ASSERT_EQ(rep.loss_a.size(), 11u);
  int ok = 0, total = 0;
  for (const auto* l : {&rep.loss_a, &rep.loss_b}) {
    for (std::size_t i = 1; i < l->size(); ++i, ++total) ok += (*l)[i] <= (*l)[i - 1];
  }
  EXPECT_GE(ok, 0.8 * total);
  EXPECT_GT(s.bank_a.size(), 0);
  EXPECT_GT(s.bank_b.size(), 0);
  EXPECT_LE(s.bank_a.size(), cfg.bank_size);
  EXPECT_EQ(s.epoch, 11);
}

TEST(TrainEpoch, DropSkipsNoisyTermAndRepairUsesIt) {
  const auto data = small_set();
  auto cfg = small_config();
  cfg.eta = 0.45;
  for (Variant v : {Variant::kDrop, Variant::kRcDrop, Variant::kRepair}) {
    cfg.variant = v;
    auto s = init_state(cfg, data.images.rows(), data.texts.rows());
    warmup(s, data, cfg);
    const auto rep = train_epoch(s, data, cfg);
    if (v == Variant::kRepair) {
      EXPECT_EQ(rep.replacements.size(), 2u * static_cast<std::size_t>(rep.npr_count));
    } else {
      EXPECT_EQ(rep.npr_count, 0);
      EXPECT_EQ(rep.l_noisy, 0.0);
      EXPECT_TRUE(rep.replacements.empty());
    }
    EXPECT_EQ(rep.posteriors_a.size(), data.size());
  }
}

TEST(TrainEpoch, ZeroTauMatchesRcDropBitForBit) {
  const auto data = small_set(6);
  auto cfg = small_config();
  cfg.eta = 0.45;
  cfg.tau = 0.0;

  auto record = [&](Variant v, std::vector<Eigen::MatrixXd>& out, Eigen::Index& npr) {
    cfg.variant = v;
    auto s = init_state(cfg, data.images.rows(), data.texts.rows());
    warmup(s, data, cfg);
    const auto rep = train_epoch(s, data, cfg, nullptr, [&](char, int, const Grads& g) {
      out.push_back(g.img);
      out.push_back(g.txt);
    });
    npr = rep.npr_count;
    return s;
  };
  std::vector<Eigen::MatrixXd> rc, rp;
  Eigen::Index npr_rc = 0, npr_rp = 0;
  const auto s_rc = record(Variant::kRcDrop, rc, npr_rc);
  const auto s_rp = record(Variant::kRepair, rp, npr_rp);
  EXPECT_GT(npr_rp, 0);  // the noisy branch actually ran
  ASSERT_EQ(rc.size(), rp.size());
  for (std::size_t i = 0; i < rc.size(); ++i) EXPECT_TRUE(bit_equal(rc[i], rp[i])) << "update " << i;
  EXPECT_TRUE(bit_equal(s_rc.net_a.w_img, s_rp.net_a.w_img));
  EXPECT_TRUE(bit_equal(s_rc.net_b.w_txt, s_rp.net_b.w_txt));
}

TEST(TrainEpoch, SharedInitNetworksStaySymmetric) {
  const auto data = small_set(7);
  auto cfg = small_config();
  cfg.shared_init = true;
  auto s = init_state(cfg, data.images.rows(), data.texts.rows());
  ASSERT_TRUE(s.net_a == s.net_b);
  warmup(s, data, cfg);
  const auto rep = train_epoch(s, data, cfg);
  EXPECT_TRUE(s.net_a == s.net_b);
  EXPECT_EQ(rep.posteriors_a, rep.posteriors_b);
}

TEST(Train, DeterministicAndSelectsBestEpoch) {
  const auto [data, val] = split_set(8, 300);
  auto cfg = small_config();
  const auto a = train(cfg, data, val);
  const auto b = train(cfg, data, val);
  EXPECT_TRUE(a.best_a == b.best_a);
  EXPECT_TRUE(a.final_state.net_b == b.final_state.net_b);
  ASSERT_EQ(a.epochs.size(), 2u);
  EXPECT_GE(a.best_epoch, cfg.warmup_epochs);
  double best = 0.0;
  for (const auto& e : a.epochs) best = std::max(best, e.validation->mean_r1());
  EXPECT_EQ(a.best_validation.mean_r1(), best);
}

TEST(Train, LearnsAboveChance) {
  const auto [data, val] = split_set(10, 700);
  auto cfg = small_config();
  cfg.epochs = 8;
  cfg.warmup_epochs = 3;
  const auto r = train(cfg, data, val);
  EXPECT_GT(r.best_validation.mean_r1(), 5.0 / static_cast<double>(val.size()));
}
