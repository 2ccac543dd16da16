#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "repair/errors.hpp"
#include "repair/memory_bank.hpp"

using namespace repair;

namespace {

Eigen::VectorXd unit(Eigen::Index d, Eigen::Index axis, double sign = 1.0) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
  v(axis) = sign;
  return v;
}

Eigen::VectorXd random_unit(std::mt19937_64& rng, Eigen::Index d) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(d);
  for (auto& x : v) x = normal(rng);
  return v.normalized();
}

}  // namespace

TEST(MemoryBank, EvictsOldestWhenFull) {
  MemoryBank bank(2, 3);
  bank.push(unit(3, 0), unit(3, 0));
  bank.push(unit(3, 1), unit(3, 1));
  bank.push(unit(3, 2), unit(3, 2));
  const auto s = bank.snapshot();
  ASSERT_EQ(s.size(), 2);
  EXPECT_EQ(s.img.col(0), unit(3, 1).cast<float>());
  EXPECT_EQ(s.img.col(1), unit(3, 2).cast<float>());
  EXPECT_EQ(bank.insertion_counter(), 3u);
}

TEST(MemoryBank, SizeTracksPushes) {
  MemoryBank empty(4, 2);
  EXPECT_TRUE(empty.empty());
  EXPECT_TRUE(empty.snapshot().empty());
  MemoryBank bank(4, 2);
  bank.push(unit(2, 0), unit(2, 1));
  EXPECT_EQ(bank.size(), 1);
  std::mt19937_64 rng(1);
  MemoryBank big(64, 3);
  for (int i = 0; i < 10000; ++i) big.push(random_unit(rng, 3), random_unit(rng, 3));
  EXPECT_EQ(big.size(), 64);
}

TEST(MemoryBank, FifoOrderAfterArbitraryPushes) {
  std::mt19937_64 rng(7);
  for (int pushes : {0, 1, 5, 6, 7, 23}) {
    MemoryBank bank(6, 4);
    std::vector<Eigen::VectorXd> history;
    for (int i = 0; i < pushes; ++i) {
      history.push_back(random_unit(rng, 4));
      bank.push(history.back(), -history.back());
    }
    const auto s = bank.snapshot();
    const auto expect = std::min(pushes, 6);
    ASSERT_EQ(s.size(), expect);
    for (int j = 0; j < expect; ++j) {
      const auto& h = history[static_cast<std::size_t>(pushes - expect + j)];
      EXPECT_EQ(s.img.col(j), h.cast<float>());
      // Pairing integrity: the text column belongs to the same tuple.
      EXPECT_EQ(s.txt.col(j), (-h).cast<float>());
    }
  }
}

TEST(MemoryBank, SnapshotIsIsolatedFromLaterPushes) {
  MemoryBank bank(3, 2);
  bank.push(unit(2, 0), unit(2, 0));
  bank.push(unit(2, 1), unit(2, 1));
  const auto s = bank.snapshot();
  bank.push(unit(2, 0, -1), unit(2, 0, -1));
  bank.push(unit(2, 1, -1), unit(2, 1, -1));
  ASSERT_EQ(s.size(), 2);
  EXPECT_EQ(s.img.col(0), unit(2, 0).cast<float>());
  EXPECT_EQ(s.img.col(1), unit(2, 1).cast<float>());
}

TEST(MemoryBank, RejectsWrongDimension) {
  MemoryBank bank(3, 2);
  EXPECT_THROW(bank.push(unit(3, 0), unit(2, 0)), ParameterError);
  EXPECT_THROW(MemoryBank(0, 2), ParameterError);
}

TEST(Distances, KnownValues) {
  MemoryBank bank(4, 3);
  bank.push(unit(3, 0), unit(3, 1));
  bank.push(unit(3, 0, -1), unit(3, 2));
  const auto s = bank.snapshot();
  const auto di = distances_image(s, unit(3, 0));
  EXPECT_DOUBLE_EQ(di(0), 0.0);
  EXPECT_DOUBLE_EQ(di(1), 2.0);
  const auto dt = distances_text(s, unit(3, 0));
  EXPECT_EQ(dt.size(), di.size());
  EXPECT_NEAR(dt(0), std::sqrt(2.0), 1e-15);
}

TEST(Distances, SymmetricAndZeroOnSelf) {
  std::mt19937_64 rng(2);
  MemoryBank bank(16, 5);
  for (int i = 0; i < 16; ++i) bank.push(random_unit(rng, 5), random_unit(rng, 5));
  const auto s = bank.snapshot();
  for (Eigen::Index j = 0; j < s.size(); ++j) {
    const Eigen::VectorXd q = s.img.col(j).cast<double>();
    const auto d = distances_image(s, q);
    EXPECT_EQ(d(j), 0.0);
    for (Eigen::Index k = 0; k < s.size(); ++k) {
      const auto back = distances_image(s, s.img.col(k).cast<double>());
      EXPECT_NEAR(d(k), back(j), 1e-15);
    }
  }
}

TEST(Distances, EmptyBankIsAnError) {
  MemoryBank bank(4, 3);
  EXPECT_THROW(distances_image(bank.snapshot(), unit(3, 0)), EmptyBankError);
  EXPECT_THROW(distances_text(bank.snapshot(), unit(3, 0)), EmptyBankError);
}

TEST(MemoryBank, DumpRoundTrip) {
  std::mt19937_64 rng(3);
  MemoryBank bank(5, 4);
  for (int i = 0; i < 7; ++i) bank.push(random_unit(rng, 4), random_unit(rng, 4));
  const auto path = (std::filesystem::temp_directory_path() / "repair_test_bank.bin").string();
  save_bank(bank, path);
  const auto back = load_bank(path);
  EXPECT_EQ(back.img, bank.snapshot().img);
  EXPECT_EQ(back.txt, bank.snapshot().txt);
  std::filesystem::remove(path);
}
