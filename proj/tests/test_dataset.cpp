#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "repair/binary_io.hpp"
#include "repair/dataset.hpp"
#include "repair/errors.hpp"

using namespace repair;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("repair_test_" + name)).string();
}

GenerateOptions opts(Eigen::Index n, Eigen::Index dl, Eigen::Index di, Eigen::Index dt, double rate, double sigma,
                     std::uint64_t seed) {
  GenerateOptions o;
  o.n = n;
  o.d_latent = dl;
  o.d_img = di;
  o.d_txt = dt;
  o.noise_rate = rate;
  o.sigma = sigma;
  o.seed = seed;
  return o;
}

long count_noisy(const PairDataset& ds) { return std::count(ds.true_match.begin(), ds.true_match.end(), 0); }

}  // namespace

TEST(Dataset, ZeroNoiseRateKeepsEveryPairMatched) {
  const auto ds = generate(opts(100, 8, 16, 16, 0.0, 0.1, 7));
  EXPECT_EQ(count_noisy(ds), 0);
  EXPECT_EQ(ds.size(), 100);
  EXPECT_EQ(ds.d_img(), 16);
  EXPECT_EQ(ds.d_txt(), 16);
}

TEST(Dataset, NoiseCountIsExact) {
  const auto ds = generate(opts(100, 8, 16, 16, 0.4, 0.1, 7));
  EXPECT_EQ(count_noisy(ds), 40);
  for (double rate : {0.05, 0.123, 0.5, 0.77}) {
    const auto d = generate(opts(37, 4, 8, 8, rate, 0.1, 3));
    EXPECT_EQ(count_noisy(d), std::llround(rate * 37)) << rate;
  }
}

TEST(Dataset, SeededGenerationIsDeterministic) {
  const auto a = generate(opts(10, 4, 8, 8, 0.5, 0.0, 1));
  const auto b = generate(opts(10, 4, 8, 8, 0.5, 0.0, 1));
  EXPECT_TRUE(a == b);
  const auto c = generate(opts(10, 4, 8, 8, 0.5, 0.0, 2));
  EXPECT_FALSE(a == c);
}

TEST(Dataset, NoisyTextsAreDeranged) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto clean = generate(opts(60, 4, 8, 8, 0.0, 0.2, seed));
    const auto noisy = generate(opts(60, 4, 8, 8, 0.3, 0.2, seed));
    ASSERT_EQ(clean.images, noisy.images);
    for (Eigen::Index i = 0; i < noisy.size(); ++i) {
      if (noisy.true_match[i]) {
        EXPECT_EQ(noisy.texts.col(i), clean.texts.col(i));
      } else {
        EXPECT_NE(noisy.texts.col(i), clean.texts.col(i)) << "fixed point at " << i;
      }
    }
  }
}

TEST(Dataset, SingleNoisyPairStillGetsForeignText) {
  const auto clean = generate(opts(10, 2, 4, 4, 0.0, 0.1, 5));
  const auto noisy = generate(opts(10, 2, 4, 4, 0.1, 0.1, 5));
  ASSERT_EQ(count_noisy(noisy), 1);
  for (Eigen::Index i = 0; i < 10; ++i) {
    if (!noisy.true_match[i]) EXPECT_NE(noisy.texts.col(i), clean.texts.col(i));
  }
}

TEST(Dataset, InvalidParametersAreRejected) {
  EXPECT_THROW(generate(opts(100, 8, 16, 16, 1.0, 0.1, 7)), ParameterError);
  EXPECT_THROW(generate(opts(100, 8, 16, 16, -0.1, 0.1, 7)), ParameterError);
  EXPECT_THROW(generate(opts(100, 17, 16, 32, 0.1, 0.1, 7)), ParameterError);
  EXPECT_THROW(generate(opts(100, 8, 16, 16, 0.1, -1.0, 7)), ParameterError);
  EXPECT_THROW(generate(opts(1, 1, 2, 2, 0.0, 0.1, 7)), ParameterError);
}

TEST(DatasetIo, RoundTripIsExact) {
  const auto ds = generate(opts(3, 2, 5, 4, 0.34, 0.3, 11));
  const auto path = temp_path("roundtrip.bin");
  save(ds, path);
  EXPECT_EQ(std::filesystem::file_size(path), io::kHeaderBytes + 3 * (5 + 4) * 4 + 3 * 4 + 3);
  const auto back = load(path);
  EXPECT_TRUE(back == ds);
  std::filesystem::remove(path);
}

TEST(DatasetIo, SameDatasetSameBytes) {
  const auto p1 = temp_path("bytes1.bin");
  const auto p2 = temp_path("bytes2.bin");
  save(generate(opts(50, 4, 8, 8, 0.4, 0.1, 9)), p1);
  save(generate(opts(50, 4, 8, 8, 0.4, 0.1, 9)), p2);
  EXPECT_EQ(io::file_fingerprint(p1), io::file_fingerprint(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST(DatasetIo, TruncatedPayloadIsReported) {
  const auto ds = generate(opts(5, 2, 4, 4, 0.0, 0.1, 1));
  const auto path = temp_path("trunc.bin");
  save(ds, path);
  // Keep the header and exactly 4 of the 5 records.
  std::filesystem::resize_file(path, io::kHeaderBytes + 4 * (4 + 4) * 4);
  try {
    load(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("record 4"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}

TEST(DatasetIo, BadMagicIsReported) {
  const auto path = temp_path("magic.bin");
  save(generate(opts(5, 2, 4, 4, 0.0, 0.1, 1)), path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  try {
    load(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST(DatasetIo, ZeroDimensionHeaderIsReported) {
  const auto path = temp_path("dims.bin");
  save(generate(opts(5, 2, 4, 4, 0.0, 0.1, 1)), path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(12);
    const char zero[4] = {0, 0, 0, 0};
    f.write(zero, 4);
  }
  EXPECT_THROW(load(path), FormatError);
  std::filesystem::remove(path);
}

TEST(Dataset, HoldoutSplitKeepsIdsAndFlags) {
  const auto ds = generate(opts(100, 4, 8, 8, 0.4, 0.1, 3));
  const auto split = split_holdout(ds, 0.1);
  EXPECT_EQ(split.train.size(), 90);
  EXPECT_EQ(split.holdout.size(), 10);
  EXPECT_EQ(split.holdout.pair_ids.front(), 90u);
  EXPECT_EQ(count_noisy(split.train) + count_noisy(split.holdout), 40);
  EXPECT_EQ(split.holdout.texts.col(3), ds.texts.col(93));
}

TEST(Dataset, TrainingViewCarriesNoFlags) {
  const auto ds = generate(opts(20, 4, 8, 8, 0.4, 0.1, 3));
  const TrainingSet view = training_view(ds);
  EXPECT_EQ(view.size(), 20);
  EXPECT_TRUE(view.images.isApprox(ds.images.cast<double>()));
  EXPECT_EQ(view.pair_ids, ds.pair_ids);
}

TEST(Dataset, JsonLinesExportHasOneObjectPerPair) {
  const auto ds = generate(opts(7, 2, 3, 3, 0.3, 0.1, 3));
  const auto path = temp_path("pairs.jsonl");
  write_jsonl(ds, path);
  std::ifstream in(path);
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, 7);
  std::filesystem::remove(path);
}
