#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace repair {

/// One image/text pair as seen through `PairDataset::pair`.
struct RawPair {
  Eigen::VectorXf image_raw;
  Eigen::VectorXf text_raw;
  std::uint8_t assumed_label = 1;
  std::uint8_t true_match = 1;
  std::uint32_t pair_id = 0;
};

/// Column i of `images` and `texts` is pair i. Raw values are stored in f32.
/// `true_match` is the hidden ground truth; only evaluation code reads it.
struct PairDataset {
  Eigen::MatrixXf images;  // d_img x N
  Eigen::MatrixXf texts;   // d_txt x N
  std::vector<std::uint8_t> true_match;
  std::vector<std::uint32_t> pair_ids;
  float noise_rate = 0.0f;
  std::uint64_t seed = 0;

  Eigen::Index size() const { return images.cols(); }
  Eigen::Index d_img() const { return images.rows(); }
  Eigen::Index d_txt() const { return texts.rows(); }
  RawPair pair(Eigen::Index i) const;

  bool operator==(const PairDataset&) const = default;
};

/// The training path's only view of a dataset: raw vectors in f64 and pair
/// ids, without any ground-truth flags.
struct TrainingSet {
  Eigen::MatrixXd images;
  Eigen::MatrixXd texts;
  std::vector<std::uint32_t> pair_ids;

  Eigen::Index size() const { return images.cols(); }
};

struct GenerateOptions {
  Eigen::Index n = 2000;
  Eigen::Index d_latent = 16;
  Eigen::Index d_img = 128;
  Eigen::Index d_txt = 128;
  double noise_rate = 0.4;
  double sigma = 1.0;
  std::uint64_t seed = 7;
};

/// Shared-latent linear model: image = A z + e1, text = B z + e2 with fixed
/// seeded mixing matrices. round(noise_rate * n) randomly chosen pairs get
/// their texts cyclically shifted among themselves and true_match = 0.
PairDataset generate(const GenerateOptions& opts);

void save(const PairDataset& ds, const std::string& path);
PairDataset load(const std::string& path);

/// Debug export, one JSON object per pair.
void write_jsonl(const PairDataset& ds, const std::string& path);

PairDataset subset(const PairDataset& ds, const std::vector<Eigen::Index>& indices);

struct HoldoutSplit {
  PairDataset train;
  PairDataset holdout;
};

/// The trailing round(fraction * N) pairs become the holdout block.
HoldoutSplit split_holdout(const PairDataset& ds, double fraction);

TrainingSet training_view(const PairDataset& ds);

}  // namespace repair
