#pragma once

// Retrieval and noise-detection metrics. This is the only module that reads
// ground-truth match flags.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <map>
#include <vector>

#include "repair/dataset.hpp"
#include "repair/encoders.hpp"

namespace repair {

enum class Direction { kImageToText, kTextToImage };

/// Fraction of queries whose true partner (the diagonal entry) ranks within
/// the top k. A competitor with equal similarity and a lower index ranks
/// ahead of the partner.
double recall_at_k(const Eigen::MatrixXd& sim, Eigen::Index k, Direction dir);

struct RetrievalReport {
  std::map<int, double> i2t;  // K -> recall
  std::map<int, double> t2i;
  double r_sum = 0.0;

  /// Mean of the two R@1 values; the model-selection score.
  double mean_r1() const { return 0.5 * (i2t.at(1) + t2i.at(1)); }
};

/// R@{1,5,10} both ways; K values above N are skipped.
RetrievalReport retrieval_report(const Eigen::MatrixXd& sim);

/// Mean of both networks' image-text similarity matrices.
Eigen::MatrixXd average_similarity(const Encoders& a, const Encoders& b, const TrainingSet& data);

struct DetectionReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double eta_used = 0.0;
  bool precision_undefined = false;
  bool recall_undefined = false;
};

/// `selected` is the predicted-mismatched set; positives are true_match == 0.
DetectionReport detection_metrics(const std::vector<Eigen::Index>& selected,
                                  const std::vector<std::uint8_t>& true_match, double eta_used = 0.0);

inline constexpr int kHistogramBins = 20;

struct SeparationReport {
  double auc = 0.5;
  std::array<int, kHistogramBins> hist_clean{};
  std::array<int, kHistogramBins> hist_noisy{};
};

/// Rank-based AUC of y* as a clean-vs-noisy score (ties count 1/2), plus
/// 20-bin histograms over [0, 1] per population.
SeparationReport soft_label_separation(const Eigen::VectorXd& y_star, const std::vector<std::uint8_t>& true_match);

/// The truly matched pairs of a holdout block.
PairDataset clean_holdout(const PairDataset& holdout);

}  // namespace repair
