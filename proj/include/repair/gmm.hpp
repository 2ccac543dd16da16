#pragma once

// Clean/noisy sample selection: a two-component 1-D Gaussian mixture fitted
// by EM to per-sample warm-up losses.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "repair/dataset.hpp"
#include "repair/encoders.hpp"

namespace repair {

inline constexpr double kVarianceFloor = 1e-8;

struct GmmParams {
  std::array<double, 2> means{};
  std::array<double, 2> variances{};
  std::array<double, 2> weights{0.5, 0.5};

  /// Index of the smaller-mean ("clean") component; ties pick 0.
  int clean_component() const { return means[1] < means[0] ? 1 : 0; }
};

struct GmmFit {
  GmmParams params;
  int iterations = 0;
  double log_likelihood = 0.0;
  /// Log-likelihood of the initial params followed by one entry per EM step.
  std::vector<double> history;
};

struct GmmSplit {
  Eigen::VectorXd posteriors;
  std::vector<Eigen::Index> clean_ids;
  std::vector<Eigen::Index> noisy_ids;
  double threshold_p = 0.5;
};

/// Warm-up loss of every pair against its in-batch negatives. Pairs are
/// visited in a permutation drawn from `order_seed`; a final chunk with fewer
/// than 2 pairs is folded into the previous one.
Eigen::VectorXd per_sample_losses(const Encoders& enc, const TrainingSet& data, double alpha,
                                  Eigen::Index batch_size, std::uint64_t order_seed);

double log_likelihood(const GmmParams& params, const Eigen::VectorXd& losses);

/// EM from a deterministic init: means at the 10th and 90th percentiles,
/// equal weights, both variances equal to the sample variance. Stops when
/// the log-likelihood gains less than `tol` or after `max_iters` steps.
GmmFit fit_gmm(const Eigen::VectorXd& losses, int max_iters = 100, double tol = 1e-6);

/// Posterior of the smaller-mean component, evaluated in log space.
Eigen::VectorXd clean_posterior(const GmmParams& params, const Eigen::VectorXd& losses);

/// clean = {i : w_i > p}, noisy = the rest.
GmmSplit partition(const Eigen::VectorXd& posteriors, double p);

Eigen::VectorXd min_max_normalize(const Eigen::VectorXd& v);

struct Selection {
  GmmSplit split;
  std::optional<GmmFit> fit;  // empty when the fit was degenerate
};

/// Normalize (optionally), fit, and split. A degenerate fit marks every
/// pair clean with posterior 1.
Selection select_clean(const Eigen::VectorXd& losses, double p, bool normalize_losses, int max_iters = 100,
                       double tol = 1e-6);

}  // namespace repair
