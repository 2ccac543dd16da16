#pragma once

// Soft correspondence labels from the rank correlation between a pair's
// image-to-bank and text-to-bank distance profiles.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "repair/encoders.hpp"
#include "repair/errors.hpp"
#include "repair/memory_bank.hpp"

namespace repair {

/// R(s_i) = |{j : s_j <= s_i}|. Tied values all receive the largest rank of
/// their group.
template <typename Derived>
Eigen::VectorXi ranks(const Eigen::DenseBase<Derived>& values) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = values.size();
  std::vector<std::pair<Scalar, Eigen::Index>> sorted(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) sorted[static_cast<std::size_t>(i)] = {values(i), i};
  std::sort(sorted.begin(), sorted.end());
  Eigen::VectorXi r(n);
  std::size_t start = 0;
  while (start < sorted.size()) {
    std::size_t end = start + 1;
    while (end < sorted.size() && !(sorted[start].first < sorted[end].first)) ++end;
    for (std::size_t k = start; k < end; ++k) r(sorted[k].second) = static_cast<int>(end);
    start = end;
  }
  return r;
}

/// Pearson correlation of two equal-length rank vectors, in f64.
/// Throws UndefinedCorrelation when either vector is constant.
inline double pearson_of_ranks(const Eigen::VectorXi& a, const Eigen::VectorXi& b) {
  const Eigen::VectorXd x = a.cast<double>().array() - a.cast<double>().mean();
  const Eigen::VectorXd y = b.cast<double>().array() - b.cast<double>().mean();
  const double sxx = x.squaredNorm();
  const double syy = y.squaredNorm();
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelation("constant rank vector");
  return std::clamp(x.dot(y) / std::sqrt(sxx * syy), -1.0, 1.0);
}

template <typename DerivedA, typename DerivedB>
double spearman(const Eigen::DenseBase<DerivedA>& img_dists, const Eigen::DenseBase<DerivedB>& txt_dists) {
  if (img_dists.size() != txt_dists.size()) throw ParameterError("distance profiles differ in length");
  if (img_dists.size() < 2) throw ParameterError("spearman needs at least 2 entries");
  return pearson_of_ranks(ranks(img_dists), ranks(txt_dists));
}

/// Textbook Spearman with fractional (average) ranks; used only to log how
/// far the max-rank tie rule drifts from it.
double spearman_average_ranks(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct SoftLabelSet {
  Eigen::VectorXd corre;
  Eigen::VectorXd y_star;
  double gamma = 0.0;  // mean of the top 10% of corre
  double mu = 0.0;     // mean of the bottom 1% of corre
  bool degenerate = false;
};

/// Maps one correlation onto [0, 1] with the gamma/mu window. A degenerate
/// window labels 1 exactly the positive correlations at or above gamma.
double label_from_anchors(double corre, double gamma, double mu, bool degenerate);
/// True when gamma - max(0, mu) is too narrow to interpolate.
bool anchors_degenerate(double gamma, double mu);

/// Computes the anchors over `corre` (ceil percentile counts, at least one
/// element) and labels every entry. Requires at least 10 values.
SoftLabelSet normalize_labels(const Eigen::VectorXd& corre);

/// Correlation of each column pair against the bank; an undefined
/// correlation maps to 0. Requires bank size >= 2.
Eigen::VectorXd correlations(const BankSnapshot& bank, const Eigen::MatrixXd& img_unit, const Eigen::MatrixXd& txt_unit);

/// Embeds a raw batch, correlates it against the bank and normalizes.
SoftLabelSet soft_labels_for_batch(const BankSnapshot& bank, const Encoders& enc, const Eigen::MatrixXd& images,
                                   const Eigen::MatrixXd& texts);

}  // namespace repair
