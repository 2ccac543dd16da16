#pragma once

// Test-only reference implementations, kept independent of the library's
// code paths.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "repair/encoders.hpp"

namespace repair::oracle {

/// Rank per the count-of-<= rule, via a sorted copy and upper_bound.
inline std::vector<double> count_le_ranks(const std::vector<double>& v) {
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    r[i] = static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), v[i]) - sorted.begin());
  }
  return r;
}

inline double textbook_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double brute_spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return textbook_pearson(count_le_ranks(a), count_le_ranks(b));
}

/// Largest relative discrepancy between an analytic gradient and central
/// differences of `loss` over every entry of `w`. Entries whose analytic
/// value is below 1e-8 in magnitude are compared absolutely and count as a
/// failure (returned as +inf) beyond 1e-7.
inline double max_fd_relative_error(Eigen::MatrixXd& w, const Eigen::MatrixXd& analytic,
                                    const std::function<double()>& loss, double h = 1e-5) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      const double saved = w(i, j);
      w(i, j) = saved + h;
      const double up = loss();
      w(i, j) = saved - h;
      const double down = loss();
      w(i, j) = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic(i, j);
      if (std::abs(a) < 1e-8) {
        if (std::abs(numeric - a) > 1e-7) return std::numeric_limits<double>::infinity();
        continue;
      }
      worst = std::max(worst, std::abs(numeric - a) / std::max(std::abs(a), std::abs(numeric)));
    }
  }
  return worst;
}

}  // namespace repair::oracle
