#include "repair/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "repair/errors.hpp"

namespace repair {
namespace {

double log_normal(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

double log_sum_exp(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

/// Linear-interpolated percentile of sorted data, q in [0, 1].
double percentile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

Eigen::VectorXd per_sample_losses(const Encoders& enc, const TrainingSet& data, double alpha,
                                  Eigen::Index batch_size, std::uint64_t order_seed) {
  if (batch_size < 2) throw ParameterError("batch_size must be at least 2");
  const Eigen::Index n = data.size();
  if (n < 2) throw InsufficientNegativesError("per-sample losses need at least 2 pairs");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(order_seed);
  std::shuffle(order.begin(), order.end(), rng);

  Eigen::VectorXd losses(n);
  for (Eigen::Index start = 0; start < n;) {
    Eigen::Index end = std::min(n, start + batch_size);
    if (n - end < 2) end = n;
    const std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + end);
    const Eigen::MatrixXd images = data.images(Eigen::all, idx);
    const Eigen::MatrixXd texts = data.texts(Eigen::all, idx);
    const auto img = embed(enc.w_img, images);
    const auto txt = embed(enc.w_txt, texts);
    const Eigen::MatrixXd sim = img.unit.transpose() * txt.unit;
    const auto l = warmup_from_similarity(sim, alpha);
    for (std::size_t k = 0; k < idx.size(); ++k) losses(idx[k]) = l.per_pair(static_cast<Eigen::Index>(k));
    start = end;
  }
  return losses;
}

double log_likelihood(const GmmParams& p, const Eigen::VectorXd& losses) {
  double ll = 0.0;
  for (double l : losses) {
    ll += log_sum_exp(std::log(p.weights[0]) + log_normal(l, p.means[0], p.variances[0]),
                      std::log(p.weights[1]) + log_normal(l, p.means[1], p.variances[1]));
  }
  return ll;
}

GmmFit fit_gmm(const Eigen::VectorXd& losses, int max_iters, double tol) {
  const Eigen::Index n = losses.size();
  if (n < 2 || losses.maxCoeff() == losses.minCoeff()) {
    throw DegenerateFitError("GMM fit needs at least 2 distinct loss values");
  }
  std::vector<double> sorted(losses.data(), losses.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const double var0 = std::max((losses.array() - losses.mean()).square().mean(), kVarianceFloor);

  GmmFit fit;
  fit.params.means = {percentile(sorted, 0.10), percentile(sorted, 0.90)};
  fit.params.variances = {var0, var0};
  fit.params.weights = {0.5, 0.5};
  fit.log_likelihood = log_likelihood(fit.params, losses);
  fit.history.push_back(fit.log_likelihood);

  Eigen::VectorXd resp0(n);
  for (int it = 0; it < max_iters; ++it) {
    const GmmParams& p = fit.params;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double a = std::log(p.weights[0]) + log_normal(losses(i), p.means[0], p.variances[0]);
      const double b = std::log(p.weights[1]) + log_normal(losses(i), p.means[1], p.variances[1]);
      resp0(i) = std::exp(a - log_sum_exp(a, b));
    }
    const Eigen::VectorXd resp1 = 1.0 - resp0.array();
    GmmParams next;
    for (int t = 0; t < 2; ++t) {
      const Eigen::VectorXd& r = t == 0 ? resp0 : resp1;
      const double nk = std::max(r.sum(), 1e-300);
      next.weights[t] = nk / static_cast<double>(n);
      next.means[t] = r.dot(losses) / nk;
      next.variances[t] =
          std::max(r.dot((losses.array() - next.means[t]).square().matrix()) / nk, kVarianceFloor);
    }
    // Clamp weights away from 0 so log(weight) stays finite.
    for (auto& w : next.weights) w = std::clamp(w, 1e-12, 1.0 - 1e-12);
    const double wsum = next.weights[0] + next.weights[1];
    next.weights = {next.weights[0] / wsum, 1.0 - next.weights[0] / wsum};

    const double ll = log_likelihood(next, losses);
    fit.params = next;
    fit.history.push_back(ll);
    ++fit.iterations;
    const double gain = ll - fit.log_likelihood;
    fit.log_likelihood = ll;
    if (gain < tol) break;
  }
  return fit;
}

Eigen::VectorXd clean_posterior(const GmmParams& p, const Eigen::VectorXd& losses) {
  const int k = p.clean_component();
  const int o = 1 - k;
  Eigen::VectorXd w(losses.size());
  for (Eigen::Index i = 0; i < losses.size(); ++i) {
    const double a = std::log(p.weights[k]) + log_normal(losses(i), p.means[k], p.variances[k]);
    const double b = std::log(p.weights[o]) + log_normal(losses(i), p.means[o], p.variances[o]);
    w(i) = 1.0 / (1.0 + std::exp(b - a));  // exp overflow gives exactly 0
  }
  return w;
}

GmmSplit partition(const Eigen::VectorXd& posteriors, double p) {
  if (!(p > 0.0 && p < 1.0)) throw ParameterError("threshold p must lie in (0, 1)");
  GmmSplit s;
  s.posteriors = posteriors;
  s.threshold_p = p;
  for (Eigen::Index i = 0; i < posteriors.size(); ++i) {
    (posteriors(i) > p ? s.clean_ids : s.noisy_ids).push_back(i);
  }
  return s;
}

Eigen::VectorXd min_max_normalize(const Eigen::VectorXd& v) {
  const double lo = v.minCoeff();
  const double span = v.maxCoeff() - lo;
  if (span <= 0.0) return Eigen::VectorXd::Zero(v.size());
  return (v.array() - lo) / span;
}

Selection select_clean(const Eigen::VectorXd& losses, double p, bool normalize_losses, int max_iters, double tol) {
  const Eigen::VectorXd l = normalize_losses ? min_max_normalize(losses) : losses;
  try {
    GmmFit fit = fit_gmm(l, max_iters, tol);
    return {partition(clean_posterior(fit.params, l), p), std::move(fit)};
  } catch (const DegenerateFitError&) {
    return {partition(Eigen::VectorXd::Ones(l.size()), p), std::nullopt};
  }
}

}  // namespace repair
