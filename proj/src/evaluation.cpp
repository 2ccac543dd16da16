#include "repair/evaluation.hpp"

#include <algorithm>
#include <numeric>

#include "repair/errors.hpp"

namespace repair {

double recall_at_k(const Eigen::MatrixXd& sim, Eigen::Index k, Direction dir) {
  const Eigen::Index n = sim.rows();
  if (sim.cols() != n || n == 0) throw ParameterError("recall_at_k needs a non-empty square similarity matrix");
  if (k < 1 || k > n) throw ParameterError("recall_at_k: k must lie in [1, N]");
  Eigen::Index hits = 0;
  for (Eigen::Index q = 0; q < n; ++q) {
    const auto score = [&](Eigen::Index c) { return dir == Direction::kImageToText ? sim(q, c) : sim(c, q); };
    const double target = score(q);
    Eigen::Index ahead = 0;
    for (Eigen::Index c = 0; c < n; ++c) {
      if (c == q) continue;
      const double s = score(c);
      if (s > target || (s == target && c < q)) ++ahead;
    }
    if (ahead < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

RetrievalReport retrieval_report(const Eigen::MatrixXd& sim) {
  RetrievalReport r;
  for (int k : {1, 5, 10}) {
    if (k > sim.rows()) continue;
    r.i2t[k] = recall_at_k(sim, k, Direction::kImageToText);
    r.t2i[k] = recall_at_k(sim, k, Direction::kTextToImage);
    r.r_sum += r.i2t[k] + r.t2i[k];
  }
  return r;
}

Eigen::MatrixXd average_similarity(const Encoders& a, const Encoders& b, const TrainingSet& data) {
  const auto ia = embed(a.w_img, data.images);
  const auto ta = embed(a.w_txt, data.texts);
  const auto ib = embed(b.w_img, data.images);
  const auto tb = embed(b.w_txt, data.texts);
  return 0.5 * (ia.unit.transpose() * ta.unit + ib.unit.transpose() * tb.unit);
}

DetectionReport detection_metrics(const std::vector<Eigen::Index>& selected,
                                  const std::vector<std::uint8_t>& true_match, double eta_used) {
  const auto n = static_cast<Eigen::Index>(true_match.size());
  std::vector<bool> predicted(true_match.size(), false);
  for (auto i : selected) {
    if (i < 0 || i >= n) throw ParameterError("selected index out of range");
    predicted[static_cast<std::size_t>(i)] = true;
  }
  Eigen::Index tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < true_match.size(); ++i) {
    const bool mismatched = true_match[i] == 0;
    if (predicted[i]) (mismatched ? tp : fp)++;
    else (mismatched ? fn : tn)++;
  }
  DetectionReport r;
  r.eta_used = eta_used;
  if (n > 0) r.accuracy = static_cast<double>(tp + tn) / static_cast<double>(n);
  if (tp + fp == 0) r.precision_undefined = true;
  else r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn == 0) r.recall_undefined = true;
  else r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return r;
}

SeparationReport soft_label_separation(const Eigen::VectorXd& y_star, const std::vector<std::uint8_t>& true_match) {
  if (static_cast<std::size_t>(y_star.size()) != true_match.size()) throw ParameterError("label/flag length mismatch");
  const Eigen::Index n = y_star.size();
  SeparationReport r;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return y_star(a) < y_star(b); });

  // Mann-Whitney U with average ranks for ties.
  double rank_sum_clean = 0.0;
  double n_clean = 0.0, n_noisy = 0.0;
  for (Eigen::Index s = 0; s < n;) {
    Eigen::Index e = s + 1;
    while (e < n && y_star(order[e]) == y_star(order[s])) ++e;
    const double avg_rank = 0.5 * static_cast<double>(s + 1 + e);
    for (Eigen::Index t = s; t < e; ++t) {
      if (true_match[static_cast<std::size_t>(order[t])]) rank_sum_clean += avg_rank;
    }
    s = e;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool clean = true_match[static_cast<std::size_t>(i)] != 0;
    (clean ? n_clean : n_noisy) += 1.0;
    const int bin = std::clamp(static_cast<int>(y_star(i) * kHistogramBins), 0, kHistogramBins - 1);
    (clean ? r.hist_clean : r.hist_noisy)[static_cast<std::size_t>(bin)]++;
  }
  if (n_clean == 0.0 || n_noisy == 0.0) throw ParameterError("AUC undefined: one population is empty");
  r.auc = (rank_sum_clean - n_clean * (n_clean + 1.0) / 2.0) / (n_clean * n_noisy);
  return r;
}

PairDataset clean_holdout(const PairDataset& holdout) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < holdout.size(); ++i) {
    if (holdout.true_match[static_cast<std::size_t>(i)]) keep.push_back(i);
  }
  return subset(holdout, keep);
}

}  // namespace repair
