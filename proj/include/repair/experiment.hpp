#pragma once

// End-to-end runs with ground-truth scoring, and the CSV/JSON writers used
// by the command-line tool. Ground truth is consulted here, never inside the
// trainer.

#include <string>
#include <vector>

#include "json.hpp"
#include "repair/dataset.hpp"
#include "repair/evaluation.hpp"
#include "repair/trainer.hpp"

namespace repair {

inline const std::vector<double> kDefaultEtaGrid{0.05, 0.15, 0.25, 0.35, 0.45};

struct ExperimentOptions {
  double holdout_fraction = 0.1;
  std::vector<double> eta_grid = kDefaultEtaGrid;
};

struct EpochMetrics {
  int epoch = 0;
  std::optional<SeparationReport> separation;
  std::vector<DetectionReport> detection;  // one per eta in the grid
  /// Fraction of this epoch's replacements whose source pair is truly mismatched.
  double replacement_on_mismatched = 0.0;
};

struct Experiment {
  PairDataset train;       // includes hidden flags, for scoring only
  PairDataset validation;  // truly matched holdout pairs
  RunResult run;
  std::vector<EpochMetrics> metrics;

  const EpochMetrics& final_metrics() const { return metrics.back(); }
};

Experiment run_experiment(const PairDataset& ds, const TrainConfig& cfg, const ExperimentOptions& opts = {});

/// Posterior-conjunction detection scored against the hidden flags.
DetectionReport score_selection(const Eigen::VectorXd& w_a, const Eigen::VectorXd& w_b, double eta,
                                const std::vector<std::uint8_t>& true_match);

/// Outputs written for a finished experiment; every path is inside `dir`.
std::vector<std::string> write_run_outputs(const Experiment& ex, const TrainConfig& cfg, const std::string& dir);

nlohmann::json config_json(const TrainConfig& cfg);
nlohmann::json retrieval_json(const RetrievalReport& r);

/// Double formatted with a fixed, locale-independent representation.
std::string fmt(double v);

}  // namespace repair
