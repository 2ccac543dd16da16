#pragma once

// Two-network co-teaching trainer: warm-up, per-epoch GMM partition, soft
// margins from rank-correlation labels, memory-bank upkeep, and noisy pair
// half-replacing.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "repair/dataset.hpp"
#include "repair/encoders.hpp"
#include "repair/evaluation.hpp"
#include "repair/gmm.hpp"
#include "repair/memory_bank.hpp"
#include "repair/npr.hpp"
#include "repair/soft_margin.hpp"

namespace repair {

/// hard: margin alpha for clean pairs, 0 for noisy pairs, both trained.
/// drop: clean pairs only, margin alpha.
/// rc-drop: clean pairs only, rank-correlation soft margins.
/// repair: rc-drop plus the half-replaced noisy term weighted by tau.
enum class Variant { kHard, kDrop, kRcDrop, kRepair };

const char* to_string(Variant v);
Variant parse_variant(const std::string& s);

struct TrainConfig {
  int epochs = 30;
  int warmup_epochs = 5;
  Eigen::Index batch_size = 64;
  double lr = 0.05;
  double lr_decay = 0.1;
  int decay_epoch = 20;
  double momentum = 0.9;
  double alpha = 0.2;
  double m = 10.0;
  double p = 0.5;
  double eta = 0.25;
  double tau = 0.15;
  std::optional<Eigen::Index> k;  // unset: 32 when bank_size >= 1024, else 8
  Eigen::Index bank_size = 512;
  Eigen::Index embed_dim = 16;
  std::uint64_t seed = 1;
  Variant variant = Variant::kRepair;
  bool normalize_losses = true;
  int gmm_max_iters = 100;
  double gmm_tol = 1e-6;
  bool shared_init = false;  // start both networks from the same weights
  bool collect_diagnostics = true;

  Eigen::Index effective_k() const { return k ? *k : (bank_size >= 1024 ? 32 : 8); }
  double lr_at(int epoch) const { return epoch >= decay_epoch ? lr * lr_decay : lr; }
  /// Throws ParameterError naming the offending field.
  void validate() const;
};

struct TrainerState {
  Encoders net_a;
  Encoders net_b;
  MemoryBank bank_a;
  MemoryBank bank_b;
  MomentumSgd<double> opt_a;
  MomentumSgd<double> opt_b;
  int epoch = 0;
};

TrainerState init_state(const TrainConfig& cfg, Eigen::Index d_img, Eigen::Index d_txt);

struct WarmupReport {
  std::vector<double> loss_a;  // mean batch loss per warm-up epoch
  std::vector<double> loss_b;
};

/// Trains both networks with the all-negatives warm-up loss, then seeds each
/// bank with that network's lowest-loss pairs from its own clean subset.
WarmupReport warmup(TrainerState& state, const TrainingSet& data, const TrainConfig& cfg);

struct ReplacementRecord {
  int epoch = 0;
  char network = 'A';
  std::uint32_t pair_id = 0;
  ReplaceDirection direction = ReplaceDirection::kImage;
  Eigen::Index bank_entry_index = 0;
  double similarity = 0.0;
};

/// Soft labels for every training pair (network A and its bank), computed in
/// fixed-order chunks of one batch each.
struct SoftLabelDiagnostics {
  Eigen::VectorXd corre;
  Eigen::VectorXd y_star;
};

struct EpochReport {
  int epoch = 0;
  Variant variant = Variant::kRepair;
  double lr = 0.0;
  double l_clean = 0.0;  // mean over both networks' batches
  double l_noisy = 0.0;
  Eigen::Index clean_size_a = 0;
  Eigen::Index clean_size_b = 0;
  Eigen::Index npr_count = 0;  // selected pairs over both networks
  bool degenerate = false;     // some network fell back to warm-up training
  Eigen::VectorXd posteriors_a;
  Eigen::VectorXd posteriors_b;
  std::optional<GmmFit> fit_a;
  std::optional<GmmFit> fit_b;
  std::vector<ReplacementRecord> replacements;
  std::optional<SoftLabelDiagnostics> soft_labels;
  std::optional<RetrievalReport> validation;
};

/// Called once per optimizer step with the network ('A' or 'B'), the step
/// index within the epoch, and the combined gradient.
using BatchHook = std::function<void(char, int, const Grads&)>;

EpochReport train_epoch(TrainerState& state, const TrainingSet& data, const TrainConfig& cfg,
                        const TrainingSet* validation = nullptr, const BatchHook& hook = {});

SoftLabelDiagnostics soft_label_diagnostics(const TrainerState& state, const TrainingSet& data,
                                            const TrainConfig& cfg);

struct RunResult {
  TrainerState final_state;
  Encoders best_a;
  Encoders best_b;
  int best_epoch = -1;
  RetrievalReport best_validation;
  WarmupReport warmup;
  std::vector<EpochReport> epochs;
};

using EpochObserver = std::function<void(const EpochReport&, const TrainerState&)>;

/// Warm-up followed by epochs - warmup_epochs co-teaching epochs. The best
/// epoch by mean validation R@1 (earliest on ties) supplies the retained
/// checkpoint and the reported metrics.
RunResult train(const TrainConfig& cfg, const TrainingSet& data, const TrainingSet& validation,
                const EpochObserver& observer = {});

}  // namespace repair
