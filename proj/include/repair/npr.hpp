#pragma once

// Noisy pair half-replacing: for pairs both networks consider mismatched,
// borrow a better-matching feature for one modality from the memory bank.

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "repair/encoders.hpp"
#include "repair/memory_bank.hpp"

namespace repair {

enum class ReplaceDirection { kImage, kText };

const char* to_string(ReplaceDirection d);

struct ReplacementPair {
  Eigen::VectorXd kept_feat;
  Eigen::VectorXd replacement_feat;  // exact copy of a bank column
  ReplaceDirection direction = ReplaceDirection::kImage;
  std::uint32_t source_pair_id = 0;
  Eigen::Index bank_entry_index = 0;
  double similarity = 0.0;  // sim(replacement, kept)
};

/// {i : w_a(i) < eta and w_b(i) < eta}
std::vector<Eigen::Index> select_npr_candidates(const Eigen::VectorXd& w_a, const Eigen::VectorXd& w_b, double eta);

struct TopK {
  std::vector<Eigen::Index> indices;
  bool clamped = false;  // k exceeded the bank size
};

/// Bank entries with the k smallest text distances to `txt_feat`, nearest
/// first; equal distances keep the lower bank index first.
TopK topk_similar_texts(const BankSnapshot& bank, const Eigen::Ref<const Eigen::VectorXd>& txt_feat, Eigen::Index k);
TopK topk_similar_images(const BankSnapshot& bank, const Eigen::Ref<const Eigen::VectorXd>& img_feat, Eigen::Index k);

/// Among the candidates' image features, the one most similar to `txt_feat`.
ReplacementPair pick_replacement_image(const BankSnapshot& bank, const std::vector<Eigen::Index>& candidates,
                                       const Eigen::Ref<const Eigen::VectorXd>& txt_feat);
/// Among the candidates' text features, the one most similar to `img_feat`.
ReplacementPair pick_replacement_text(const BankSnapshot& bank, const std::vector<Eigen::Index>& candidates,
                                      const Eigen::Ref<const Eigen::VectorXd>& img_feat);

/// Label window for replacement pairs, taken from the clean batch.
struct LabelAnchors {
  double gamma = 1.0;
  double mu = 0.0;
  bool degenerate = true;
};

struct NoisyLossOptions {
  Eigen::Index k = 8;
  double alpha = 0.2;
  double m = 10.0;
  bool replace_image = true;
  bool replace_text = true;
};

struct NoisyLoss {
  double loss = 0.0;
  Grads grads;
  std::vector<ReplacementPair> replacements;  // image direction then text direction per pair
  Eigen::VectorXd margins;                    // one per replacement
};

/// Builds both replacement directions for every selected pair (raw columns of
/// `images`/`texts`), labels each new pair by rank correlation against the
/// bank, and evaluates the soft-margin triplet loss within each direction
/// group. With both directions enabled each group carries weight 1/2. Bank features are constants, so each
/// group only produces gradient for the kept modality's encoder. Fewer than 2
/// selected pairs yields a zero loss.
NoisyLoss noisy_loss(const Encoders& enc, const BankSnapshot& bank, const Eigen::MatrixXd& images,
                     const Eigen::MatrixXd& texts, const std::vector<std::uint32_t>& pair_ids,
                     const LabelAnchors& anchors, const NoisyLossOptions& opts);

}  // namespace repair
