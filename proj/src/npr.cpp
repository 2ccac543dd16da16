#include "repair/npr.hpp"

#include <algorithm>
#include <numeric>

#include "repair/rank_correlation.hpp"
#include "repair/soft_margin.hpp"

namespace repair {
namespace {

TopK topk(const Eigen::VectorXd& dist, Eigen::Index k) {
  if (k < 1) throw ParameterError("k must be at least 1");
  TopK out;
  const Eigen::Index n = dist.size();
  if (k > n) {
    k = n;
    out.clamped = true;
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return dist(a) < dist(b) || (dist(a) == dist(b) && a < b);
  });
  out.indices.assign(order.begin(), order.begin() + k);
  return out;
}

ReplacementPair pick(const Eigen::MatrixXf& pool, const std::vector<Eigen::Index>& candidates,
                     const Eigen::Ref<const Eigen::VectorXd>& kept, ReplaceDirection dir) {
  if (candidates.empty()) throw ParameterError("replacement search needs a non-empty candidate set");
  Eigen::Index best = -1;
  double best_sim = 0.0;
  for (auto j : candidates) {
    if (j < 0 || j >= pool.cols()) throw ParameterError("candidate index outside the bank snapshot");
    const double s = similarity(pool.col(j).cast<double>(), kept);
    if (best < 0 || s > best_sim || (s == best_sim && j < best)) {
      best = j;
      best_sim = s;
    }
  }
  ReplacementPair r;
  r.kept_feat = kept;
  r.replacement_feat = pool.col(best).cast<double>();
  r.direction = dir;
  r.bank_entry_index = best;
  r.similarity = best_sim;
  return r;
}

/// Triplet loss on one direction group; `fixed` holds the bank-side unit
/// features and `live` the encoder side. Returns dL/d(live unit).
struct GroupLoss {
  double loss = 0.0;
  Eigen::MatrixXd dlive;
};

GroupLoss group_loss(const Eigen::MatrixXd& fixed, const Eigen::MatrixXd& live, bool fixed_is_image,
                     const Eigen::VectorXd& margins) {
  const Eigen::MatrixXd sim = fixed_is_image ? Eigen::MatrixXd(fixed.transpose() * live)
                                             : Eigen::MatrixXd(live.transpose() * fixed);
  const auto l = triplet_from_similarity(sim, margins);
  GroupLoss g;
  g.loss = l.mean();
  g.dlive = fixed_is_image ? Eigen::MatrixXd(fixed * l.dsim) : Eigen::MatrixXd(fixed * l.dsim.transpose());
  return g;
}

}  // namespace

const char* to_string(ReplaceDirection d) { return d == ReplaceDirection::kImage ? "replace-image" : "replace-text"; }

std::vector<Eigen::Index> select_npr_candidates(const Eigen::VectorXd& w_a, const Eigen::VectorXd& w_b, double eta) {
  if (w_a.size() != w_b.size()) throw ParameterError("posterior lists differ in length");
  std::vector<Eigen::Index> out;
  for (Eigen::Index i = 0; i < w_a.size(); ++i) {
    if (w_a(i) < eta && w_b(i) < eta) out.push_back(i);
  }
  return out;
}

TopK topk_similar_texts(const BankSnapshot& bank, const Eigen::Ref<const Eigen::VectorXd>& txt_feat, Eigen::Index k) {
  return topk(distances_text(bank, txt_feat), k);
}

TopK topk_similar_images(const BankSnapshot& bank, const Eigen::Ref<const Eigen::VectorXd>& img_feat, Eigen::Index k) {
  return topk(distances_image(bank, img_feat), k);
}

ReplacementPair pick_replacement_image(const BankSnapshot& bank, const std::vector<Eigen::Index>& candidates,
                                       const Eigen::Ref<const Eigen::VectorXd>& txt_feat) {
  return pick(bank.img, candidates, txt_feat, ReplaceDirection::kImage);
}

ReplacementPair pick_replacement_text(const BankSnapshot& bank, const std::vector<Eigen::Index>& candidates,
                                      const Eigen::Ref<const Eigen::VectorXd>& img_feat) {
  return pick(bank.txt, candidates, img_feat, ReplaceDirection::kText);
}

NoisyLoss noisy_loss(const Encoders& enc, const BankSnapshot& bank, const Eigen::MatrixXd& images,
                     const Eigen::MatrixXd& texts, const std::vector<std::uint32_t>& pair_ids,
                     const LabelAnchors& anchors, const NoisyLossOptions& opts) {
  NoisyLoss out;
  out.grads = zero_grads(enc);
  const Eigen::Index r = images.cols();
  if (r == 0) return out;
  if (texts.cols() != r || static_cast<Eigen::Index>(pair_ids.size()) != r) {
    throw ParameterError("noisy batch columns and ids disagree");
  }

  const auto img = embed(enc.w_img, images);
  const auto txt = embed(enc.w_txt, texts);
  Eigen::MatrixXd new_img(enc.dim(), r);  // bank images paired with live texts
  Eigen::MatrixXd new_txt(enc.dim(), r);  // bank texts paired with live images
  Eigen::VectorXd margin_img(r), margin_txt(r);

  auto label = [&](const Eigen::VectorXd& f, const Eigen::VectorXd& g) {
    double corre = 0.0;
    try {
      corre = spearman(distances_image(bank, f), distances_text(bank, g));
    } catch (const UndefinedCorrelation&) {
    }
    return soft_margin(label_from_anchors(corre, anchors.gamma, anchors.mu, anchors.degenerate), opts.m, opts.alpha);
  };

  for (Eigen::Index i = 0; i < r; ++i) {
    const Eigen::VectorXd f = img.unit.col(i);
    const Eigen::VectorXd g = txt.unit.col(i);
    auto by_image = pick_replacement_image(bank, topk_similar_texts(bank, g, opts.k).indices, g);
    auto by_text = pick_replacement_text(bank, topk_similar_images(bank, f, opts.k).indices, f);
    by_image.source_pair_id = by_text.source_pair_id = pair_ids[static_cast<std::size_t>(i)];
    new_img.col(i) = by_image.replacement_feat;
    new_txt.col(i) = by_text.replacement_feat;
    margin_img(i) = label(by_image.replacement_feat, g);
    margin_txt(i) = label(f, by_text.replacement_feat);
    out.replacements.push_back(std::move(by_image));
    out.replacements.push_back(std::move(by_text));
  }
  out.margins.resize(2 * r);
  for (Eigen::Index i = 0; i < r; ++i) {
    out.margins(2 * i) = margin_img(i);
    out.margins(2 * i + 1) = margin_txt(i);
  }
  if (r < 2) return out;

  const double weight = (opts.replace_image && opts.replace_text) ? 0.5 : 1.0;
  if (opts.replace_image) {
    const auto g = group_loss(new_img, txt.unit, true, margin_img);
    out.loss += weight * g.loss;
    out.grads.txt = backprop_linear(txt, Eigen::MatrixXd(weight * g.dlive), texts);
  }
  if (opts.replace_text) {
    const auto g = group_loss(new_txt, img.unit, false, margin_txt);
    out.loss += weight * g.loss;
    out.grads.img = backprop_linear(img, Eigen::MatrixXd(weight * g.dlive), images);
  }
  return out;
}

}  // namespace repair
