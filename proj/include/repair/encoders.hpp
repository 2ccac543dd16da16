#pragma once

// Linear image/text encoders onto the unit sphere, cosine similarity, and the
// hinge triplet objectives with exact analytic gradients.
//
// Batches are column-major: column i of the image matrix and column i of the
// text matrix form the i-th positive pair. Every loss is first expressed on
// the B x B similarity matrix S (S(i, j) = sim(image_i, text_j)), then
// back-propagated through the normalization and the linear maps.

#include <Eigen/Dense>
#include <random>
#include <string>

#include "repair/errors.hpp"

namespace repair {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct EncoderPair {
  Mat<Scalar> w_img;  // d x d_img
  Mat<Scalar> w_txt;  // d x d_txt

  Eigen::Index dim() const { return w_img.rows(); }
  bool operator==(const EncoderPair&) const = default;
};

template <typename Scalar>
struct EncoderGrads {
  Mat<Scalar> img;
  Mat<Scalar> txt;
};

/// Unit-norm columns plus the pre-normalization norms needed for backprop.
template <typename Scalar>
struct Embedding {
  Mat<Scalar> unit;
  Vec<Scalar> norms;
};

template <typename Scalar>
struct LossAndGrad {
  Scalar loss = 0;
  EncoderGrads<Scalar> grads;
};

/// Loss over a similarity matrix: per-pair values and d(mean loss)/dS.
template <typename Scalar>
struct SimilarityLoss {
  Vec<Scalar> per_pair;
  Mat<Scalar> dsim;
  Scalar mean() const { return per_pair.size() ? per_pair.mean() : Scalar(0); }
};

using Encoders = EncoderPair<double>;
using Grads = EncoderGrads<double>;

template <typename Scalar>
EncoderPair<Scalar> random_encoders(Eigen::Index d, Eigen::Index d_img, Eigen::Index d_txt, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  EncoderPair<Scalar> enc{Mat<Scalar>(d, d_img), Mat<Scalar>(d, d_txt)};
  const double s_img = 1.0 / std::sqrt(static_cast<double>(d_img));
  const double s_txt = 1.0 / std::sqrt(static_cast<double>(d_txt));
  for (Eigen::Index j = 0; j < d_img; ++j)
    for (Eigen::Index i = 0; i < d; ++i) enc.w_img(i, j) = static_cast<Scalar>(s_img * normal(rng));
  for (Eigen::Index j = 0; j < d_txt; ++j)
    for (Eigen::Index i = 0; i < d; ++i) enc.w_txt(i, j) = static_cast<Scalar>(s_txt * normal(rng));
  return enc;
}

/// Projects every column with `w` and normalizes it.
template <typename Scalar, typename Derived>
Embedding<Scalar> embed(const Mat<Scalar>& w, const Eigen::MatrixBase<Derived>& raw) {
  if (raw.rows() != w.cols()) throw ParameterError("input length does not match encoder input dimension");
  Embedding<Scalar> e;
  e.unit = w * raw.template cast<Scalar>();
  e.norms = e.unit.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < e.unit.cols(); ++j) {
    if (!(e.norms(j) > Scalar(0))) throw DegenerateInputError("zero-norm projection in column " + std::to_string(j));
    e.unit.col(j) /= e.norms(j);
  }
  return e;
}

template <typename Scalar, typename Derived>
Vec<Scalar> embed_image(const EncoderPair<Scalar>& enc, const Eigen::MatrixBase<Derived>& image_raw) {
  return embed(enc.w_img, image_raw).unit.col(0);
}

template <typename Scalar, typename Derived>
Vec<Scalar> embed_text(const EncoderPair<Scalar>& enc, const Eigen::MatrixBase<Derived>& text_raw) {
  return embed(enc.w_txt, text_raw).unit.col(0);
}

/// Cosine similarity of two unit vectors.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar similarity(const Eigen::MatrixBase<DerivedA>& u, const Eigen::MatrixBase<DerivedB>& v) {
  if (u.size() != v.size()) throw ParameterError("similarity: dimension mismatch");
  return u.dot(v);
}

template <typename Scalar>
Scalar hinge(Scalar x) {
  return x > Scalar(0) ? x : Scalar(0);
}

/// Index of the largest entry of row/column `i` of `sim` excluding the
/// diagonal; ties resolve to the lowest index.
template <typename Scalar>
Eigen::Index hard_negative_text(const Mat<Scalar>& sim, Eigen::Index i) {
  Eigen::Index best = -1;
  for (Eigen::Index j = 0; j < sim.cols(); ++j) {
    if (j == i) continue;
    if (best < 0 || sim(i, j) > sim(i, best)) best = j;
  }
  return best;
}

template <typename Scalar>
Eigen::Index hard_negative_image(const Mat<Scalar>& sim, Eigen::Index i) {
  Eigen::Index best = -1;
  for (Eigen::Index j = 0; j < sim.rows(); ++j) {
    if (j == i) continue;
    if (best < 0 || sim(j, i) > sim(best, i)) best = j;
  }
  return best;
}

/// Warm-up loss: both hinge sums over every in-batch negative, divided by
/// the negative count B - 1.
template <typename Scalar>
SimilarityLoss<Scalar> warmup_from_similarity(const Mat<Scalar>& sim, Scalar alpha) {
  const Eigen::Index b = sim.rows();
  if (b < 2 || sim.cols() != b) throw InsufficientNegativesError("warm-up loss needs a square batch of size >= 2");
  const Scalar inv_neg = Scalar(1) / static_cast<Scalar>(b - 1);
  const Scalar inv_b = Scalar(1) / static_cast<Scalar>(b);
  SimilarityLoss<Scalar> out{Vec<Scalar>::Zero(b), Mat<Scalar>::Zero(b, b)};
  for (Eigen::Index i = 0; i < b; ++i) {
    Scalar acc = 0;
    for (Eigen::Index j = 0; j < b; ++j) {
      if (j == i) continue;
      const Scalar t = alpha - sim(i, i) + sim(i, j);
      if (t > Scalar(0)) {
        acc += t;
        out.dsim(i, i) -= inv_neg * inv_b;
        out.dsim(i, j) += inv_neg * inv_b;
      }
      const Scalar u = alpha - sim(i, i) + sim(j, i);
      if (u > Scalar(0)) {
        acc += u;
        out.dsim(i, i) -= inv_neg * inv_b;
        out.dsim(j, i) += inv_neg * inv_b;
      }
    }
    out.per_pair(i) = acc * inv_neg;
  }
  return out;
}

/// Soft-margin triplet loss with in-batch hard negatives, one margin per
/// positive pair.
template <typename Scalar>
SimilarityLoss<Scalar> triplet_from_similarity(const Mat<Scalar>& sim, const Vec<Scalar>& margins) {
  const Eigen::Index b = sim.rows();
  if (b < 2 || sim.cols() != b) throw InsufficientNegativesError("triplet loss needs a square batch of size >= 2");
  if (margins.size() != b) throw ParameterError("one margin per pair is required");
  const Scalar inv_b = Scalar(1) / static_cast<Scalar>(b);
  SimilarityLoss<Scalar> out{Vec<Scalar>::Zero(b), Mat<Scalar>::Zero(b, b)};
  for (Eigen::Index i = 0; i < b; ++i) {
    const Eigen::Index ht = hard_negative_text(sim, i);
    const Eigen::Index hi = hard_negative_image(sim, i);
    const Scalar t = margins(i) - sim(i, i) + sim(i, ht);
    const Scalar u = margins(i) - sim(i, i) + sim(hi, i);
    if (t > Scalar(0)) {
      out.dsim(i, i) -= inv_b;
      out.dsim(i, ht) += inv_b;
    }
    if (u > Scalar(0)) {
      out.dsim(i, i) -= inv_b;
      out.dsim(hi, i) += inv_b;
    }
    out.per_pair(i) = hinge(t) + hinge(u);
  }
  return out;
}

/// Chain rule through x -> W x / |W x|: returns dL/dW given dL/d(unit).
template <typename Scalar, typename Derived>
Mat<Scalar> backprop_linear(const Embedding<Scalar>& e, const Mat<Scalar>& dunit, const Eigen::MatrixBase<Derived>& raw) {
  Mat<Scalar> du = dunit;
  for (Eigen::Index j = 0; j < du.cols(); ++j) {
    const Scalar proj = e.unit.col(j).dot(dunit.col(j));
    du.col(j) = (dunit.col(j) - proj * e.unit.col(j)) / e.norms(j);
  }
  return du * raw.template cast<Scalar>().transpose();
}

/// Gradient of a similarity-matrix loss w.r.t. both encoders.
template <typename Scalar, typename DerivedI, typename DerivedT>
EncoderGrads<Scalar> backprop_similarity(const Embedding<Scalar>& img, const Embedding<Scalar>& txt,
                                         const Mat<Scalar>& dsim, const Eigen::MatrixBase<DerivedI>& images,
                                         const Eigen::MatrixBase<DerivedT>& texts) {
  const Mat<Scalar> d_img_unit = txt.unit * dsim.transpose();
  const Mat<Scalar> d_txt_unit = img.unit * dsim;
  return {backprop_linear(img, d_img_unit, images), backprop_linear(txt, d_txt_unit, texts)};
}

template <typename Scalar, typename DerivedI, typename DerivedT>
LossAndGrad<Scalar> warmup_loss_and_grad(const EncoderPair<Scalar>& enc, const Eigen::MatrixBase<DerivedI>& images,
                                         const Eigen::MatrixBase<DerivedT>& texts, Scalar alpha) {
  if (images.cols() < 2) throw InsufficientNegativesError("warm-up batch must hold at least 2 pairs");
  if (alpha < Scalar(0)) throw ParameterError("alpha must be non-negative");
  const auto img = embed(enc.w_img, images);
  const auto txt = embed(enc.w_txt, texts);
  const Mat<Scalar> sim = img.unit.transpose() * txt.unit;
  const auto l = warmup_from_similarity(sim, alpha);
  return {l.mean(), backprop_similarity(img, txt, l.dsim, images, texts)};
}

template <typename Scalar, typename DerivedI, typename DerivedT>
LossAndGrad<Scalar> triplet_loss_and_grad(const EncoderPair<Scalar>& enc, const Eigen::MatrixBase<DerivedI>& images,
                                          const Eigen::MatrixBase<DerivedT>& texts, const Vec<Scalar>& margins) {
  if (images.cols() < 2) throw InsufficientNegativesError("triplet batch must hold at least 2 pairs");
  const auto img = embed(enc.w_img, images);
  const auto txt = embed(enc.w_txt, texts);
  const Mat<Scalar> sim = img.unit.transpose() * txt.unit;
  const auto l = triplet_from_similarity(sim, margins);
  return {l.mean(), backprop_similarity(img, txt, l.dsim, images, texts)};
}

template <typename Scalar>
EncoderGrads<Scalar> zero_grads(const EncoderPair<Scalar>& enc) {
  return {Mat<Scalar>::Zero(enc.w_img.rows(), enc.w_img.cols()), Mat<Scalar>::Zero(enc.w_txt.rows(), enc.w_txt.cols())};
}

template <typename Scalar>
EncoderPair<Scalar> sgd_step(const EncoderPair<Scalar>& enc, const EncoderGrads<Scalar>& g, Scalar lr) {
  if (!(lr >= Scalar(0))) throw ParameterError("learning rate must be non-negative");
  return {enc.w_img - lr * g.img, enc.w_txt - lr * g.txt};
}

/// Heavy-ball SGD; momentum 0 reduces to `sgd_step`.
template <typename Scalar>
class MomentumSgd {
 public:
  explicit MomentumSgd(Scalar momentum = 0) : momentum_(momentum) {}

  void step(EncoderPair<Scalar>& enc, const EncoderGrads<Scalar>& g, Scalar lr) {
    if (momentum_ == Scalar(0)) {
      enc = sgd_step(enc, g, lr);
      return;
    }
    if (velocity_.img.size() == 0) velocity_ = zero_grads(enc);
    velocity_.img = momentum_ * velocity_.img + g.img;
    velocity_.txt = momentum_ * velocity_.txt + g.txt;
    enc = sgd_step(enc, velocity_, lr);
  }

 private:
  Scalar momentum_;
  EncoderGrads<Scalar> velocity_;
};

void save_encoders(const Encoders& enc, const std::string& path);
Encoders load_encoders(const std::string& path);

}  // namespace repair
