#include "repair/rank_correlation.hpp"

namespace repair {
namespace {

constexpr double kTopFraction = 0.10;
constexpr double kBottomFraction = 0.01;
constexpr double kMinWindow = 1e-9;

Eigen::Index anchor_count(Eigen::Index n, double fraction) {
  const auto c = static_cast<Eigen::Index>(std::ceil(fraction * static_cast<double>(n) - 1e-12));
  return std::max<Eigen::Index>(1, c);
}

Eigen::VectorXd average_ranks(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return v(a) < v(b); });
  Eigen::VectorXd r(n);
  for (Eigen::Index s = 0; s < n;) {
    Eigen::Index e = s + 1;
    while (e < n && v(order[e]) == v(order[s])) ++e;
    for (Eigen::Index k = s; k < e; ++k) r(order[k]) = 0.5 * static_cast<double>(s + 1 + e);
    s = e;
  }
  return r;
}

}  // namespace

double spearman_average_ranks(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd x = average_ranks(a).array() - average_ranks(a).mean();
  const Eigen::VectorXd y = average_ranks(b).array() - average_ranks(b).mean();
  const double den = std::sqrt(x.squaredNorm() * y.squaredNorm());
  if (den == 0.0) throw UndefinedCorrelation("constant rank vector");
  return std::clamp(x.dot(y) / den, -1.0, 1.0);
}

bool anchors_degenerate(double gamma, double mu) { return gamma - std::max(0.0, mu) < kMinWindow; }

double label_from_anchors(double corre, double gamma, double mu, bool degenerate) {
  if (degenerate) return (corre >= gamma && corre > 0.0) ? 1.0 : 0.0;
  const double floor = std::max(0.0, mu);
  if (corre <= floor) return 0.0;
  if (corre > gamma) return 1.0;
  return (corre - floor) / (gamma - floor);
}

SoftLabelSet normalize_labels(const Eigen::VectorXd& corre) {
  const Eigen::Index n = corre.size();
  if (n < 10) throw ParameterError("normalize_labels needs at least 10 correlation values");
  Eigen::VectorXd sorted = corre;
  std::sort(sorted.data(), sorted.data() + n);
  const Eigen::Index top = anchor_count(n, kTopFraction);
  const Eigen::Index bottom = anchor_count(n, kBottomFraction);

  SoftLabelSet s;
  s.corre = corre;
  s.gamma = sorted.tail(top).mean();
  s.mu = sorted.head(bottom).mean();
  s.degenerate = anchors_degenerate(s.gamma, s.mu);
  s.y_star.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) s.y_star(i) = label_from_anchors(corre(i), s.gamma, s.mu, s.degenerate);
  return s;
}

Eigen::VectorXd correlations(const BankSnapshot& bank, const Eigen::MatrixXd& img_unit, const Eigen::MatrixXd& txt_unit) {
  if (bank.empty()) throw EmptyBankError("soft labels need a non-empty memory bank");
  if (bank.size() < 2) throw ParameterError("soft labels need a memory bank holding at least 2 entries");
  if (img_unit.cols() != txt_unit.cols()) throw ParameterError("image/text batch size mismatch");
  Eigen::VectorXd corre(img_unit.cols());
  for (Eigen::Index i = 0; i < img_unit.cols(); ++i) {
    try {
      corre(i) = spearman(distances_image(bank, img_unit.col(i)), distances_text(bank, txt_unit.col(i)));
    } catch (const UndefinedCorrelation&) {
      corre(i) = 0.0;
    }
  }
  return corre;
}

SoftLabelSet soft_labels_for_batch(const BankSnapshot& bank, const Encoders& enc, const Eigen::MatrixXd& images,
                                   const Eigen::MatrixXd& texts) {
  const auto img = embed(enc.w_img, images);
  const auto txt = embed(enc.w_txt, texts);
  return normalize_labels(correlations(bank, img.unit, txt.unit));
}

}  // namespace repair
