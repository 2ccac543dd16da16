#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

namespace repair {

/// Order-preserving copy of a bank: column j of `img` and `txt` is the j-th
/// oldest stored (f, g) tuple.
struct BankSnapshot {
  Eigen::MatrixXf img;
  Eigen::MatrixXf txt;

  Eigen::Index size() const { return img.cols(); }
  bool empty() const { return img.cols() == 0; }
};

/// Fixed-capacity FIFO of matched feature pairs. Features are stored in f32.
class MemoryBank {
 public:
  MemoryBank(Eigen::Index capacity, Eigen::Index dim);

  /// Appends one tuple; evicts the oldest when full.
  void push(const Eigen::Ref<const Eigen::VectorXd>& img_feat, const Eigen::Ref<const Eigen::VectorXd>& txt_feat);
  /// Pushes every column pair in order.
  void push_batch(const Eigen::Ref<const Eigen::MatrixXd>& img_feats, const Eigen::Ref<const Eigen::MatrixXd>& txt_feats);

  BankSnapshot snapshot() const;

  Eigen::Index size() const { return size_; }
  Eigen::Index capacity() const { return img_.cols(); }
  Eigen::Index dim() const { return img_.rows(); }
  std::uint64_t insertion_counter() const { return counter_; }
  bool empty() const { return size_ == 0; }

 private:
  Eigen::MatrixXf img_;
  Eigen::MatrixXf txt_;
  Eigen::Index head_ = 0;  // slot of the oldest entry
  Eigen::Index size_ = 0;
  std::uint64_t counter_ = 0;
};

/// Euclidean distances (f64) from `query` to every stored image feature.
Eigen::VectorXd distances_image(const BankSnapshot& bank, const Eigen::Ref<const Eigen::VectorXd>& query);
Eigen::VectorXd distances_text(const BankSnapshot& bank, const Eigen::Ref<const Eigen::VectorXd>& query);

void save_bank(const MemoryBank& bank, const std::string& path);
BankSnapshot load_bank(const std::string& path);

}  // namespace repair
