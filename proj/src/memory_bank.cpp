#include "repair/memory_bank.hpp"

#include <fstream>

#include "repair/binary_io.hpp"
#include "repair/errors.hpp"

namespace repair {
namespace {

constexpr io::Magic kBankMagic{'R', 'P', 'M', 'B'};
constexpr std::uint32_t kBankVersion = 1;

Eigen::VectorXd distances(const Eigen::MatrixXf& stored, const Eigen::Ref<const Eigen::VectorXd>& query) {
  if (stored.cols() == 0) throw EmptyBankError("distance query against an empty memory bank");
  if (query.size() != stored.rows()) throw ParameterError("query dimension does not match bank dimension");
  return (stored.cast<double>().colwise() - query).colwise().norm().transpose();
}

}  // namespace

MemoryBank::MemoryBank(Eigen::Index capacity, Eigen::Index dim) {
  if (capacity < 1) throw ParameterError("memory bank capacity must be positive");
  if (dim < 1) throw ParameterError("memory bank dimension must be positive");
  img_.resize(dim, capacity);
  txt_.resize(dim, capacity);
}

void MemoryBank::push(const Eigen::Ref<const Eigen::VectorXd>& img_feat,
                      const Eigen::Ref<const Eigen::VectorXd>& txt_feat) {
  if (img_feat.size() != dim() || txt_feat.size() != dim()) throw ParameterError("memory bank push: dimension mismatch");
  Eigen::Index slot;
  if (size_ < capacity()) {
    slot = (head_ + size_) % capacity();
    ++size_;
  } else {
    slot = head_;
    head_ = (head_ + 1) % capacity();
  }
  img_.col(slot) = img_feat.cast<float>();
  txt_.col(slot) = txt_feat.cast<float>();
  ++counter_;
}

void MemoryBank::push_batch(const Eigen::Ref<const Eigen::MatrixXd>& img_feats,
                            const Eigen::Ref<const Eigen::MatrixXd>& txt_feats) {
  if (img_feats.cols() != txt_feats.cols()) throw ParameterError("memory bank push: column count mismatch");
  for (Eigen::Index j = 0; j < img_feats.cols(); ++j) push(img_feats.col(j), txt_feats.col(j));
}

BankSnapshot MemoryBank::snapshot() const {
  BankSnapshot s{Eigen::MatrixXf(dim(), size_), Eigen::MatrixXf(dim(), size_)};
  for (Eigen::Index j = 0; j < size_; ++j) {
    const Eigen::Index slot = (head_ + j) % capacity();
    s.img.col(j) = img_.col(slot);
    s.txt.col(j) = txt_.col(slot);
  }
  return s;
}

Eigen::VectorXd distances_image(const BankSnapshot& bank, const Eigen::Ref<const Eigen::VectorXd>& query) {
  return distances(bank.img, query);
}

Eigen::VectorXd distances_text(const BankSnapshot& bank, const Eigen::Ref<const Eigen::VectorXd>& query) {
  return distances(bank.txt, query);
}

void save_bank(const MemoryBank& bank, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  const BankSnapshot s = bank.snapshot();
  io::Header h;
  h.magic = kBankMagic;
  h.version = kBankVersion;
  h.fields = {static_cast<std::uint32_t>(s.size()), static_cast<std::uint32_t>(bank.dim()),
              static_cast<std::uint32_t>(bank.capacity()), 0};
  h.tail = bank.insertion_counter();
  io::write_header(out, h);
  io::write_f32(out, {s.img.data(), static_cast<std::size_t>(s.img.size())});
  io::write_f32(out, {s.txt.data(), static_cast<std::size_t>(s.txt.size())});
}

BankSnapshot load_bank(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  const auto h = io::read_header(in, kBankMagic, kBankVersion);
  const auto n = static_cast<Eigen::Index>(h.fields[0]);
  const auto d = static_cast<Eigen::Index>(h.fields[1]);
  BankSnapshot s{Eigen::MatrixXf(d, n), Eigen::MatrixXf(d, n)};
  io::read_f32(in, {s.img.data(), static_cast<std::size_t>(s.img.size())}, "image feature block");
  io::read_f32(in, {s.txt.data(), static_cast<std::size_t>(s.txt.size())}, "text feature block");
  return s;
}

}  // namespace repair
