#include "repair/encoders.hpp"

#include <fstream>

#include "repair/binary_io.hpp"

namespace repair {
namespace {
constexpr io::Magic kEncoderMagic{'R', 'P', 'E', 'N'};
constexpr std::uint32_t kEncoderVersion = 1;
}  // namespace

void save_encoders(const Encoders& enc, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  io::Header h;
  h.magic = kEncoderMagic;
  h.version = kEncoderVersion;
  h.fields = {static_cast<std::uint32_t>(enc.dim()), static_cast<std::uint32_t>(enc.w_img.cols()),
              static_cast<std::uint32_t>(enc.w_txt.cols()), 0};
  io::write_header(out, h);
  const Eigen::MatrixXf wi = enc.w_img.cast<float>();
  const Eigen::MatrixXf wt = enc.w_txt.cast<float>();
  io::write_f32(out, {wi.data(), static_cast<std::size_t>(wi.size())});
  io::write_f32(out, {wt.data(), static_cast<std::size_t>(wt.size())});
}

Encoders load_encoders(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  const auto h = io::read_header(in, kEncoderMagic, kEncoderVersion);
  const auto d = static_cast<Eigen::Index>(h.fields[0]);
  if (d == 0) throw FormatError("bad header field 'd': 0");
  Eigen::MatrixXf wi(d, static_cast<Eigen::Index>(h.fields[1]));
  Eigen::MatrixXf wt(d, static_cast<Eigen::Index>(h.fields[2]));
  io::read_f32(in, {wi.data(), static_cast<std::size_t>(wi.size())}, "w_img payload");
  io::read_f32(in, {wt.data(), static_cast<std::size_t>(wt.size())}, "w_txt payload");
  return {wi.cast<double>(), wt.cast<double>()};
}

}  // namespace repair
