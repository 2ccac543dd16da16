#include "repair/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"
#include "repair/binary_io.hpp"
#include "repair/errors.hpp"

namespace repair {
namespace {

constexpr io::Magic kDatasetMagic{'R', 'P', 'D', 'S'};
constexpr std::uint32_t kDatasetVersion = 1;

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * normal(rng);
  return m;
}

}  // namespace

RawPair PairDataset::pair(Eigen::Index i) const {
  return RawPair{images.col(i), texts.col(i), 1, true_match[static_cast<std::size_t>(i)],
                 pair_ids[static_cast<std::size_t>(i)]};
}

PairDataset generate(const GenerateOptions& o) {
  if (o.n < 2) throw ParameterError("n must be at least 2");
  if (o.d_latent < 1 || o.d_img < 1 || o.d_txt < 1) throw ParameterError("dimensions must be positive");
  if (o.d_latent > std::min(o.d_img, o.d_txt)) throw ParameterError("d_latent must not exceed min(d_img, d_txt)");
  if (!(o.noise_rate >= 0.0 && o.noise_rate < 1.0)) throw ParameterError("noise_rate must lie in [0, 1)");
  if (!(o.sigma >= 0.0)) throw ParameterError("sigma must be non-negative");

  std::mt19937_64 rng(o.seed);
  const double mix_scale = 1.0 / std::sqrt(static_cast<double>(o.d_latent));
  const Eigen::MatrixXd mix_img = gaussian(o.d_img, o.d_latent, mix_scale, rng);
  const Eigen::MatrixXd mix_txt = gaussian(o.d_txt, o.d_latent, mix_scale, rng);
  const Eigen::MatrixXd latent = gaussian(o.d_latent, o.n, 1.0, rng);

  PairDataset ds;
  ds.images = (mix_img * latent + gaussian(o.d_img, o.n, o.sigma, rng)).cast<float>();
  ds.texts = (mix_txt * latent + gaussian(o.d_txt, o.n, o.sigma, rng)).cast<float>();
  ds.true_match.assign(static_cast<std::size_t>(o.n), 1);
  ds.pair_ids.resize(static_cast<std::size_t>(o.n));
  std::iota(ds.pair_ids.begin(), ds.pair_ids.end(), 0u);
  ds.noise_rate = static_cast<float>(o.noise_rate);
  ds.seed = o.seed;

  const auto n_noisy = static_cast<Eigen::Index>(std::llround(o.noise_rate * static_cast<double>(o.n)));
  if (n_noisy == 0) return ds;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(o.n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Eigen::Index> noisy(order.begin(), order.begin() + n_noisy);
  std::sort(noisy.begin(), noisy.end());

  if (n_noisy == 1) {
    // A single index admits no derangement: draw an unrelated text instead.
    const Eigen::MatrixXd z = gaussian(o.d_latent, 1, 1.0, rng);
    ds.texts.col(noisy[0]) = (mix_txt * z + gaussian(o.d_txt, 1, o.sigma, rng)).cast<float>();
  } else {
    const Eigen::MatrixXf original = ds.texts;
    for (std::size_t j = 0; j < noisy.size(); ++j) {
      ds.texts.col(noisy[j]) = original.col(noisy[(j + 1) % noisy.size()]);
    }
  }
  for (auto i : noisy) ds.true_match[static_cast<std::size_t>(i)] = 0;
  return ds;
}

void save(const PairDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  io::Header h;
  h.magic = kDatasetMagic;
  h.version = kDatasetVersion;
  h.fields = {static_cast<std::uint32_t>(ds.size()), static_cast<std::uint32_t>(ds.d_img()),
              static_cast<std::uint32_t>(ds.d_txt()), io::float_bits(ds.noise_rate)};
  h.tail = ds.seed;
  io::write_header(out, h);
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    io::write_f32(out, {ds.images.col(i).data(), static_cast<std::size_t>(ds.d_img())});
    io::write_f32(out, {ds.texts.col(i).data(), static_cast<std::size_t>(ds.d_txt())});
  }
  // Ground truth lives in its own trailing block.
  for (auto id : ds.pair_ids) io::write_u32(out, id);
  for (auto f : ds.true_match) io::write_u8(out, f);
  if (!out) throw FormatError("write failed for " + path);
}

PairDataset load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  const io::Header h = io::read_header(in, kDatasetMagic, kDatasetVersion);
  const auto n = static_cast<Eigen::Index>(h.fields[0]);
  const auto d_img = static_cast<Eigen::Index>(h.fields[1]);
  const auto d_txt = static_cast<Eigen::Index>(h.fields[2]);
  if (d_img == 0) throw FormatError("bad header field 'd_img': 0");
  if (d_txt == 0) throw FormatError("bad header field 'd_txt': 0");

  PairDataset ds;
  ds.noise_rate = io::bits_float(h.fields[3]);
  if (!(ds.noise_rate >= 0.0f && ds.noise_rate < 1.0f)) throw FormatError("bad header field 'noise_rate'");
  ds.seed = h.tail;
  ds.images.resize(d_img, n);
  ds.texts.resize(d_txt, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::string rec = "record " + std::to_string(i) + " of N=" + std::to_string(n);
    io::read_f32(in, {ds.images.col(i).data(), static_cast<std::size_t>(d_img)}, rec + " (image_raw)");
    io::read_f32(in, {ds.texts.col(i).data(), static_cast<std::size_t>(d_txt)}, rec + " (text_raw)");
  }
  ds.pair_ids.resize(static_cast<std::size_t>(n));
  for (auto& id : ds.pair_ids) id = io::read_u32(in, "pair_id block");
  ds.true_match.resize(static_cast<std::size_t>(n));
  for (auto& f : ds.true_match) {
    f = io::read_u8(in, "true_match block");
    if (f > 1) throw FormatError("bad true_match flag value " + std::to_string(f));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after true_match block");
  return ds;
}

void write_jsonl(const PairDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    const auto img = ds.images.col(i);
    const auto txt = ds.texts.col(i);
    nlohmann::json j{
        {"pair_id", ds.pair_ids[static_cast<std::size_t>(i)]},
        {"assumed_label", 1},
        {"true_match", ds.true_match[static_cast<std::size_t>(i)]},
        {"image_raw", std::vector<float>(img.data(), img.data() + img.size())},
        {"text_raw", std::vector<float>(txt.data(), txt.data() + txt.size())},
    };
    out << j.dump() << '\n';
  }
}

PairDataset subset(const PairDataset& ds, const std::vector<Eigen::Index>& indices) {
  PairDataset out;
  const auto n = static_cast<Eigen::Index>(indices.size());
  out.images.resize(ds.d_img(), n);
  out.texts.resize(ds.d_txt(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index i = indices[static_cast<std::size_t>(j)];
    if (i < 0 || i >= ds.size()) throw ParameterError("subset index out of range");
    out.images.col(j) = ds.images.col(i);
    out.texts.col(j) = ds.texts.col(i);
    out.true_match.push_back(ds.true_match[static_cast<std::size_t>(i)]);
    out.pair_ids.push_back(ds.pair_ids[static_cast<std::size_t>(i)]);
  }
  out.noise_rate = ds.noise_rate;
  out.seed = ds.seed;
  return out;
}

HoldoutSplit split_holdout(const PairDataset& ds, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ParameterError("holdout fraction must lie in (0, 1)");
  const auto n_hold = static_cast<Eigen::Index>(std::llround(fraction * static_cast<double>(ds.size())));
  if (n_hold < 1 || n_hold >= ds.size()) throw ParameterError("holdout split leaves an empty side");
  std::vector<Eigen::Index> train(static_cast<std::size_t>(ds.size() - n_hold));
  std::vector<Eigen::Index> hold(static_cast<std::size_t>(n_hold));
  std::iota(train.begin(), train.end(), Eigen::Index{0});
  std::iota(hold.begin(), hold.end(), ds.size() - n_hold);
  return {subset(ds, train), subset(ds, hold)};
}

TrainingSet training_view(const PairDataset& ds) {
  return TrainingSet{ds.images.cast<double>(), ds.texts.cast<double>(), ds.pair_ids};
}

}  // namespace repair
