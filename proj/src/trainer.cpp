#include "repair/trainer.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>

#include "repair/rank_correlation.hpp"

namespace repair {
namespace {

constexpr Eigen::Index kMinLabelBatch = 10;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Stream seed for one (epoch, purpose). Both networks share it, so two
/// identical networks fed identical splits stay identical.
std::uint64_t stream_seed(std::uint64_t seed, int epoch, std::uint64_t purpose) {
  return splitmix64(splitmix64(seed ^ (purpose * 0x632be59bd9b4e019ull)) + static_cast<std::uint64_t>(epoch));
}

enum Purpose : std::uint64_t { kWarmupOrder = 1, kLossOrder, kCleanOrder, kNoisyOrder, kInit };

Eigen::MatrixXd columns(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) { return m(Eigen::all, idx); }

template <typename T>
std::vector<T> shuffled(std::vector<T> v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::shuffle(v.begin(), v.end(), rng);
  return v;
}

/// Chunk boundaries splitting n items into `parts` near-equal runs.
Eigen::Index bound(std::size_t n, int part, int parts) {
  return static_cast<Eigen::Index>(n * static_cast<std::size_t>(part) / static_cast<std::size_t>(parts));
}

/// One warm-up style epoch over `indices` (already ordered).
double warmup_pass(Encoders& net, MomentumSgd<double>& opt, const TrainingSet& data,
                   const std::vector<Eigen::Index>& order, const TrainConfig& cfg, double lr) {
  const auto n = static_cast<Eigen::Index>(order.size());
  double total = 0.0;
  int batches = 0;
  for (Eigen::Index start = 0; start < n;) {
    Eigen::Index end = std::min(n, start + cfg.batch_size);
    if (n - end < 2) end = n;
    const std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + end);
    if (idx.size() >= 2) {
      const auto lg = warmup_loss_and_grad(net, columns(data.images, idx), columns(data.texts, idx), cfg.alpha);
      opt.step(net, lg.grads, lr);
      total += lg.loss;
      ++batches;
    }
    start = end;
  }
  return batches ? total / batches : 0.0;
}

std::vector<Eigen::Index> all_indices(Eigen::Index n) {
  std::vector<Eigen::Index> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), Eigen::Index{0});
  return v;
}

void seed_bank(MemoryBank& bank, const Encoders& net, const TrainingSet& data, const TrainConfig& cfg,
               std::uint64_t order_seed) {
  const Eigen::VectorXd losses = per_sample_losses(net, data, cfg.alpha, cfg.batch_size, order_seed);
  const Selection sel = select_clean(losses, cfg.p, cfg.normalize_losses, cfg.gmm_max_iters, cfg.gmm_tol);
  std::vector<Eigen::Index> pool = sel.split.clean_ids;
  if (pool.size() < 2) pool = all_indices(data.size());
  std::stable_sort(pool.begin(), pool.end(), [&](Eigen::Index a, Eigen::Index b) { return losses(a) < losses(b); });
  pool.resize(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(bank.capacity())));
  // Highest loss first so the best pairs are the last to be evicted.
  std::reverse(pool.begin(), pool.end());
  const auto img = embed(net.w_img, columns(data.images, pool));
  const auto txt = embed(net.w_txt, columns(data.texts, pool));
  bank.push_batch(img.unit, txt.unit);
}

struct NetworkEpoch {
  double l_clean = 0.0;
  double l_noisy = 0.0;
  int batches = 0;
  Eigen::Index npr_count = 0;
  bool degenerate = false;
};

NetworkEpoch train_network(char name, Encoders& net, MomentumSgd<double>& opt, MemoryBank& bank,
                           const TrainingSet& data, const GmmSplit& split, const Eigen::VectorXd& w_a,
                           const Eigen::VectorXd& w_b, const TrainConfig& cfg, int epoch,
                           std::vector<ReplacementRecord>& records, const BatchHook& hook) {
  NetworkEpoch out;
  const double lr = cfg.lr_at(epoch);
  if (static_cast<Eigen::Index>(split.clean_ids.size()) < std::max(kMinLabelBatch, cfg.batch_size / 2)) {
    std::cerr << "warning: network " << name << " has " << split.clean_ids.size()
              << " clean pairs in epoch " << epoch << "; training warm-up style on all pairs\n";
    out.degenerate = true;
    out.l_clean = warmup_pass(net, opt, data, shuffled(all_indices(data.size()), stream_seed(cfg.seed, epoch, kCleanOrder)),
                              cfg, lr);
    out.batches = 1;
    return out;
  }

  const auto clean = shuffled(split.clean_ids, stream_seed(cfg.seed, epoch, kCleanOrder));
  const auto noisy = shuffled(split.noisy_ids, stream_seed(cfg.seed, epoch, kNoisyOrder));
  const int iters = std::max<int>(1, static_cast<int>(static_cast<Eigen::Index>(clean.size()) / cfg.batch_size));
  const bool rc = cfg.variant == Variant::kRcDrop || cfg.variant == Variant::kRepair;
  const NoisyLossOptions nopts{cfg.effective_k(), cfg.alpha, cfg.m};

  for (int it = 0; it < iters; ++it) {
    const std::vector<Eigen::Index> cb(clean.begin() + bound(clean.size(), it, iters),
                                       clean.begin() + bound(clean.size(), it + 1, iters));
    const std::vector<Eigen::Index> nb(noisy.begin() + bound(noisy.size(), it, iters),
                                       noisy.begin() + bound(noisy.size(), it + 1, iters));
    const Eigen::MatrixXd ci = columns(data.images, cb);
    const Eigen::MatrixXd ct = columns(data.texts, cb);
    const auto cimg = embed(net.w_img, ci);
    const auto ctxt = embed(net.w_txt, ct);
    const BankSnapshot snap = bank.snapshot();  // labels use the pre-push bank

    const auto nc = static_cast<Eigen::Index>(cb.size());
    Eigen::VectorXd margins = Eigen::VectorXd::Constant(nc, cfg.alpha);
    LabelAnchors anchors;
    if (rc && snap.size() >= 2) {
      const SoftLabelSet labels = normalize_labels(correlations(snap, cimg.unit, ctxt.unit));
      for (Eigen::Index i = 0; i < nc; ++i) margins(i) = soft_margin(labels.y_star(i), cfg.m, cfg.alpha);
      anchors = {labels.gamma, labels.mu, labels.degenerate};
    }

    LossAndGrad<double> step;
    if (cfg.variant == Variant::kHard && !nb.empty()) {
      std::vector<Eigen::Index> joint = cb;
      joint.insert(joint.end(), nb.begin(), nb.end());
      Eigen::VectorXd jm = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(joint.size()));
      jm.head(nc) = margins;
      step = triplet_loss_and_grad(net, columns(data.images, joint), columns(data.texts, joint), jm);
    } else {
      step = triplet_loss_and_grad(net, ci, ct, margins);
    }
    out.l_clean += step.loss;

    if (cfg.variant == Variant::kRepair && snap.size() >= 2) {
      std::vector<Eigen::Index> sel;
      for (auto i : nb) {
        if (w_a(i) < cfg.eta && w_b(i) < cfg.eta) sel.push_back(i);
      }
      if (!sel.empty()) {
        std::vector<std::uint32_t> ids;
        for (auto i : sel) ids.push_back(data.pair_ids[static_cast<std::size_t>(i)]);
        const NoisyLoss nl = noisy_loss(net, snap, columns(data.images, sel), columns(data.texts, sel), ids, anchors, nopts);
        out.l_noisy += nl.loss;
        out.npr_count += static_cast<Eigen::Index>(sel.size());
        // Skipped at tau = 0 so the update matches rc-drop bit for bit (0 * g can be -0).
        if (cfg.tau != 0.0) {
          step.grads.img += cfg.tau * nl.grads.img;
          step.grads.txt += cfg.tau * nl.grads.txt;
        }
        for (const auto& r : nl.replacements) {
          records.push_back({epoch, name, r.source_pair_id, r.direction, r.bank_entry_index, r.similarity});
        }
      }
    }

    bank.push_batch(cimg.unit, ctxt.unit);
    if (hook) hook(name, it, step.grads);
    opt.step(net, step.grads, lr);
    ++out.batches;
  }
  return out;
}

}  // namespace

const char* to_string(Variant v) {
  switch (v) {
    case Variant::kHard: return "hard";
    case Variant::kDrop: return "drop";
    case Variant::kRcDrop: return "rc-drop";
    case Variant::kRepair: return "repair";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::kHard, Variant::kDrop, Variant::kRcDrop, Variant::kRepair}) {
    if (s == to_string(v)) return v;
  }
  throw ParameterError("unknown variant '" + s + "' (expected hard, drop, rc-drop or repair)");
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ParameterError(std::string("invalid config: ") + what);
  };
  require(warmup_epochs >= 1, "warmup_epochs must be >= 1");
  require(warmup_epochs < epochs, "warmup_epochs must be < epochs");
  require(batch_size >= kMinLabelBatch, "batch_size must be >= 10");
  require(lr > 0.0, "lr must be > 0");
  require(lr_decay > 0.0 && lr_decay <= 1.0, "lr_decay must lie in (0, 1]");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
  require(alpha >= 0.0, "alpha must be >= 0");
  require(m > 1.0, "m must be > 1");
  require(p > 0.0 && p < 1.0, "p must lie in (0, 1)");
  require(eta >= 0.0 && eta < 1.0, "eta must lie in [0, 1)");
  require(tau >= 0.0, "tau must be >= 0");
  require(!k || *k >= 1, "k must be >= 1");
  require(bank_size >= 2, "bank_size must be >= 2");
  require(embed_dim >= 1, "embed_dim must be >= 1");
}

TrainerState init_state(const TrainConfig& cfg, Eigen::Index d_img, Eigen::Index d_txt) {
  cfg.validate();
  std::mt19937_64 rng(stream_seed(cfg.seed, 0, kInit));
  Encoders a = random_encoders<double>(cfg.embed_dim, d_img, d_txt, rng);
  Encoders b = cfg.shared_init ? a : random_encoders<double>(cfg.embed_dim, d_img, d_txt, rng);
  return TrainerState{std::move(a),
                      std::move(b),
                      MemoryBank(cfg.bank_size, cfg.embed_dim),
                      MemoryBank(cfg.bank_size, cfg.embed_dim),
                      MomentumSgd<double>(cfg.momentum),
                      MomentumSgd<double>(cfg.momentum),
                      0};
}

WarmupReport warmup(TrainerState& s, const TrainingSet& data, const TrainConfig& cfg) {
  if (cfg.warmup_epochs < 1) throw ParameterError("warmup_epochs must be >= 1");
  WarmupReport r;
  for (int e = 0; e < cfg.warmup_epochs; ++e, ++s.epoch) {
    const auto order = shuffled(all_indices(data.size()), stream_seed(cfg.seed, s.epoch, kWarmupOrder));
    r.loss_a.push_back(warmup_pass(s.net_a, s.opt_a, data, order, cfg, cfg.lr_at(s.epoch)));
    r.loss_b.push_back(warmup_pass(s.net_b, s.opt_b, data, order, cfg, cfg.lr_at(s.epoch)));
  }
  const std::uint64_t order_seed = stream_seed(cfg.seed, s.epoch, kLossOrder);
  seed_bank(s.bank_a, s.net_a, data, cfg, order_seed);
  seed_bank(s.bank_b, s.net_b, data, cfg, order_seed);
  return r;
}

SoftLabelDiagnostics soft_label_diagnostics(const TrainerState& s, const TrainingSet& data, const TrainConfig& cfg) {
  const BankSnapshot snap = s.bank_a.snapshot();
  const Eigen::Index n = data.size();
  SoftLabelDiagnostics d{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  const Eigen::Index chunk = std::max(cfg.batch_size, kMinLabelBatch);
  for (Eigen::Index start = 0; start < n;) {
    Eigen::Index end = std::min(n, start + chunk);
    if (n - end < kMinLabelBatch) end = n;
    const Eigen::Index len = end - start;
    const auto img = embed(s.net_a.w_img, data.images.middleCols(start, len));
    const auto txt = embed(s.net_a.w_txt, data.texts.middleCols(start, len));
    const Eigen::VectorXd corre = correlations(snap, img.unit, txt.unit);
    d.corre.segment(start, len) = corre;
    if (len >= kMinLabelBatch) d.y_star.segment(start, len) = normalize_labels(corre).y_star;
    start = end;
  }
  return d;
}

EpochReport train_epoch(TrainerState& s, const TrainingSet& data, const TrainConfig& cfg,
                        const TrainingSet* validation, const BatchHook& hook) {
  EpochReport r;
  r.epoch = s.epoch;
  r.variant = cfg.variant;
  r.lr = cfg.lr_at(s.epoch);

  const std::uint64_t loss_seed = stream_seed(cfg.seed, s.epoch, kLossOrder);
  const Eigen::VectorXd losses_a = per_sample_losses(s.net_a, data, cfg.alpha, cfg.batch_size, loss_seed);
  const Eigen::VectorXd losses_b = per_sample_losses(s.net_b, data, cfg.alpha, cfg.batch_size, loss_seed);
  Selection sel_a = select_clean(losses_a, cfg.p, cfg.normalize_losses, cfg.gmm_max_iters, cfg.gmm_tol);
  Selection sel_b = select_clean(losses_b, cfg.p, cfg.normalize_losses, cfg.gmm_max_iters, cfg.gmm_tol);
  r.posteriors_a = sel_a.split.posteriors;
  r.posteriors_b = sel_b.split.posteriors;
  r.clean_size_a = static_cast<Eigen::Index>(sel_a.split.clean_ids.size());
  r.clean_size_b = static_cast<Eigen::Index>(sel_b.split.clean_ids.size());
  r.fit_a = sel_a.fit;
  r.fit_b = sel_b.fit;

  // Co-teaching: each network learns from the other's partition.
  const NetworkEpoch ea = train_network('A', s.net_a, s.opt_a, s.bank_a, data, sel_b.split, r.posteriors_a,
                                        r.posteriors_b, cfg, s.epoch, r.replacements, hook);
  const NetworkEpoch eb = train_network('B', s.net_b, s.opt_b, s.bank_b, data, sel_a.split, r.posteriors_a,
                                        r.posteriors_b, cfg, s.epoch, r.replacements, hook);
  const int batches = ea.batches + eb.batches;
  r.l_clean = batches ? (ea.l_clean + eb.l_clean) / batches : 0.0;
  r.l_noisy = batches ? (ea.l_noisy + eb.l_noisy) / batches : 0.0;
  r.npr_count = ea.npr_count + eb.npr_count;
  r.degenerate = ea.degenerate || eb.degenerate;
  ++s.epoch;

  if (cfg.collect_diagnostics) r.soft_labels = soft_label_diagnostics(s, data, cfg);
  if (validation && validation->size() > 0) {
    r.validation = retrieval_report(average_similarity(s.net_a, s.net_b, *validation));
  }
  return r;
}

RunResult train(const TrainConfig& cfg, const TrainingSet& data, const TrainingSet& validation,
                const EpochObserver& observer) {
  cfg.validate();
  RunResult out{init_state(cfg, data.images.rows(), data.texts.rows()), {}, {}, -1, {}, {}, {}};
  TrainerState& s = out.final_state;
  out.warmup = warmup(s, data, cfg);
  double best = -1.0;
  while (s.epoch < cfg.epochs) {
    EpochReport rep = train_epoch(s, data, cfg, &validation);
    if (rep.validation && rep.validation->mean_r1() > best) {
      best = rep.validation->mean_r1();
      out.best_epoch = rep.epoch;
      out.best_validation = *rep.validation;
      out.best_a = s.net_a;
      out.best_b = s.net_b;
    }
    if (observer) observer(rep, s);
    out.epochs.push_back(std::move(rep));
  }
  if (out.best_epoch < 0) {
    out.best_a = s.net_a;
    out.best_b = s.net_b;
  }
  return out;
}

}  // namespace repair
