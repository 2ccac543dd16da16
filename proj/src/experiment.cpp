#include "repair/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "repair/errors.hpp"

namespace repair {
namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  return out;
}

}  // namespace

std::string fmt(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(10);
  os << v;
  return os.str();
}

DetectionReport score_selection(const Eigen::VectorXd& w_a, const Eigen::VectorXd& w_b, double eta,
                                const std::vector<std::uint8_t>& true_match) {
  return detection_metrics(select_npr_candidates(w_a, w_b, eta), true_match, eta);
}

Experiment run_experiment(const PairDataset& ds, const TrainConfig& cfg, const ExperimentOptions& opts) {
  HoldoutSplit split = split_holdout(ds, opts.holdout_fraction);
  PairDataset validation = clean_holdout(split.holdout);
  const TrainingSet train_view = training_view(split.train);
  const TrainingSet val_view = training_view(validation);

  std::unordered_map<std::uint32_t, std::size_t> index_of;
  for (std::size_t i = 0; i < split.train.pair_ids.size(); ++i) index_of[split.train.pair_ids[i]] = i;
  const auto& flags = split.train.true_match;
  std::vector<EpochMetrics> metrics;
  const bool both_populations = std::count(flags.begin(), flags.end(), 0) > 0 &&
                                std::count(flags.begin(), flags.end(), 1) > 0;

  auto observer = [&](const EpochReport& rep, const TrainerState&) {
    EpochMetrics m;
    m.epoch = rep.epoch;
    if (rep.soft_labels && both_populations) m.separation = soft_label_separation(rep.soft_labels->y_star, flags);
    for (double eta : opts.eta_grid) m.detection.push_back(score_selection(rep.posteriors_a, rep.posteriors_b, eta, flags));
    if (!rep.replacements.empty()) {
      std::size_t bad = 0;
      for (const auto& r : rep.replacements) bad += flags[index_of.at(r.pair_id)] == 0;
      m.replacement_on_mismatched = static_cast<double>(bad) / static_cast<double>(rep.replacements.size());
    }
    metrics.push_back(std::move(m));
  };
  RunResult run = train(cfg, train_view, val_view, observer);
  return Experiment{std::move(split.train), std::move(validation), std::move(run), std::move(metrics)};
}

nlohmann::json config_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},       {"warmup_epochs", c.warmup_epochs},
          {"batch_size", c.batch_size}, {"lr", c.lr},
          {"lr_decay", c.lr_decay},   {"decay_epoch", c.decay_epoch},
          {"momentum", c.momentum},   {"alpha", c.alpha},
          {"m", c.m},                 {"p", c.p},
          {"eta", c.eta},             {"tau", c.tau},
          {"k", c.effective_k()},     {"bank_size", c.bank_size},
          {"embed_dim", c.embed_dim}, {"seed", c.seed},
          {"variant", to_string(c.variant)}, {"normalize_losses", c.normalize_losses}};
}

nlohmann::json retrieval_json(const RetrievalReport& r) {
  nlohmann::json j;
  for (const auto& [k, v] : r.i2t) j["i2t"]["R@" + std::to_string(k)] = v;
  for (const auto& [k, v] : r.t2i) j["t2i"]["R@" + std::to_string(k)] = v;
  j["rsum"] = r.r_sum;
  j["rsum_note"] = "1:1 pairing on synthetic data; comparable only across runs of this tool";
  return j;
}

std::vector<std::string> write_run_outputs(const Experiment& ex, const TrainConfig& cfg, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> written;
  auto path = [&](const char* name) {
    written.push_back((fs::path(dir) / name).string());
    return written.back();
  };
  const auto& run = ex.run;

  {
    auto out = open_out(path("epochs.csv"));
    out << "epoch,variant,lr,l_clean,l_noisy,clean_size_a,clean_size_b,npr_count,val_r1,val_r5,val_r10,soft_label_auc\n";
    for (std::size_t i = 0; i < run.epochs.size(); ++i) {
      const auto& e = run.epochs[i];
      const auto& m = ex.metrics[i];
      const auto v = e.validation.value_or(RetrievalReport{});
      auto avg = [&](int k) {
        return v.i2t.count(k) ? fmt(0.5 * (v.i2t.at(k) + v.t2i.at(k))) : std::string("nan");
      };
      out << e.epoch << ',' << to_string(e.variant) << ',' << fmt(e.lr) << ',' << fmt(e.l_clean) << ','
          << fmt(e.l_noisy) << ',' << e.clean_size_a << ',' << e.clean_size_b << ',' << e.npr_count << ','
          << avg(1) << ',' << avg(5) << ',' << avg(10) << ','
          << (m.separation ? fmt(m.separation->auc) : std::string("nan")) << '\n';
    }
  }
  {
    std::unordered_map<std::uint32_t, std::size_t> index_of;
    for (std::size_t i = 0; i < ex.train.pair_ids.size(); ++i) index_of[ex.train.pair_ids[i]] = i;
    auto out = open_out(path("npr_report.csv"));
    out << "epoch,network,pair_id,direction,bank_entry_index,similarity_of_replacement,was_truly_mismatched\n";
    for (const auto& e : run.epochs) {
      for (const auto& r : e.replacements) {
        out << r.epoch << ',' << r.network << ',' << r.pair_id << ',' << to_string(r.direction) << ','
            << r.bank_entry_index << ',' << fmt(r.similarity) << ','
            << (ex.train.true_match[index_of.at(r.pair_id)] == 0 ? 1 : 0) << '\n';
      }
    }
  }
  {
    auto out = open_out(path("soft_labels.csv"));
    out << "epoch,pair_id,corre,y_star,true_match\n";
    for (const auto& e : run.epochs) {
      if (!e.soft_labels) continue;
      for (Eigen::Index i = 0; i < e.soft_labels->corre.size(); ++i) {
        out << e.epoch << ',' << ex.train.pair_ids[static_cast<std::size_t>(i)] << ','
            << fmt(e.soft_labels->corre(i)) << ',' << fmt(e.soft_labels->y_star(i)) << ','
            << int(ex.train.true_match[static_cast<std::size_t>(i)]) << '\n';
      }
    }
  }
  {
    auto out = open_out(path("density.csv"));
    out << "epoch,bin_lo,bin_hi,clean_count,noisy_count\n";
    for (const auto& m : ex.metrics) {
      if (!m.separation) continue;
      for (int b = 0; b < kHistogramBins; ++b) {
        out << m.epoch << ',' << fmt(static_cast<double>(b) / kHistogramBins) << ','
            << fmt(static_cast<double>(b + 1) / kHistogramBins) << ',' << m.separation->hist_clean[b] << ','
            << m.separation->hist_noisy[b] << '\n';
      }
    }
  }
  {
    auto out = open_out(path("detection.csv"));
    out << "epoch,eta,accuracy,precision,recall,precision_undefined\n";
    for (const auto& m : ex.metrics) {
      for (const auto& d : m.detection) {
        out << m.epoch << ',' << fmt(d.eta_used) << ',' << fmt(d.accuracy) << ',' << fmt(d.precision) << ','
            << fmt(d.recall) << ',' << int(d.precision_undefined) << '\n';
      }
    }
  }
  {
    auto out = open_out(path("recall.csv"));
    out << "direction,K,value\n";
    for (const auto& [k, v] : run.best_validation.i2t) out << "img2txt," << k << ',' << fmt(v) << '\n';
    for (const auto& [k, v] : run.best_validation.t2i) out << "txt2img," << k << ',' << fmt(v) << '\n';
  }
  {
    auto out = open_out(path("gmm.jsonl"));
    for (const auto& e : run.epochs) {
      nlohmann::json j{{"epoch", e.epoch}};
      for (auto [name, fit] : {std::pair{"A", &e.fit_a}, std::pair{"B", &e.fit_b}}) {
        if (!*fit) {
          j[name] = nullptr;
          continue;
        }
        const auto& f = **fit;
        j[name] = {{"means", f.params.means},
                   {"variances", f.params.variances},
                   {"weights", f.params.weights},
                   {"iterations", f.iterations},
                   {"log_likelihood", f.log_likelihood}};
      }
      out << j.dump() << '\n';
    }
  }
  save_encoders(run.best_a, path("checkpoint_A.bin"));
  save_encoders(run.best_b, path("checkpoint_B.bin"));
  save_bank(run.final_state.bank_a, path("bank_A.bin"));
  save_bank(run.final_state.bank_b, path("bank_B.bin"));
  {
    nlohmann::json j;
    j["config"] = config_json(cfg);
    j["best_epoch"] = run.best_epoch;
    j["best_validation"] = retrieval_json(run.best_validation);
    j["best_mean_r1"] = run.best_validation.i2t.count(1) ? run.best_validation.mean_r1() : 0.0;
    j["warmup_loss_a"] = run.warmup.loss_a;
    j["warmup_loss_b"] = run.warmup.loss_b;
    j["train_size"] = ex.train.size();
    j["validation_size"] = ex.validation.size();
    if (!ex.metrics.empty() && ex.metrics.back().separation) j["final_soft_label_auc"] = ex.metrics.back().separation->auc;
    auto out = open_out(path("run.json"));
    out << j.dump(2) << '\n';
  }
  return written;
}

}  // namespace repair
