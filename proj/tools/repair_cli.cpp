// repair_cli: dataset generation, training runs, ablations and sweeps.
//
// Exit codes: 0 success, 1 ordering assertion failed, 2 usage error,
// 3 runtime or data error.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "repair/binary_io.hpp"
#include "repair/dataset.hpp"
#include "repair/errors.hpp"
#include "repair/experiment.hpp"
#include "repair/memory_bank.hpp"

#ifndef REPAIR_VERSION
#define REPAIR_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace repair;

namespace {

constexpr int kExitOrdering = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string default_out_root() {
  const char* env = std::getenv("REPAIR_OUT_DIR");
  return env && *env ? env : "runs";
}

std::ofstream open_csv(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + p.string() + " for writing");
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// "a:b:step" (inclusive) or "v1,v2,...".
std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw ParameterError("--grid: cannot parse '" + s + "'");
    return v;
  };
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw ParameterError("--grid: range form is start:stop:step");
    const double a = number(parts[0]), b = number(parts[1]), step = number(parts[2]);
    if (!(step > 0.0)) throw ParameterError("--grid: step must be positive");
    for (int i = 0;; ++i) {
      const double v = std::round((a + i * step) * 1e12) / 1e12;
      if (v > b + 1e-9) break;
      out.push_back(v);
    }
  } else {
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ',');) {
      if (!p.empty()) out.push_back(number(p));
    }
  }
  if (out.empty()) throw ParameterError("--grid: empty grid");
  return out;
}

/// Expands `--config FILE` into --key=value arguments placed before the
/// user's own flags; with take-last semantics the explicit flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  std::vector<std::string> from_file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw CLI::ArgumentMismatch("--config requires a file argument");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      out.push_back(args[i]);
      continue;
    }
    std::ifstream in(path);
    if (!in) throw CLI::ValidationError("--config", "cannot read " + path);
    for (std::string line; std::getline(in, line);) {
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      line = line.substr(first);
      line.erase(line.find_last_not_of(" \t\r") + 1);
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw CLI::ValidationError("--config", "expected key=value, got '" + line + "'");
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t") + 1);
        return s;
      };
      from_file.push_back("--" + trim(line.substr(0, eq)) + "=" + trim(line.substr(eq + 1)));
    }
  }
  // Insert after the subcommand name (the first non-option argument).
  auto pos = std::find_if(out.begin(), out.end(), [](const std::string& s) { return s.rfind("-", 0) != 0; });
  if (pos != out.end()) ++pos;
  out.insert(pos, from_file.begin(), from_file.end());
  return out;
}

struct DatasetFlags {
  std::string path;
  double holdout = 0.1;
};

void add_train_flags(CLI::App* cmd, TrainConfig& c, std::string& variant, int& k, bool& no_norm) {
  cmd->add_option("--variant", variant, "hard | drop | rc-drop | repair")
      ->check(CLI::IsMember({"hard", "drop", "rc-drop", "repair"}))
      ->capture_default_str();
  cmd->add_option("--epochs", c.epochs, "Total epochs including warm-up")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--warmup-epochs", c.warmup_epochs)->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--batch-size", c.batch_size)->check(CLI::Range(10, 1 << 20))->capture_default_str();
  cmd->add_option("--lr", c.lr)->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--lr-decay", c.lr_decay, "Learning-rate factor applied from --decay-epoch on")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--decay-epoch", c.decay_epoch)->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--momentum", c.momentum)->check(CLI::Range(0.0, 0.999999))->capture_default_str();
  cmd->add_option("--alpha", c.alpha, "Triplet margin")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--m", c.m, "Soft-margin curvature base (> 1)")->capture_default_str();
  cmd->add_option("--p", c.p, "Clean posterior threshold")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  cmd->add_option("--eta", c.eta, "Noisy-pair selection threshold")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  cmd->add_option("--tau", c.tau, "Weight of the half-replaced noisy term")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--k", k, "Replacement candidates (0: 32 if bank >= 1024, else 8)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--bank-size", c.bank_size)->check(CLI::Range(2, 1 << 24))->capture_default_str();
  cmd->add_option("--embed-dim", c.embed_dim)->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--seed", c.seed)->capture_default_str();
  cmd->add_flag("--no-loss-norm", no_norm, "Fit the mixture on raw losses");
}

TrainConfig finish_config(TrainConfig c, const std::string& variant, int k, bool no_norm) {
  c.variant = parse_variant(variant);
  if (k > 0) c.k = k;
  c.normalize_losses = !no_norm;
  c.validate();
  return c;
}

PairDataset load_dataset(const std::string& path) {
  if (!fs::exists(path)) throw FormatError("dataset file not found: " + path);
  return load(path);
}

nlohmann::json manifest(const TrainConfig& cfg, const std::string& dataset, const std::string& started,
                        const std::vector<std::string>& outputs, const std::string& command) {
  nlohmann::json j;
  j["command"] = command;
  j["version"] = std::string("repair_cli ") + REPAIR_VERSION;
  j["config"] = config_json(cfg);
  j["dataset"] = dataset;
  j["dataset_fingerprint"] = io::hex64(io::file_fingerprint(dataset));
  j["started_at"] = started;
  j["finished_at"] = utc_now();
  j["outputs"] = outputs;
  return j;
}

void write_manifest(const fs::path& dir, nlohmann::json j) {
  const fs::path p = dir / "manifest.json";
  std::vector<std::string> outputs = j["outputs"];
  for (const auto& o : outputs) {
    if (!fs::exists(o) || fs::file_size(o) == 0) throw FormatError("declared output missing or empty: " + o);
  }
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw FormatError("cannot write " + p.string());
}

ExperimentOptions experiment_options(double holdout) {
  ExperimentOptions o;
  o.holdout_fraction = holdout;
  return o;
}

/// Final-epoch summary used by ablate and sweep rows.
struct RunSummary {
  double r1_i2t = 0.0, r1_t2i = 0.0, mean_r1 = 0.0, r_sum = 0.0;
  double auc = std::numeric_limits<double>::quiet_NaN();
  std::vector<DetectionReport> detection;
  int best_epoch = -1;
};

RunSummary summarize(const Experiment& ex) {
  RunSummary s;
  const auto& v = ex.run.best_validation;
  if (v.i2t.count(1)) {
    s.r1_i2t = v.i2t.at(1);
    s.r1_t2i = v.t2i.at(1);
    s.mean_r1 = v.mean_r1();
  }
  s.r_sum = v.r_sum;
  s.best_epoch = ex.run.best_epoch;
  if (!ex.metrics.empty()) {
    if (ex.metrics.back().separation) s.auc = ex.metrics.back().separation->auc;
    s.detection = ex.metrics.back().detection;
  }
  return s;
}

int cmd_generate(const GenerateOptions& g, const std::string& out, const std::string& jsonl) {
  const PairDataset ds = generate(g);
  if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  save(ds, out);
  if (!jsonl.empty()) write_jsonl(ds, jsonl);
  std::cout << "wrote " << out << " (" << ds.size() << " pairs)\nfingerprint " << io::hex64(io::file_fingerprint(out))
            << '\n';
  return 0;
}

int cmd_train(const TrainConfig& cfg, const DatasetFlags& d, std::string out, bool tau_given) {
  const std::string started = utc_now();
  if (tau_given && cfg.variant != Variant::kRepair) {
    std::cerr << "warning: --tau is ignored for the " << to_string(cfg.variant) << " variant\n";
  }
  const PairDataset ds = load_dataset(d.path);
  if (out.empty()) {
    out = (fs::path(default_out_root()) / ("train-" + std::string(to_string(cfg.variant)) + "-seed" +
                                           std::to_string(cfg.seed)))
              .string();
  }
  const Experiment ex = run_experiment(ds, cfg, experiment_options(d.holdout));
  auto outputs = write_run_outputs(ex, cfg, out);
  write_manifest(out, manifest(cfg, d.path, started, outputs, "train"));
  const auto s = summarize(ex);
  std::cout << "best epoch " << s.best_epoch << "  R@1 i2t " << fmt(s.r1_i2t) << "  t2i " << fmt(s.r1_t2i)
            << "  rsum " << fmt(s.r_sum) << "\nrun directory " << out << '\n';
  return 0;
}

int cmd_ablate(TrainConfig base, const DatasetFlags& d, int seeds, std::string out, bool assert_ordering) {
  const std::string started = utc_now();
  if (seeds < 1) throw ParameterError("--seeds must be >= 1");
  const PairDataset ds = load_dataset(d.path);
  if (out.empty()) out = (fs::path(default_out_root()) / "ablate").string();
  fs::create_directories(out);

  const std::vector<Variant> variants{Variant::kHard, Variant::kDrop, Variant::kRcDrop, Variant::kRepair};
  const fs::path csv_path = fs::path(out) / "ablation.csv";
  auto csv = open_csv(csv_path);
  csv << "variant,seed,r1_i2t,r1_t2i,mean_r1,rsum,soft_label_auc,best_epoch\n";
  std::vector<double> med(variants.size());
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    std::vector<double> r1, rsum, auc;
    for (int s = 0; s < seeds; ++s) {
      TrainConfig cfg = base;
      cfg.variant = variants[vi];
      cfg.seed = base.seed + static_cast<std::uint64_t>(s);
      const auto sum = summarize(run_experiment(ds, cfg, experiment_options(d.holdout)));
      r1.push_back(sum.mean_r1);
      rsum.push_back(sum.r_sum);
      const bool rc = variants[vi] == Variant::kRcDrop || variants[vi] == Variant::kRepair;
      if (rc) auc.push_back(sum.auc);
      csv << to_string(cfg.variant) << ',' << cfg.seed << ',' << fmt(sum.r1_i2t) << ',' << fmt(sum.r1_t2i) << ','
          << fmt(sum.mean_r1) << ',' << fmt(sum.r_sum) << ',' << (rc ? fmt(sum.auc) : std::string("nan")) << ','
          << sum.best_epoch << '\n';
      std::cerr << to_string(cfg.variant) << " seed " << cfg.seed << " R@1 " << fmt(sum.mean_r1) << '\n';
    }
    med[vi] = median(r1);
    csv << to_string(variants[vi]) << ",median,nan,nan," << fmt(med[vi]) << ',' << fmt(median(rsum)) << ','
        << (auc.empty() ? std::string("nan") : fmt(median(auc))) << ",nan\n";
  }
  csv.close();
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    std::cout << to_string(variants[vi]) << " median R@1 " << fmt(med[vi]) << '\n';
  }
  const bool chain = med[3] >= med[2] && med[2] >= med[1] && med[1] >= med[0];
  std::cout << "ordering repair >= rc-drop >= drop >= hard: " << (chain ? "holds" : "violated") << '\n';
  write_manifest(out, manifest(base, d.path, started, {csv_path.string()}, "ablate"));
  if (assert_ordering && med[3] < med[0]) {
    std::cerr << "error: median repair R@1 is below median hard R@1\n";
    return kExitOrdering;
  }
  return 0;
}

int cmd_sweep(TrainConfig base, const DatasetFlags& d, const std::string& param, const std::string& grid_spec,
              int seeds, std::string out) {
  const std::string started = utc_now();
  const std::vector<double> grid = parse_grid(grid_spec);
  if (seeds < 1) throw ParameterError("--seeds must be >= 1");
  const PairDataset ds = load_dataset(d.path);
  if (out.empty()) out = (fs::path(default_out_root()) / ("sweep-" + param)).string();
  fs::create_directories(out);

  const fs::path csv_path = fs::path(out) / "sweep.csv";
  auto csv = open_csv(csv_path);
  csv << "param,value,seed,mean_r1,rsum,soft_label_auc,eta_precision,eta_recall,eta_accuracy\n";
  std::vector<double> med;
  for (double value : grid) {
    TrainConfig cfg = base;
    if (param == "eta") cfg.eta = value;
    else if (param == "tau") cfg.tau = value;
    else cfg.bank_size = static_cast<Eigen::Index>(std::llround(value));
    if (param == "eta" || param == "tau") cfg.variant = Variant::kRepair;
    cfg.validate();
    ExperimentOptions opts = experiment_options(d.holdout);
    opts.eta_grid = {cfg.eta};
    std::vector<double> r1;
    for (int s = 0; s < seeds; ++s) {
      cfg.seed = base.seed + static_cast<std::uint64_t>(s);
      const auto sum = summarize(run_experiment(ds, cfg, opts));
      const DetectionReport det = sum.detection.empty() ? DetectionReport{} : sum.detection.front();
      r1.push_back(sum.mean_r1);
      csv << param << ',' << fmt(value) << ',' << cfg.seed << ',' << fmt(sum.mean_r1) << ',' << fmt(sum.r_sum) << ','
          << fmt(sum.auc) << ',' << (det.precision_undefined ? std::string("nan") : fmt(det.precision)) << ','
          << fmt(det.recall) << ',' << fmt(det.accuracy) << '\n';
      std::cerr << param << '=' << fmt(value) << " seed " << cfg.seed << " R@1 " << fmt(sum.mean_r1) << '\n';
    }
    med.push_back(median(r1));
  }
  csv.close();
  const auto best = std::max_element(med.begin(), med.end()) - med.begin();
  std::cout << param << " sweep: best median R@1 " << fmt(med[static_cast<std::size_t>(best)]) << " at "
            << fmt(grid[static_cast<std::size_t>(best)]);
  if (best > 0 && static_cast<std::size_t>(best) + 1 < grid.size()) std::cout << " (interior maximum)";
  std::cout << '\n';
  write_manifest(out, manifest(base, d.path, started, {csv_path.string()}, "sweep --param " + param));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noisy-correspondence training with rank-correlation soft margins and half-replaced noisy pairs"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_version_flag("--version", std::string(REPAIR_VERSION));
  app.add_option("--config", "Flat key=value file using flag names; explicit flags take precedence");

  GenerateOptions gen;
  std::string gen_out = "dataset.bin", gen_jsonl;
  auto* g = app.add_subcommand("generate", "Write a synthetic paired dataset with injected mismatches");
  g->add_option("--n", gen.n)->check(CLI::Range(1, 1 << 26))->capture_default_str();
  g->add_option("--d-latent", gen.d_latent)->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--d-img", gen.d_img)->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--d-txt", gen.d_txt)->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--noise-rate", gen.noise_rate)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  g->add_option("--sigma", gen.sigma)->check(CLI::NonNegativeNumber)->capture_default_str();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_option("--out", gen_out)->capture_default_str();
  g->add_option("--jsonl", gen_jsonl, "Also write a JSON-lines dump");

  TrainConfig cfg;
  std::string variant = to_string(cfg.variant);
  int k = 0;
  bool no_norm = false;
  DatasetFlags data;
  std::string out;
  int seeds = 5;
  bool assert_ordering = false;
  std::string param, grid;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--dataset", data.path, "Dataset file from `generate`")->required();
    cmd->add_option("--holdout", data.holdout, "Trailing fraction held out for validation")
        ->check(CLI::Range(0.01, 0.5))
        ->capture_default_str();
    cmd->add_option("--out", out, "Output directory (default: $REPAIR_OUT_DIR or ./runs)");
    add_train_flags(cmd, cfg, variant, k, no_norm);
  };
  auto* t = app.add_subcommand("train", "Train one variant and write per-epoch reports");
  add_common(t);
  auto* a = app.add_subcommand("ablate", "Run all four variants over several seeds");
  add_common(a);
  a->add_option("--seeds", seeds)->check(CLI::PositiveNumber)->capture_default_str();
  a->add_flag("--assert-ordering", assert_ordering, "Exit 1 when median repair R@1 is below median hard");
  auto* s = app.add_subcommand("sweep", "Sweep one hyperparameter");
  add_common(s);
  s->add_option("--param", param)->required()->check(CLI::IsMember({"eta", "bank-size", "tau"}));
  s->add_option("--grid", grid, "start:stop:step or comma list")->required();
  int sweep_seeds = 1;
  s->add_option("--seeds", sweep_seeds)->check(CLI::PositiveNumber)->capture_default_str();

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (g->parsed()) return cmd_generate(gen, gen_out, gen_jsonl);
    const TrainConfig c = finish_config(cfg, variant, k, no_norm);
    if (t->parsed()) return cmd_train(c, data, out, t->count("--tau") > 0);
    if (a->parsed()) return cmd_ablate(c, data, seeds, out, assert_ordering);
    if (s->parsed()) return cmd_sweep(c, data, param, grid, sweep_seeds, out);
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
