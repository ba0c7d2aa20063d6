#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "mslmn/checkpoint.hpp"
#include "mslmn/config.hpp"
#include "mslmn/errors.hpp"
#include "mslmn/laes.hpp"
#include "mslmn/mslmn.hpp"
#include "mslmn/tasks.hpp"
#include "mslmn/trainer.hpp"

namespace mslmn {

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;  // overrides the config
  std::optional<std::uint64_t> seed;             // overrides the config's seed list
  bool quiet = false;
  std::size_t threads = 1;  // concurrent seed runs
};

struct RunSummary {
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  std::string metric_name;
  double metric = 0.0;  // final parameters on the test split
  double best_metric = 0.0;
  std::size_t param_count = 0;
  std::size_t module_count = 0;
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
  bool aborted = false;
  bool early_stopped = false;
  std::string error;
};

// MSLMN_THREADS caps concurrent seed runs; unset or invalid means 1.
inline std::size_t threads_from_env() {
  const char* v = std::getenv("MSLMN_THREADS");
  if (v == nullptr) return 1;
  const auto n = detail::parse_double(v);
  if (!n || *n < 1) return 1;
  return static_cast<std::size_t>(*n);
}

inline const char* metric_name_for(TaskKind kind) noexcept {
  return kind == TaskKind::regression ? "nmse" : "accuracy";
}

inline nlohmann::json summary_to_json(const RunSummary& s) {
  nlohmann::json j = {{"seed", s.seed},
                      {"metric_name", s.metric_name},
                      {"metric", s.metric},
                      {"best_metric", s.best_metric},
                      {"param_count", s.param_count},
                      {"module_count", s.module_count},
                      {"epochs", s.epochs},
                      {"best_epoch", s.best_epoch},
                      {"aborted", s.aborted},
                      {"early_stopped", s.early_stopped}};
  if (!s.error.empty()) j["error"] = s.error;
  return j;
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

namespace detail {

class Console {
 public:
  Console(std::ostream* out, bool quiet) : out_(out), quiet_(quiet) {}
  void line(const std::string& s) {
    if (quiet_ || out_ == nullptr) return;
    std::lock_guard lock(mu_);
    *out_ << s << '\n' << std::flush;
  }

 private:
  std::ostream* out_;
  bool quiet_;
  std::mutex mu_;
};

inline RunSummary train_one(const ExperimentConfig& cfg, const SequenceDataset& data, std::uint64_t seed,
                            const std::filesystem::path& dir, Console& console) {
  std::filesystem::create_directories(dir);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  MetricsWriter metrics(dir / "metrics.csv");
  const std::string tag = "[seed " + std::to_string(seed) + "] ";
  auto on_epoch = [&](const MetricsRecord& r, const MsLmnParams&) {
    metrics.append(r);
    console.line(tag + "epoch " + std::to_string(r.epoch) + " modules " + std::to_string(r.module_count) +
                 " train_loss " + format_real(r.train_loss) + " val_loss " + format_real(r.val_loss) + " " +
                 metric_name_for(data.kind) + " " + format_real(r.metric));
  };

  TrainResult result;
  if (cfg.mode == TrainMode::fixed) {
    std::mt19937_64 init_rng(seed);
    MsLmnParams init =
        random_mslmn(data.n_x, cfg.arch.n_h, cfg.arch.n_m, data.n_y, cfg.arch.modules, init_rng, cfg.arch.bias);
    result = train_fixed(data, std::move(init), tc, on_epoch);
  } else {
    result = incremental_train(data, cfg.arch, tc, on_epoch);
  }
  for (const auto& msg : result.log) console.line(tag + msg);

  const std::size_t epochs = result.metrics.empty() ? 0 : result.metrics.back().epoch;
  save_checkpoint({result.params, data.kind, epochs, result.rng_state, std::nullopt}, dir / "final.json");
  save_checkpoint({result.best_params, data.kind, result.best_epoch, result.rng_state, std::nullopt},
                  dir / "best.json");

  RunSummary s;
  s.seed = seed;
  s.dir = dir;
  s.metric_name = metric_name_for(data.kind);
  s.metric = evaluate(result.params, data, data.test_indices()).metric;
  s.best_metric = evaluate(result.best_params, data, data.test_indices()).metric;
  s.param_count = count_params(result.params);
  s.module_count = result.params.g();
  s.epochs = epochs;
  s.best_epoch = result.best_epoch;
  s.aborted = result.aborted;
  s.early_stopped = result.early_stopped;
  write_json(summary_to_json(s), dir / "summary.json");
  console.line(tag + "done: " + s.metric_name + " " + format_real(s.metric) + (s.aborted ? " (aborted)" : ""));
  return s;
}

}  // namespace detail

// Trains every configured seed. A single seed writes straight into the
// output directory; several seeds get one seed_<n> subdirectory each plus an
// aggregate summary.json. Returns 0 iff no run aborted.
inline int cmd_train(const ExperimentConfig& config, const RunOptions& opts, std::ostream* console_out) {
  ExperimentConfig cfg = config;
  if (opts.out_dir) cfg.out_dir = *opts.out_dir;
  if (opts.seed) {
    cfg.seeds.clear();
    cfg.train.seed = *opts.seed;
  }
  const SequenceDataset data = build_dataset(cfg.task);
  const std::vector<std::uint64_t> seeds = cfg.run_seeds();
  const bool multi = seeds.size() > 1;
  std::filesystem::create_directories(cfg.out_dir);
  detail::Console console(console_out, opts.quiet);

  std::vector<RunSummary> runs(seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      const auto dir = multi ? cfg.out_dir / ("seed_" + std::to_string(seeds[i])) : cfg.out_dir;
      try {
        runs[i] = detail::train_one(cfg, data, seeds[i], dir, console);
      } catch (const std::exception& e) {
        runs[i].seed = seeds[i];
        runs[i].dir = dir;
        runs[i].aborted = true;
        runs[i].error = e.what();
        console.line("[seed " + std::to_string(seeds[i]) + "] error: " + e.what());
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(opts.threads, 1, seeds.size());
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  bool ok = std::none_of(runs.begin(), runs.end(), [](const RunSummary& r) { return r.aborted; });
  if (multi) {
    double mean = 0.0;
    for (const auto& r : runs) mean += r.metric;
    mean /= static_cast<double>(runs.size());
    double var = 0.0;
    for (const auto& r : runs) var += (r.metric - mean) * (r.metric - mean);
    const double stdev = std::sqrt(var / static_cast<double>(runs.size()));
    nlohmann::json j;
    j["metric_name"] = metric_name_for(data.kind);
    j["metric_mean"] = mean;
    j["metric_std"] = stdev;
    j["runs"] = nlohmann::json::array();
    for (const auto& r : runs) {
      auto rj = summary_to_json(r);
      rj["dir"] = r.dir.filename().string();
      j["runs"].push_back(std::move(rj));
    }
    j["aborted"] = !ok;
    write_json(j, cfg.out_dir / "summary.json");
    console.line(std::string(metric_name_for(data.kind)) + " mean " + format_real(mean) + " std " + format_real(stdev));
  }
  return ok ? 0 : 1;
}

enum class EvalSplit { train, validation, test };

inline EvalSplit eval_split_from_string(const std::string& s) {
  if (s == "train") return EvalSplit::train;
  if (s == "val" || s == "validation") return EvalSplit::validation;
  if (s == "test") return EvalSplit::test;
  throw InputError("unknown split '" + s + "' (train, val or test)");
}

struct EvalReport {
  std::string metric_name;
  double metric = 0.0;
  double loss = 0.0;
  std::size_t items = 0;
};

inline EvalReport evaluate_checkpoint(const Checkpoint& ck, const SequenceDataset& data, EvalSplit split) {
  const MsLmnParams& p = ck.params;
  if (ck.task_kind != data.kind) {
    throw ModeError(std::string("checkpoint is a ") + to_string(ck.task_kind) + " model, dataset is " +
                    to_string(data.kind));
  }
  if (p.n_x != data.n_x || p.n_y != data.n_y) {
    throw DimensionError("checkpoint expects N_x=" + std::to_string(p.n_x) + ", N_y=" + std::to_string(p.n_y) +
                         "; dataset has N_x=" + std::to_string(data.n_x) + ", N_y=" + std::to_string(data.n_y));
  }
  const auto& idx = split == EvalSplit::train        ? data.train
                    : split == EvalSplit::validation ? data.validation_indices()
                                                     : data.test_indices();
  const Evaluation ev = evaluate(p, data, idx);
  return {metric_name_for(data.kind), ev.metric, ev.loss, idx.size()};
}

inline int cmd_eval(const std::filesystem::path& checkpoint, const ExperimentConfig& cfg, EvalSplit split,
                    const std::optional<std::filesystem::path>& out_dir, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const SequenceDataset data = build_dataset(cfg.task);
  const EvalReport r = evaluate_checkpoint(ck, data, split);
  out << r.metric_name << " " << format_real(r.metric) << "\nloss " << format_real(r.loss) << "\nitems " << r.items
      << '\n';
  const std::filesystem::path dir = out_dir.value_or(checkpoint.parent_path());
  if (!dir.empty()) std::filesystem::create_directories(dir);
  write_json({{"checkpoint", checkpoint.filename().string()},
              {"metric_name", r.metric_name},
              {"metric", r.metric},
              {"loss", r.loss},
              {"items", r.items}},
             dir / "eval.json");
  return 0;
}

// Runs the model for n steps on zero input (or on the dataset's first item
// when one of sufficient length is supplied, which also provides targets).
inline void write_generated(const Checkpoint& ck, std::size_t n, const SequenceDataset* data,
                            const std::filesystem::path& path) {
  if (ck.task_kind != TaskKind::regression) throw ModeError("generate needs a regression checkpoint");
  if (n < 1) throw PreconditionError("generate: n must be >= 1");
  const MsLmnParams& p = ck.params;
  const SequenceItem* ref = nullptr;
  if (data != nullptr && !data->items.empty()) {
    const SequenceItem& item = data->items.front();
    if (data->kind != TaskKind::regression) throw ModeError("generate: dataset is not a regression task");
    if (item.input.cols() != p.n_x || item.target.cols() != p.n_y)
      throw DimensionError("generate: dataset shape does not match the checkpoint");
    if (item.input.rows() >= n) ref = &item;
  }
  const Matrix x = ref != nullptr ? ref->input.block(0, 0, n, p.n_x) : Matrix(n, p.n_x);
  const Matrix y = mslmn_forward(p, x).Y;
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << "t";
  for (std::size_t j = 0; j < p.n_y; ++j) {
    const std::string suffix = p.n_y == 1 ? "" : "_" + std::to_string(j);
    if (ref != nullptr) out << ",target" << suffix;
  }
  for (std::size_t j = 0; j < p.n_y; ++j) out << ",output" << (p.n_y == 1 ? "" : "_" + std::to_string(j));
  out << '\n';
  for (std::size_t t = 0; t < n; ++t) {
    out << t + 1;
    if (ref != nullptr)
      for (std::size_t j = 0; j < p.n_y; ++j) out << ',' << format_real(ref->target(t, j));
    for (std::size_t j = 0; j < p.n_y; ++j) out << ',' << format_real(y(t, j));
    out << '\n';
  }
}

inline nlohmann::json laes_to_json(const LaesModel& m) {
  return {{"format", "mslmn-laes"},
          {"version", 1},
          {"p", m.p},
          {"a", m.a},
          {"A", detail::matrix_to_json(m.A)},
          {"B", detail::matrix_to_json(m.B)},
          {"C", detail::matrix_to_json(m.C)}};
}

// Fits a LAES on the given sequence CSVs and writes laes.json plus
// reconstruction.csv (max-abs error per sequence). Returns the largest error.
inline double cmd_laes_fit(const std::vector<std::filesystem::path>& files, std::size_t p,
                           const std::filesystem::path& out_dir, bool use_slices = false) {
  if (files.empty()) throw EmptyInputError("laes-fit: no sequence files");
  std::vector<Matrix> seqs;
  for (const auto& f : files) seqs.push_back(load_feature_csv_file(f));
  const LaesModel model = fit_laes(seqs, p, LaesFitOptions{use_slices, 0});
  std::filesystem::create_directories(out_dir);
  write_json(laes_to_json(model), out_dir / "laes.json");
  std::ofstream rep(out_dir / "reconstruction.csv");
  if (!rep) throw InputError("cannot write reconstruction report");
  rep << "file,length,max_abs_error\n";
  double worst = 0.0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const double err = reconstruction_error(model, seqs[i]);
    worst = std::max(worst, err);
    rep << files[i].filename().string() << ',' << seqs[i].rows() << ',' << format_real(err) << '\n';
  }
  return worst;
}

inline void print_inspect(const Checkpoint& ck, std::ostream& out) {
  const MsLmnParams& p = ck.params;
  out << "task_kind " << to_string(ck.task_kind) << "\nn_x " << p.n_x << "\nn_h " << p.n_h << "\nn_m " << p.n_m
      << "\nn_y " << p.n_y << "\nmodules " << p.g() << "\nbias " << (p.has_bias() ? "true" : "false")
      << "\nepoch " << ck.epoch << "\nparam_count " << count_params(p) << '\n';
}

}  // namespace mslmn
