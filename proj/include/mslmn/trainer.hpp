#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mslmn/adam.hpp"
#include "mslmn/bptt.hpp"
#include "mslmn/dataset.hpp"
#include "mslmn/errors.hpp"
#include "mslmn/laes.hpp"
#include "mslmn/loss.hpp"
#include "mslmn/matrix.hpp"
#include "mslmn/mslmn.hpp"
#include "mslmn/svd.hpp"

namespace mslmn {

struct Architecture {
  std::size_t n_h = 1;
  std::size_t n_m = 1;      // per module
  std::size_t modules = 1;  // G: modules in the final model
  bool bias = false;        // hidden-layer bias
};

struct MetricsRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t module_count = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double metric = 0.0;  // NMSE (regression) or accuracy in [0, 1] (classification)
  double wall_time_ms = 0.0;
};

struct Evaluation {
  double loss = 0.0;
  double metric = 0.0;
};

struct TrainResult {
  MsLmnParams params;       // last finite parameters
  MsLmnParams best_params;  // lowest validation loss seen
  std::vector<MetricsRecord> metrics;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  bool early_stopped = false;
  bool aborted = false;  // non-finite loss
  std::vector<std::string> log;
  std::string rng_state;  // training RNG after the last epoch
};

using EpochCallback = std::function<void(const MetricsRecord&, const MsLmnParams&)>;

inline LossKind loss_kind_for(TaskKind kind) noexcept {
  return kind == TaskKind::regression ? LossKind::mse : LossKind::cross_entropy;
}

inline std::vector<Sample> samples_of(const SequenceDataset& data, std::span<const std::size_t> indices) {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    const SequenceItem& item = data.items.at(i);
    out.push_back({&item.input, &item.target, item.label});
  }
  return out;
}

// Loss plus task metric over the given items (clean inputs). The regression
// metric is the NMSE of all selected steps pooled together.
inline Evaluation evaluate(const MsLmnParams& params, const SequenceDataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw EmptyInputError("evaluate: no items");
  const LossKind kind = loss_kind_for(data.kind);
  Evaluation ev;
  std::size_t correct = 0;
  std::size_t rows = 0;
  for (std::size_t i : indices) rows += data.items.at(i).input.rows();
  Matrix pred(data.kind == TaskKind::regression ? rows : 0, data.n_y);
  Matrix target(pred.rows(), data.n_y);
  std::size_t row = 0;
  for (std::size_t i : indices) {
    const SequenceItem& item = data.items[i];
    const Sample s{&item.input, &item.target, item.label};
    detail::check_sample(params, s, kind);
    const MsLmnTrajectory traj = mslmn_forward(params, item.input);
    ev.loss += detail::sequence_loss(params, s, kind, traj, nullptr);
    if (data.kind == TaskKind::regression) {
      pred.set_block(row, 0, traj.Y);
      target.set_block(row, 0, item.target);
      row += item.input.rows();
    } else if (argmax(traj.Y.row(traj.Y.rows() - 1)) == item.label) {
      ++correct;
    }
  }
  ev.loss /= static_cast<double>(indices.size());
  ev.metric = data.kind == TaskKind::regression ? nmse(pred, target)
                                                : static_cast<double>(correct) / static_cast<double>(indices.size());
  return ev;
}

// Hidden activations of each training sequence kept at the steps where a
// module with period 2^g would update (t mod 2^g == 0, t 1-based). Sequences
// shorter than the period yield an empty matrix.
inline std::vector<Matrix> collect_subsampled_hidden(const MsLmnParams& params, std::span<const Matrix> inputs,
                                                     std::size_t g) {
  if (inputs.empty()) throw EmptyInputError("collect_subsampled_hidden: empty dataset");
  const std::size_t rate = std::size_t{1} << g;
  std::vector<Matrix> out;
  out.reserve(inputs.size());
  for (const Matrix& x : inputs) {
    const Matrix h = mslmn_forward(params, x).H;
    Matrix kept(h.rows() / rate, params.n_h);
    for (std::size_t j = 0; j < kept.rows(); ++j) {
      const auto src = h.row((j + 1) * rate - 1);
      std::copy(src.begin(), src.end(), kept.row(j).begin());
    }
    out.push_back(std::move(kept));
  }
  return out;
}

inline std::vector<Matrix> collect_subsampled_hidden(const MsLmnParams& params, const SequenceDataset& data,
                                                     std::size_t g) {
  return collect_subsampled_hidden(params, data.inputs(data.train), g);
}

// Least-squares readout from the concatenated memory of all modules. Returns
// one N_y x N_m block per module. Regression uses every step of every
// sequence; classification uses the last step with one-hot targets.
inline std::vector<Matrix> fit_readout(const MsLmnParams& params, const SequenceDataset& data,
                                       std::span<const std::size_t> indices, double ridge = 0.0) {
  const std::size_t width = params.g() * params.n_m;
  std::size_t rows = 0;
  for (std::size_t i : indices)
    rows += data.kind == TaskKind::regression ? data.items.at(i).input.rows() : 1;
  if (rows == 0) throw EmptyInputError("fit_readout: no memory states to fit");
  Matrix mem(rows, width);
  Matrix tgt(rows, params.n_y);
  std::size_t row = 0;
  for (std::size_t i : indices) {
    const SequenceItem& item = data.items[i];
    const MsLmnTrajectory traj = mslmn_forward(params, item.input);
    if (data.kind == TaskKind::regression) {
      mem.set_block(row, 0, traj.M);
      tgt.set_block(row, 0, item.target);
      row += traj.M.rows();
    } else {
      const auto last = traj.M.row(traj.M.rows() - 1);
      std::copy(last.begin(), last.end(), mem.row(row).begin());
      tgt(row, item.label) = 1.0;
      ++row;
    }
  }
  const Matrix w = least_squares(mem, tgt, ridge);  // width x N_y
  std::vector<Matrix> blocks;
  for (std::size_t k = 0; k < params.g(); ++k)
    blocks.push_back(w.block(k * params.n_m, 0, params.n_m, params.n_y).transpose());
  return blocks;
}

inline std::vector<Matrix> fit_readout(const MsLmnParams& params, const SequenceDataset& data, double ridge = 0.0) {
  return fit_readout(params, data, data.train, ridge);
}

namespace detail {

// Epoch loop shared by the fixed and incremental drivers: shuffling and
// batching, input noise, Adam, per-epoch evaluation and early stopping.
class TrainingLoop {
 public:
  TrainingLoop(const SequenceDataset& data, const TrainConfig& config, MsLmnParams params, EpochCallback on_epoch)
      : data_(data), config_(config), rng_(config.seed), on_epoch_(std::move(on_epoch)) {
    config_.validate();
    data_.validate();
    if (data_.train.empty()) throw EmptyInputError("training split is empty");
    result_.params = std::move(params);
    result_.best_params = result_.params;
    start_ = std::chrono::steady_clock::now();
  }

  std::mt19937_64& rng() noexcept { return rng_; }
  MsLmnParams& params() noexcept { return result_.params; }
  TrainResult& result() noexcept { return result_; }

  TrainResult finish() {
    std::ostringstream os;
    os << rng_;
    result_.rng_state = os.str();
    return std::move(result_);
  }
  std::size_t epoch() const noexcept { return epoch_; }
  bool stopped() const noexcept { return result_.early_stopped || result_.aborted; }

  void reset_optimizer() { adam_ = AdamState::for_params(result_.params); }

  void log(std::string line) { result_.log.push_back(std::move(line)); }

  // Runs up to `count` epochs; returns false once training must stop.
  bool run(std::size_t count) {
    if (adam_.m.empty()) reset_optimizer();
    for (std::size_t e = 0; e < count; ++e) {
      if (stopped()) return false;
      run_epoch();
    }
    return !stopped();
  }

 private:
  std::vector<std::vector<std::size_t>> make_batches() {
    std::vector<std::vector<std::size_t>> batches;
    const std::size_t classes = data_.num_classes();
    if (data_.kind == TaskKind::classification && config_.batch_size == classes && classes > 1) {
      // One sample per class in every batch.
      std::vector<std::vector<std::size_t>> per_class(classes);
      for (std::size_t i : data_.train) per_class[data_.items[i].label].push_back(i);
      std::size_t n = std::numeric_limits<std::size_t>::max();
      for (auto& members : per_class) {
        std::shuffle(members.begin(), members.end(), rng_);
        n = std::min(n, members.size());
      }
      for (std::size_t b = 0; b < n; ++b) {
        std::vector<std::size_t> batch;
        for (const auto& members : per_class) batch.push_back(members[b]);
        batches.push_back(std::move(batch));
      }
      std::shuffle(batches.begin(), batches.end(), rng_);
      if (!batches.empty()) return batches;
    }
    std::vector<std::size_t> order = data_.train;
    std::shuffle(order.begin(), order.end(), rng_);
    for (std::size_t i = 0; i < order.size(); i += config_.batch_size) {
      const auto end = std::min(order.size(), i + config_.batch_size);
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                           order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
  }

  void run_epoch() {
    ++epoch_;
    const LossKind kind = loss_kind_for(data_.kind);
    std::normal_distribution<double> noise(0.0, config_.noise_std > 0.0 ? config_.noise_std : 1.0);
    for (const auto& batch : make_batches()) {
      std::vector<Matrix> noisy;
      std::vector<Sample> samples;
      noisy.reserve(batch.size());
      for (std::size_t i : batch) {
        const SequenceItem& item = data_.items[i];
        if (config_.noise_std > 0.0) {
          noisy.push_back(item.input);
          for (double& v : noisy.back().data()) v += noise(rng_);
          samples.push_back({&noisy.back(), &item.target, item.label});
        } else {
          samples.push_back({&item.input, &item.target, item.label});
        }
      }
      BatchGradient grad = bptt_gradients(result_.params, samples, kind);
      if (!std::isfinite(grad.loss) || !std::isfinite(gradient_norm(grad.grads))) {
        abort("non-finite loss or gradient at epoch " + std::to_string(epoch_));
        return;
      }
      MsLmnParams before = result_.params;
      adam_update(result_.params, grad.grads, adam_, config_);
      if (!all_finite(result_.params)) {
        result_.params = std::move(before);
        abort("non-finite parameters at epoch " + std::to_string(epoch_));
        return;
      }
    }

    const Evaluation train = evaluate(result_.params, data_, data_.train);
    const Evaluation val = evaluate(result_.params, data_, data_.validation_indices());
    if (!std::isfinite(train.loss) || !std::isfinite(val.loss)) {
      abort("non-finite loss at epoch " + std::to_string(epoch_));
      return;
    }
    MetricsRecord rec{epoch_,
                      result_.params.g(),
                      train.loss,
                      val.loss,
                      val.metric,
                      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count()};
    result_.metrics.push_back(rec);

    if (val.loss < result_.best_val_loss) {
      result_.best_val_loss = val.loss;
      result_.best_params = result_.params;
      result_.best_epoch = epoch_;
      wait_ = 0;
    } else if (++wait_ >= config_.patience && config_.patience > 0) {
      result_.early_stopped = true;
      log("early stop at epoch " + std::to_string(epoch_));
    }
    if (on_epoch_) on_epoch_(rec, result_.params);
  }

  static bool all_finite(const MsLmnParams& p) {
    bool ok = true;
    p.for_each_block([&ok](const char*, const Matrix& m) { ok = ok && m.all_finite(); });
    return ok;
  }

  void abort(std::string why) {
    result_.aborted = true;
    log(std::move(why));
  }

  const SequenceDataset& data_;
  TrainConfig config_;
  std::mt19937_64 rng_;
  EpochCallback on_epoch_;
  AdamState adam_;
  TrainResult result_;
  std::size_t epoch_ = 0;
  std::size_t wait_ = 0;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

// Plain end-to-end training of a fixed architecture for config.max_epochs
// epochs (or until early stopping).
inline TrainResult train_fixed(const SequenceDataset& data, MsLmnParams params, const TrainConfig& config,
                               EpochCallback on_epoch = {}) {
  params.validate();
  if (params.n_x != data.n_x || params.n_y != data.n_y) throw DimensionError("train_fixed: model/dataset size mismatch");
  detail::TrainingLoop loop(data, config, std::move(params), std::move(on_epoch));
  loop.run(config.max_epochs);
  return loop.finish();
}

// Initializes a new slower module from a LAES fit of the current model's
// subsampled hidden activations, then refits the whole readout by least
// squares. Returns the grown model. `note` receives a log line when the new
// module falls back to zero initialization.
inline MsLmnParams grow_module(const MsLmnParams& params, const SequenceDataset& data, const TrainConfig& config,
                               std::string* note = nullptr) {
  const std::size_t g = params.g();
  const std::size_t nm = params.n_m;
  const std::size_t nh = params.n_h;
  Matrix a_new(nm, nh);
  Matrix b_new(nm, nm);
  const std::vector<Matrix> hidden = collect_subsampled_hidden(params, data, g);
  std::size_t rows = 0;
  std::size_t longest = 0;
  for (const Matrix& h : hidden) {
    rows += h.rows();
    longest = std::max(longest, h.rows());
  }
  if (rows == 0) {
    if (note != nullptr)
      *note = "module " + std::to_string(g + 1) + ": every sequence is shorter than the module period; zero init";
  } else {
    const std::size_t requested = config.laes_state_size == 0 ? nm : std::min(config.laes_state_size, nm);
    const std::size_t p = std::min({requested, rows, longest * nh});
    const LaesModel laes =
        fit_laes(hidden, p, LaesFitOptions{config.laes_use_slices, config.laes_working_rank});
    a_new.set_block(0, 0, laes.A);
    b_new.set_block(0, 0, laes.B);
  }
  MsLmnParams grown = add_module(params, a_new, b_new);
  grown.Wmy = fit_readout(grown, data, config.readout_ridge);
  return grown;
}

// Constructive training: start from one randomly initialized module, and
// every module_add_period epochs add a slower module (LAES-initialized, with
// a refit readout) until `arch.modules` modules exist. The whole model is
// finetuned after each addition. The last phase runs until max_epochs.
inline TrainResult incremental_train(const SequenceDataset& data, const Architecture& arch, const TrainConfig& config,
                                     EpochCallback on_epoch = {}) {
  if (arch.modules < 1) throw PreconditionError("incremental_train: need at least one module");
  std::mt19937_64 init_rng(config.seed);
  MsLmnParams params = random_mslmn(data.n_x, arch.n_h, arch.n_m, data.n_y, 1, init_rng, arch.bias);
  detail::TrainingLoop loop(data, config, std::move(params), std::move(on_epoch));
  for (std::size_t phase = 0; phase < arch.modules; ++phase) {
    if (phase > 0) {
      std::string note;
      loop.params() = grow_module(loop.params(), data, config, &note);
      if (!note.empty()) loop.log(note);
      loop.reset_optimizer();
    }
    const std::size_t remaining = config.max_epochs - std::min(config.max_epochs, loop.epoch());
    const bool last = phase + 1 == arch.modules;
    const std::size_t budget = last ? remaining : std::min(config.module_add_period, remaining);
    if (!loop.run(budget) || loop.epoch() >= config.max_epochs) break;
  }
  return loop.finish();
}

}  // namespace mslmn
