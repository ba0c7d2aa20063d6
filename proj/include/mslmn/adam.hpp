#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "mslmn/errors.hpp"
#include "mslmn/matrix.hpp"
#include "mslmn/mslmn.hpp"

namespace mslmn {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 1;
  double l2_decay = 0.0;
  std::size_t max_epochs = 100;
  std::size_t patience = 0;  // epochs without validation improvement; 0 disables early stopping
  std::size_t module_add_period = 50;
  std::uint64_t seed = 0;
  double noise_std = 0.0;
  std::size_t laes_state_size = 0;    // 0: use N_m
  std::size_t laes_working_rank = 32;  // rank tracked by the slice SVD; 0: exact
  bool laes_use_slices = true;
  double readout_ridge = 0.0;
  double clip_norm = 0.0;  // global gradient-norm clip; 0 disables

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw PreconditionError("learning_rate must be >= 0");
    if (batch_size < 1) throw PreconditionError("batch_size must be >= 1");
    if (module_add_period < 1) throw PreconditionError("module_add_period must be >= 1");
    if (noise_std < 0.0) throw PreconditionError("noise_std must be >= 0");
    if (l2_decay < 0.0) throw PreconditionError("l2_decay must be >= 0");
  }
};

// Adam moments for every parameter block, in MsLmnParams block order.
struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const MsLmnParams& params) {
    AdamState s;
    params.for_each_block([&s](const char*, const Matrix& w) {
      s.m.emplace_back(w.rows(), w.cols());
      s.v.emplace_back(w.rows(), w.cols());
    });
    return s;
  }
};

inline double gradient_norm(const MsLmnParams& grads) {
  double sq = 0.0;
  grads.for_each_block([&sq](const char*, const Matrix& g) {
    for (double v : g.data()) sq += v * v;
  });
  return std::sqrt(sq);
}

// In-place Adam update with coupled L2 decay (g <- g + l2_decay * w before
// the moment updates).
inline void adam_update(MsLmnParams& params, const MsLmnParams& grads, AdamState& state, const TrainConfig& config) {
  std::vector<Matrix*> w;
  std::vector<const Matrix*> g;
  params.for_each_block([&w](const char*, Matrix& m) { w.push_back(&m); });
  grads.for_each_block([&g](const char*, const Matrix& m) { g.push_back(&m); });
  if (state.m.empty() && state.step == 0) state = AdamState::for_params(params);
  if (w.size() != g.size() || w.size() != state.m.size()) throw DimensionError("adam_step: block count mismatch");
  for (std::size_t b = 0; b < w.size(); ++b) {
    const bool same = w[b]->rows() == g[b]->rows() && w[b]->cols() == g[b]->cols() &&
                      state.m[b].rows() == w[b]->rows() && state.m[b].cols() == w[b]->cols();
    if (!same) throw DimensionError("adam_step: block shape mismatch");
  }

  double clip = 1.0;
  if (config.clip_norm > 0.0) {
    const double norm = gradient_norm(grads);
    if (norm > config.clip_norm) clip = config.clip_norm / norm;
  }

  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t b = 0; b < w.size(); ++b) {
    auto wd = w[b]->data();
    const auto gd = g[b]->data();
    auto md = state.m[b].data();
    auto vd = state.v[b].data();
    for (std::size_t i = 0; i < wd.size(); ++i) {
      const double gi = gd[i] * clip + config.l2_decay * wd[i];
      md[i] = state.beta1 * md[i] + (1.0 - state.beta1) * gi;
      vd[i] = state.beta2 * vd[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = md[i] / c1;
      const double vhat = vd[i] / c2;
      wd[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

inline std::pair<MsLmnParams, AdamState> adam_step(MsLmnParams params, const MsLmnParams& grads, AdamState state,
                                                   const TrainConfig& config) {
  adam_update(params, grads, state, config);
  return {std::move(params), std::move(state)};
}

}  // namespace mslmn
