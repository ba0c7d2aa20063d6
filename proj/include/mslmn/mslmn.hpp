#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mslmn/errors.hpp"
#include "mslmn/lmn.hpp"
#include "mslmn/matrix.hpp"

namespace mslmn {

// Module k (1-based) samples every 2^(k-1) steps.
struct ClockSchedule {
  std::size_t g = 1;
  std::vector<std::size_t> rates;

  static ClockSchedule for_modules(std::size_t g) {
    if (g < 1) throw PreconditionError("ClockSchedule: g must be >= 1");
    ClockSchedule s{g, {}};
    for (std::size_t k = 0; k < g; ++k) s.rates.push_back(std::size_t{1} << k);
    return s;
  }
};

// floor(log2 l_max), at least 1.
inline std::size_t module_count_for(std::size_t l_max) {
  if (l_max == 0) throw EmptyInputError("module_count_for: l_max must be >= 1");
  const auto bits = static_cast<std::size_t>(std::bit_width(l_max)) - 1;
  return bits < 1 ? 1 : bits;
}

// Largest 1-based module index updated at 1-based step t: modules 1..i_max
// are active, the rest hold their state.
inline std::size_t active_modules(std::size_t t, std::size_t g) {
  if (t == 0) throw PreconditionError("active_modules: timesteps are 1-based");
  const auto imax = static_cast<std::size_t>(std::countr_zero(t)) + 1;
  return imax < g ? imax : g;
}

inline constexpr std::size_t tri_index(std::size_t source, std::size_t target) noexcept {
  return source * (source + 1) / 2 + target;
}

// Weights of a g-module MS-LMN. Module indices are 0-based here. Memory
// blocks only exist from a module to itself or to a faster one:
// wmm(source, target) with source >= target maps m_source into m_target.
struct MsLmnParams {
  std::size_t n_x = 0;
  std::size_t n_h = 0;
  std::size_t n_m = 0;  // per module
  std::size_t n_y = 0;

  Matrix Wxh;               // N_h x N_x
  Matrix bh;                // N_h x 1 when the hidden bias is enabled, else 0x0
  std::vector<Matrix> Wmh;  // g x (N_h x N_m), memory i -> hidden
  std::vector<Matrix> Whm;  // g x (N_m x N_h), hidden -> memory k
  std::vector<Matrix> Wmm;  // g(g+1)/2 x (N_m x N_m), see tri_index
  std::vector<Matrix> Wmy;  // g x (N_y x N_m)

  std::size_t g() const noexcept { return Whm.size(); }
  bool has_bias() const noexcept { return !bh.empty(); }
  ClockSchedule schedule() const { return ClockSchedule::for_modules(g()); }

  Matrix& wmm(std::size_t source, std::size_t target) {
    if (source < target || source >= g()) throw IndexError("wmm: no block from a faster to a slower module");
    return Wmm[tri_index(source, target)];
  }
  const Matrix& wmm(std::size_t source, std::size_t target) const {
    if (source < target || source >= g()) throw IndexError("wmm: no block from a faster to a slower module");
    return Wmm[tri_index(source, target)];
  }

  static MsLmnParams zeros(std::size_t n_x, std::size_t n_h, std::size_t n_m, std::size_t n_y, std::size_t g,
                           bool bias = false) {
    MsLmnParams p{n_x, n_h, n_m, n_y, Matrix(n_h, n_x), bias ? Matrix(n_h, 1) : Matrix(), {}, {}, {}, {}};
    for (std::size_t k = 0; k < g; ++k) {
      p.Wmh.emplace_back(n_h, n_m);
      p.Whm.emplace_back(n_m, n_h);
      p.Wmy.emplace_back(n_y, n_m);
      for (std::size_t t = 0; t <= k; ++t) p.Wmm.emplace_back(n_m, n_m);
    }
    return p;
  }

  // Every stored weight block in a fixed order (used by optimizers,
  // serialization and gradient checks).
  template <typename Self, typename Fn>
  static void visit_blocks(Self& self, Fn&& fn) {
    fn("Wxh", self.Wxh);
    if (self.has_bias()) fn("bh", self.bh);
    for (std::size_t i = 0; i < self.Wmh.size(); ++i) fn("Wmh", self.Wmh[i]);
    for (std::size_t i = 0; i < self.Whm.size(); ++i) fn("Whm", self.Whm[i]);
    for (std::size_t i = 0; i < self.Wmm.size(); ++i) fn("Wmm", self.Wmm[i]);
    for (std::size_t i = 0; i < self.Wmy.size(); ++i) fn("Wmy", self.Wmy[i]);
  }
  template <typename Fn>
  void for_each_block(Fn&& fn) {
    visit_blocks(*this, fn);
  }
  template <typename Fn>
  void for_each_block(Fn&& fn) const {
    visit_blocks(*this, fn);
  }

  // Same architecture, all weights zero.
  MsLmnParams zeros_like() const {
    MsLmnParams z = *this;
    z.for_each_block([](const char*, Matrix& m) { m.fill(0.0); });
    return z;
  }

  void validate() const {
    const std::size_t gg = g();
    auto shape_is = [](const Matrix& m, std::size_t r, std::size_t c) { return m.rows() == r && m.cols() == c; };
    bool ok = gg >= 1 && shape_is(Wxh, n_h, n_x) && Wmh.size() == gg && Wmy.size() == gg &&
              Wmm.size() == gg * (gg + 1) / 2 && (bh.empty() || shape_is(bh, n_h, 1));
    for (std::size_t k = 0; ok && k < gg; ++k) {
      ok = shape_is(Wmh[k], n_h, n_m) && shape_is(Whm[k], n_m, n_h) && shape_is(Wmy[k], n_y, n_m);
    }
    for (std::size_t i = 0; ok && i < Wmm.size(); ++i) ok = shape_is(Wmm[i], n_m, n_m);
    if (!ok) throw DimensionError("MsLmnParams: inconsistent block shapes");
  }

  bool operator==(const MsLmnParams&) const = default;
};

// Uniform(+-1/sqrt(fan_in)) initialization, where fan_in counts every input
// feeding the unit: the hidden layer reads x and all g memories, memory k
// reads h and modules k..g, the readout reads all memories.
template <typename Rng>
MsLmnParams random_mslmn(std::size_t n_x, std::size_t n_h, std::size_t n_m, std::size_t n_y, std::size_t g, Rng& rng,
                         bool bias = false) {
  MsLmnParams p = MsLmnParams::zeros(n_x, n_h, n_m, n_y, g, bias);
  auto fill = [&rng](Matrix& m, std::size_t fan_in) {
    if (fan_in == 0) return;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : m.data()) v = dist(rng);
  };
  const std::size_t hidden_fan = n_x + g * n_m;
  fill(p.Wxh, hidden_fan);
  if (bias) fill(p.bh, hidden_fan);
  for (auto& w : p.Wmh) fill(w, hidden_fan);
  for (std::size_t k = 0; k < g; ++k) fill(p.Whm[k], n_h + (g - k) * n_m);
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t k = 0; k <= i; ++k) fill(p.wmm(i, k), n_h + (g - k) * n_m);
  for (auto& w : p.Wmy) fill(w, g * n_m);
  return p;
}

// Builds a one-module MS-LMN from LMN weights.
inline MsLmnParams mslmn_from_lmn(const LmnParams& lmn) {
  lmn.validate();
  MsLmnParams p = MsLmnParams::zeros(lmn.n_x(), lmn.n_h(), lmn.n_m(), lmn.n_y(), 1);
  p.Wxh = lmn.Wxh;
  p.Wmh[0] = lmn.Wmh;
  p.Whm[0] = lmn.Whm;
  p.Wmm[0] = lmn.Wmm;
  p.Wmy[0] = lmn.Wmy;
  return p;
}

struct MsLmnState {
  Vector h;
  std::vector<Vector> m;  // g vectors of N_m
  std::size_t t = 1;      // 1-based index of the next incoming step

  static MsLmnState initial(const MsLmnParams& p) {
    return {Vector(p.n_h, 0.0), std::vector<Vector>(p.g(), Vector(p.n_m, 0.0)), 1};
  }
};

namespace detail {

inline void check_step_dims(const MsLmnParams& params, const MsLmnState& state, std::span<const double> x) {
  bool ok = x.size() == params.n_x && state.h.size() == params.n_h && state.m.size() == params.g();
  for (std::size_t k = 0; ok && k < state.m.size(); ++k) ok = state.m[k].size() == params.n_m;
  if (!ok) throw DimensionError("mslmn_step: dimension mismatch");
  if (state.t == 0) throw PreconditionError("mslmn_step: timesteps are 1-based");
}

}  // namespace detail

// Per-module update: every module feeds the hidden layer with its held state;
// active modules recompute from h and the previous states of modules >= k,
// inactive ones copy their previous state.
inline MsLmnState mslmn_step(const MsLmnParams& params, const MsLmnState& state, std::span<const double> x) {
  detail::check_step_dims(params, state, x);
  const std::size_t g = params.g();
  MsLmnState next{Vector(params.n_h, 0.0), state.m, state.t + 1};
  gemv_acc(params.Wxh, x, next.h);
  for (std::size_t i = 0; i < g; ++i) gemv_acc(params.Wmh[i], state.m[i], next.h);
  if (params.has_bias())
    for (std::size_t j = 0; j < params.n_h; ++j) next.h[j] += params.bh(j, 0);
  for (double& v : next.h) v = std::tanh(v);

  const std::size_t imax = active_modules(state.t, g);
  for (std::size_t k = 0; k < imax; ++k) {
    Vector mk(params.n_m, 0.0);
    gemv_acc(params.Whm[k], next.h, mk);
    for (std::size_t i = k; i < g; ++i) gemv_acc(params.wmm(i, k), state.m[i], mk);
    next.m[k] = std::move(mk);
  }
  return next;
}

// Stacked-matrix form of the weights: all memories concatenated into one
// vector of g*N_m, with the memory transition block upper triangular (row
// block k reads column blocks i >= k).
struct PackedMsLmn {
  Matrix Wxh;     // N_h x N_x
  Matrix bh;      // N_h x 1 or empty
  Matrix Wmh;     // N_h x gN_m
  Matrix Whm;     // gN_m x N_h
  Matrix Wmm;     // gN_m x gN_m
  Matrix Wmy;     // N_y x gN_m
  std::size_t g = 0;
  std::size_t n_m = 0;
};

inline PackedMsLmn pack(const MsLmnParams& params) {
  params.validate();
  const std::size_t g = params.g();
  const std::size_t nm = params.n_m;
  PackedMsLmn pk{params.Wxh, params.bh, Matrix(params.n_h, g * nm), Matrix(g * nm, params.n_h),
                 Matrix(g * nm, g * nm), Matrix(params.n_y, g * nm), g, nm};
  for (std::size_t k = 0; k < g; ++k) {
    pk.Wmh.set_block(0, k * nm, params.Wmh[k]);
    pk.Whm.set_block(k * nm, 0, params.Whm[k]);
    pk.Wmy.set_block(0, k * nm, params.Wmy[k]);
    for (std::size_t i = k; i < g; ++i) pk.Wmm.set_block(k * nm, i * nm, params.wmm(i, k));
  }
  return pk;
}

// Update through the packed matrices: only the first i_max * N_m rows are
// recomputed, the remaining rows are copied.
inline MsLmnState mslmn_step_packed(const PackedMsLmn& pk, const MsLmnState& state, std::span<const double> x) {
  const std::size_t nm = pk.n_m;
  const std::size_t g = pk.g;
  const std::size_t nh = pk.Wxh.rows();
  bool ok = x.size() == pk.Wxh.cols() && state.h.size() == nh && state.m.size() == g;
  for (std::size_t k = 0; ok && k < g; ++k) ok = state.m[k].size() == nm;
  if (!ok) throw DimensionError("mslmn_step_packed: dimension mismatch");
  if (state.t == 0) throw PreconditionError("mslmn_step_packed: timesteps are 1-based");

  Vector stacked(g * nm);
  for (std::size_t k = 0; k < g; ++k) std::copy(state.m[k].begin(), state.m[k].end(), stacked.begin() + k * nm);

  Vector h(nh, 0.0);
  gemv_acc(pk.Wxh, x, h);
  gemv_acc(pk.Wmh, stacked, h);
  if (!pk.bh.empty())
    for (std::size_t j = 0; j < nh; ++j) h[j] += pk.bh(j, 0);
  for (double& v : h) v = std::tanh(v);

  const std::size_t rows = active_modules(state.t, g) * nm;
  Vector updated = stacked;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto whm = pk.Whm.row(r);
    const auto wmm = pk.Wmm.row(r);
    double acc = 0.0;
    for (std::size_t j = 0; j < nh; ++j) acc += whm[j] * h[j];
    // Summed per source block, skipping the zero blocks left of the diagonal.
    for (std::size_t i = r / nm; i < g; ++i) {
      double s = 0.0;
      for (std::size_t j = i * nm; j < (i + 1) * nm; ++j) s += wmm[j] * stacked[j];
      acc += s;
    }
    updated[r] = acc;
  }

  MsLmnState next{std::move(h), std::vector<Vector>(g), state.t + 1};
  for (std::size_t k = 0; k < g; ++k)
    next.m[k].assign(updated.begin() + k * nm, updated.begin() + (k + 1) * nm);
  return next;
}

inline MsLmnState mslmn_step_packed(const MsLmnParams& params, const MsLmnState& state, std::span<const double> x) {
  return mslmn_step_packed(pack(params), state, x);
}

struct MsLmnTrajectory {
  Matrix H;  // l x N_h
  Matrix M;  // l x gN_m, module k occupies columns [k N_m, (k+1) N_m)
  Matrix Y;  // l x N_y
};

inline MsLmnTrajectory mslmn_forward(const MsLmnParams& params, const Matrix& sequence) {
  params.validate();
  if (sequence.rows() > 0 && sequence.cols() != params.n_x) {
    throw DimensionError("mslmn_forward: input size " + std::to_string(sequence.cols()) + " != " +
                         std::to_string(params.n_x));
  }
  const std::size_t l = sequence.rows();
  const std::size_t g = params.g();
  const std::size_t nm = params.n_m;
  MsLmnTrajectory out{Matrix(l, params.n_h), Matrix(l, g * nm), Matrix(l, params.n_y)};
  const Vector zeros(g * nm, 0.0);
  for (std::size_t t = 0; t < l; ++t) {
    const std::span<const double> prev = t == 0 ? std::span<const double>(zeros) : out.M.row(t - 1);
    auto h = out.H.row(t);
    gemv_acc(params.Wxh, sequence.row(t), h);
    for (std::size_t i = 0; i < g; ++i) gemv_acc(params.Wmh[i], prev.subspan(i * nm, nm), h);
    if (params.has_bias())
      for (std::size_t j = 0; j < params.n_h; ++j) h[j] += params.bh(j, 0);
    for (double& v : h) v = std::tanh(v);

    auto m = out.M.row(t);
    const std::size_t imax = active_modules(t + 1, g);
    for (std::size_t k = 0; k < g; ++k) {
      auto mk = m.subspan(k * nm, nm);
      if (k >= imax) {
        std::copy_n(prev.begin() + k * nm, nm, mk.begin());
        continue;
      }
      gemv_acc(params.Whm[k], h, mk);
      for (std::size_t i = k; i < g; ++i) gemv_acc(params.wmm(i, k), prev.subspan(i * nm, nm), mk);
    }
    auto y = out.Y.row(t);
    for (std::size_t i = 0; i < g; ++i) gemv_acc(params.Wmy[i], m.subspan(i * nm, nm), y);
  }
  return out;
}

// Appends a slower module. The new hidden-to-memory map is `a_new`, its
// self-transition `b_new` and its readout `wout_new` (zeros when empty);
// every other new block is zero, so the hidden and old memory trajectories
// are unchanged.
inline MsLmnParams add_module(const MsLmnParams& params, const Matrix& a_new, const Matrix& b_new,
                              const Matrix& wout_new = Matrix()) {
  params.validate();
  const std::size_t nm = params.n_m;
  if (a_new.rows() != nm || a_new.cols() != params.n_h) {
    throw DimensionError("add_module: A_new must be " + std::to_string(nm) + "x" + std::to_string(params.n_h) +
                         ", got " + a_new.shape_string());
  }
  if (b_new.rows() != nm || b_new.cols() != nm) throw DimensionError("add_module: B_new must be N_m x N_m");
  if (!wout_new.empty() && (wout_new.rows() != params.n_y || wout_new.cols() != nm)) {
    throw DimensionError("add_module: Wout_new must be N_y x N_m");
  }
  MsLmnParams out = params;
  const std::size_t g = params.g();
  out.Wmh.emplace_back(params.n_h, nm);
  out.Whm.push_back(a_new);
  for (std::size_t k = 0; k < g; ++k) out.Wmm.emplace_back(nm, nm);
  out.Wmm.push_back(b_new);
  out.Wmy.push_back(wout_new.empty() ? Matrix(params.n_y, nm) : wout_new);
  return out;
}

inline std::size_t count_params(const MsLmnParams& p) {
  const std::size_t g = p.g();
  std::size_t n = p.n_h * p.n_x + g * p.n_h * p.n_m + g * p.n_m * p.n_h + g * (g + 1) / 2 * p.n_m * p.n_m +
                  g * p.n_y * p.n_m;
  if (p.has_bias()) n += p.n_h;
  return n;
}

}  // namespace mslmn
