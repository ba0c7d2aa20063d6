#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mslmn/errors.hpp"
#include "mslmn/matrix.hpp"

namespace mslmn {

// Single-scale Linear Memory Network:
//   h_t = tanh(Wxh x_t + Wmh m_{t-1})
//   m_t = Whm h_t + Wmm m_{t-1}
//   y_t = Wmy m_t
struct LmnParams {
  Matrix Wxh;  // N_h x N_x
  Matrix Wmh;  // N_h x N_m
  Matrix Whm;  // N_m x N_h
  Matrix Wmm;  // N_m x N_m
  Matrix Wmy;  // N_y x N_m

  std::size_t n_x() const noexcept { return Wxh.cols(); }
  std::size_t n_h() const noexcept { return Wxh.rows(); }
  std::size_t n_m() const noexcept { return Wmm.rows(); }
  std::size_t n_y() const noexcept { return Wmy.rows(); }

  static LmnParams zeros(std::size_t n_x, std::size_t n_h, std::size_t n_m, std::size_t n_y) {
    return {Matrix(n_h, n_x), Matrix(n_h, n_m), Matrix(n_m, n_h), Matrix(n_m, n_m), Matrix(n_y, n_m)};
  }

  void validate() const {
    const bool ok = Wmh.rows() == n_h() && Wmh.cols() == n_m() && Whm.rows() == n_m() && Whm.cols() == n_h() &&
                    Wmm.cols() == n_m() && Wmy.cols() == n_m();
    if (!ok) throw DimensionError("LmnParams: inconsistent block shapes");
  }
};

struct LmnState {
  Vector h;
  Vector m;
};

// Vanilla Elman RNN, h_t = tanh(Wxh x_t + Whh h_{t-1}).
struct RnnParams {
  Matrix Wxh;  // N_h x N_x
  Matrix Whh;  // N_h x N_h
};

struct LmnTrajectory {
  Matrix H;  // l x N_h
  Matrix M;  // l x N_m
  Matrix Y;  // l x N_y
};

inline LmnState lmn_step(const LmnParams& params, const LmnState& state, std::span<const double> x) {
  if (x.size() != params.n_x() || state.h.size() != params.n_h() || state.m.size() != params.n_m()) {
    throw DimensionError("lmn_step: dimension mismatch");
  }
  LmnState next{Vector(params.n_h(), 0.0), Vector(params.n_m(), 0.0)};
  gemv_acc(params.Wxh, x, next.h);
  gemv_acc(params.Wmh, state.m, next.h);
  for (double& v : next.h) v = std::tanh(v);
  gemv_acc(params.Whm, next.h, next.m);
  gemv_acc(params.Wmm, state.m, next.m);
  return next;
}

inline LmnTrajectory lmn_forward(const LmnParams& params, const Matrix& sequence) {
  params.validate();
  if (sequence.rows() > 0 && sequence.cols() != params.n_x()) {
    throw DimensionError("lmn_forward: input size " + std::to_string(sequence.cols()) + " != " +
                         std::to_string(params.n_x()));
  }
  const std::size_t l = sequence.rows();
  LmnTrajectory out{Matrix(l, params.n_h()), Matrix(l, params.n_m()), Matrix(l, params.n_y())};
  LmnState state{Vector(params.n_h(), 0.0), Vector(params.n_m(), 0.0)};
  for (std::size_t t = 0; t < l; ++t) {
    state = lmn_step(params, state, sequence.row(t));
    std::copy(state.h.begin(), state.h.end(), out.H.row(t).begin());
    std::copy(state.m.begin(), state.m.end(), out.M.row(t).begin());
    gemv_acc(params.Wmy, state.m, out.Y.row(t));
  }
  return out;
}

// LMN whose memory reproduces the RNN hidden state exactly: Wxh copied,
// Wmh = Whh, Whm = I, Wmm = 0. The readout is empty (N_y = 0).
inline LmnParams lmn_from_rnn(const RnnParams& rnn) {
  const std::size_t n_h = rnn.Wxh.rows();
  return {rnn.Wxh, rnn.Whh, Matrix::identity(n_h), Matrix(n_h, n_h), Matrix(0, n_h)};
}

inline Matrix rnn_forward(const RnnParams& rnn, const Matrix& sequence) {
  const std::size_t n_h = rnn.Wxh.rows();
  if (rnn.Whh.rows() != n_h || rnn.Whh.cols() != n_h) throw DimensionError("rnn_forward: Whh must be N_h x N_h");
  if (sequence.rows() > 0 && sequence.cols() != rnn.Wxh.cols()) throw DimensionError("rnn_forward: input size");
  Matrix H(sequence.rows(), n_h);
  Vector h(n_h, 0.0);
  for (std::size_t t = 0; t < sequence.rows(); ++t) {
    Vector a(n_h, 0.0);
    gemv_acc(rnn.Wxh, sequence.row(t), a);
    gemv_acc(rnn.Whh, h, a);
    for (std::size_t i = 0; i < n_h; ++i) h[i] = std::tanh(a[i]);
    std::copy(h.begin(), h.end(), H.row(t).begin());
  }
  return H;
}

}  // namespace mslmn
