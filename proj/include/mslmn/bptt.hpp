#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mslmn/dataset.hpp"
#include "mslmn/errors.hpp"
#include "mslmn/loss.hpp"
#include "mslmn/matrix.hpp"
#include "mslmn/mslmn.hpp"

namespace mslmn {

struct BatchGradient {
  MsLmnParams grads;  // same shapes as the model
  double loss = 0.0;  // mean loss over the batch
};

namespace detail {

inline void check_sample(const MsLmnParams& params, const Sample& s, LossKind kind) {
  if (s.input == nullptr) throw PreconditionError("sample without input");
  const Matrix& x = *s.input;
  if (x.rows() == 0) throw PreconditionError("bptt: sequence length must be >= 1");
  if (x.cols() != params.n_x) throw DimensionError("bptt: input size mismatch");
  if (kind == LossKind::mse) {
    if (s.target == nullptr || s.target->rows() != x.rows() || s.target->cols() != params.n_y)
      throw DimensionError("bptt: regression target must be l x N_y");
  } else if (s.label >= params.n_y) {
    throw IndexError("bptt: label outside the output range");
  }
}

// Loss of one sequence given its forward trajectory. When `dy` is non-null it
// receives dLoss/dy_t for every step.
inline double sequence_loss(const MsLmnParams& params, const Sample& s, LossKind kind, const MsLmnTrajectory& traj,
                            Matrix* dy) {
  const std::size_t l = s.input->rows();
  const std::size_t ny = params.n_y;
  if (dy != nullptr) *dy = Matrix(l, ny);
  if (kind == LossKind::mse) {
    const double denom = static_cast<double>(l * ny);
    double sse = 0.0;
    for (std::size_t t = 0; t < l; ++t)
      for (std::size_t j = 0; j < ny; ++j) {
        const double d = traj.Y(t, j) - (*s.target)(t, j);
        sse += d * d;
        if (dy != nullptr) (*dy)(t, j) = 2.0 * d / denom;
      }
    return sse / denom;
  }
  const auto logits = traj.Y.row(l - 1);
  const double loss = cross_entropy(logits, s.label);
  if (dy != nullptr) {
    const auto p = softmax(logits);
    for (std::size_t j = 0; j < ny; ++j) (*dy)(l - 1, j) = p[j] - (j == s.label ? 1.0 : 0.0);
  }
  return loss;
}

// Reverse pass through the clocked recurrence. `dy` holds dLoss/dy_t; the
// gradient is scaled by `scale` and added into `g`.
inline void backward(const MsLmnParams& params, const Matrix& x, const MsLmnTrajectory& traj, const Matrix& dy,
                     double scale, MsLmnParams& g) {
  const std::size_t l = x.rows();
  const std::size_t gm = params.g();
  const std::size_t nm = params.n_m;
  const std::size_t nh = params.n_h;
  const Vector zeros(gm * nm, 0.0);
  Vector dm(gm * nm, 0.0);    // dLoss/dm_t, all modules
  Vector dprev(gm * nm, 0.0);
  Vector dh(nh, 0.0);
  Vector dyt(params.n_y, 0.0);

  for (std::size_t step = l; step-- > 0;) {
    const auto m = traj.M.row(step);
    const auto h = traj.H.row(step);
    const std::span<const double> prev = step == 0 ? std::span<const double>(zeros) : traj.M.row(step - 1);

    for (std::size_t j = 0; j < params.n_y; ++j) dyt[j] = dy(step, j) * scale;
    for (std::size_t i = 0; i < gm; ++i) {
      gemv_t_acc(params.Wmy[i], dyt, std::span<double>(dm).subspan(i * nm, nm));
      ger_acc(g.Wmy[i], dyt, m.subspan(i * nm, nm));
    }

    std::fill(dprev.begin(), dprev.end(), 0.0);
    std::fill(dh.begin(), dh.end(), 0.0);
    const std::size_t imax = active_modules(step + 1, gm);
    for (std::size_t k = 0; k < gm; ++k) {
      const std::span<const double> dmk = std::span<const double>(dm).subspan(k * nm, nm);
      if (k >= imax) {
        // Held state: the gradient flows unchanged to the previous step.
        for (std::size_t j = 0; j < nm; ++j) dprev[k * nm + j] += dmk[j];
        continue;
      }
      ger_acc(g.Whm[k], dmk, h);
      gemv_t_acc(params.Whm[k], dmk, dh);
      for (std::size_t i = k; i < gm; ++i) {
        const auto prev_i = prev.subspan(i * nm, nm);
        ger_acc(g.Wmm[tri_index(i, k)], dmk, prev_i);
        gemv_t_acc(params.Wmm[tri_index(i, k)], dmk, std::span<double>(dprev).subspan(i * nm, nm));
      }
    }

    for (std::size_t j = 0; j < nh; ++j) dh[j] *= 1.0 - h[j] * h[j];
    ger_acc(g.Wxh, dh, x.row(step));
    if (params.has_bias())
      for (std::size_t j = 0; j < nh; ++j) g.bh(j, 0) += dh[j];
    for (std::size_t i = 0; i < gm; ++i) {
      ger_acc(g.Wmh[i], dh, prev.subspan(i * nm, nm));
      gemv_t_acc(params.Wmh[i], dh, std::span<double>(dprev).subspan(i * nm, nm));
    }
    dm.swap(dprev);
  }
}

}  // namespace detail

// Gradient of the mean batch loss with respect to every weight block.
inline BatchGradient bptt_gradients(const MsLmnParams& params, std::span<const Sample> batch, LossKind kind) {
  params.validate();
  if (batch.empty()) throw EmptyInputError("bptt_gradients: empty batch");
  BatchGradient out{params.zeros_like(), 0.0};
  const double scale = 1.0 / static_cast<double>(batch.size());
  Matrix dy;
  for (const Sample& s : batch) {
    detail::check_sample(params, s, kind);
    const MsLmnTrajectory traj = mslmn_forward(params, *s.input);
    out.loss += detail::sequence_loss(params, s, kind, traj, &dy) * scale;
    detail::backward(params, *s.input, traj, dy, scale, out.grads);
  }
  return out;
}

inline double batch_loss(const MsLmnParams& params, std::span<const Sample> batch, LossKind kind) {
  if (batch.empty()) throw EmptyInputError("batch_loss: empty batch");
  double loss = 0.0;
  for (const Sample& s : batch) {
    detail::check_sample(params, s, kind);
    loss += detail::sequence_loss(params, s, kind, mslmn_forward(params, *s.input), nullptr);
  }
  return loss / static_cast<double>(batch.size());
}

}  // namespace mslmn
