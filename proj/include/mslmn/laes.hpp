#pragma once

#include <algorithm>
#include <cstddef>
#include <ranges>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mslmn/errors.hpp"
#include "mslmn/matrix.hpp"
#include "mslmn/svd.hpp"

namespace mslmn {

// Linear autoencoder for sequences:
//   encode  m_t = A x_t + B m_{t-1},  m_0 = 0
//   decode  [x_t; m_{t-1}] = C m_t
struct LaesModel {
  Matrix A;  // p x a
  Matrix B;  // p x p
  Matrix C;  // (a + p) x p
  std::size_t p = 0;
  std::size_t a = 0;
};

struct DataRow {
  std::size_t sequence = 0;
  std::size_t timestep = 0;  // 1-based
};

// Reversed-prefix data matrix: row (q, t) holds x_t, x_{t-1}, ..., x_1 of
// sequence q, zero padded on the right to l_max * a columns.
struct DataMatrix {
  Matrix Xi;
  std::vector<DataRow> row_map;
  std::size_t l_max = 0;
  std::size_t a = 0;
};

namespace detail {

struct CorpusShape {
  std::size_t a = 0;
  std::size_t l_max = 0;
  std::size_t total = 0;
};

inline CorpusShape corpus_shape(std::span<const Matrix> sequences) {
  if (sequences.empty()) throw EmptyInputError("sequence corpus is empty");
  CorpusShape shape{sequences.front().cols(), 0, 0};
  for (const Matrix& s : sequences) {
    if (s.cols() != shape.a) {
      throw DimensionError("sequence element size " + std::to_string(s.cols()) + " differs from " +
                           std::to_string(shape.a));
    }
    shape.l_max = std::max(shape.l_max, s.rows());
    shape.total += s.rows();
  }
  if (shape.total == 0 || shape.a == 0) throw EmptyInputError("sequence corpus has no timesteps");
  return shape;
}

}  // namespace detail

inline DataMatrix build_data_matrix(std::span<const Matrix> sequences) {
  const auto shape = detail::corpus_shape(sequences);
  DataMatrix dm{Matrix(shape.total, shape.l_max * shape.a), {}, shape.l_max, shape.a};
  dm.row_map.reserve(shape.total);
  std::size_t row = 0;
  for (std::size_t q = 0; q < sequences.size(); ++q) {
    const Matrix& s = sequences[q];
    for (std::size_t t = 1; t <= s.rows(); ++t, ++row) {
      dm.row_map.push_back({q, t});
      for (std::size_t back = 0; back < t; ++back) {
        const auto x = s.row(t - 1 - back);
        std::copy(x.begin(), x.end(), dm.Xi.row(row).begin() + static_cast<std::ptrdiff_t>(back * shape.a));
      }
    }
  }
  return dm;
}

// Lazily generated column slices of the data matrix: slice j (0-based) is the
// block of columns holding x_{t-j} for every row. Each slice is total x a.
inline auto data_matrix_slices(std::span<const Matrix> sequences) {
  const auto shape = detail::corpus_shape(sequences);
  return std::views::iota(std::size_t{0}, shape.l_max) |
         std::views::transform([sequences, shape](std::size_t back) {
           Matrix slice(shape.total, shape.a);
           std::size_t row = 0;
           for (const Matrix& s : sequences) {
             for (std::size_t t = 1; t <= s.rows(); ++t, ++row) {
               if (t <= back) continue;
               const auto x = s.row(t - 1 - back);
               std::copy(x.begin(), x.end(), slice.row(row).begin());
             }
           }
           return slice;
         });
}

struct LaesFitOptions {
  bool use_slices = false;
  // Forwarded to the slice SVD; 0 means exact (no rank cap between merges).
  std::size_t working_rank = 0;
};

// Builds A = omega^T P and B = omega^T R omega from the right singular factor
// `omega` ((l_max * a) x p) without materializing the selectors P and R.
inline LaesModel laes_from_factor(const Matrix& omega, std::size_t a) {
  const std::size_t p = omega.cols();
  if (a == 0 || omega.rows() % a != 0) throw DimensionError("laes_from_factor: rows not a multiple of a");
  const std::size_t blocks = omega.rows() / a;
  LaesModel model{Matrix(p, a), Matrix(p, p), Matrix(a + p, p), p, a};
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < a; ++j) model.A(i, j) = omega(j, i);
  // B = sum_b Omega_{b+1}^T Omega_b over consecutive a-row blocks.
  for (std::size_t b = 0; b + 1 < blocks; ++b) {
    for (std::size_t r = 0; r < a; ++r) {
      const auto newer = omega.row(b * a + r);
      const auto older = omega.row((b + 1) * a + r);
      for (std::size_t i = 0; i < p; ++i) {
        const double oi = older[i];
        if (oi == 0.0) continue;
        for (std::size_t j = 0; j < p; ++j) model.B(i, j) += oi * newer[j];
      }
    }
  }
  model.C.set_block(0, 0, model.A.transpose());
  model.C.set_block(a, 0, model.B.transpose());
  return model;
}

// State sizes between the rank bound min(total steps, l_max * a) and
// l_max * a are served by completing the right singular basis with
// orthonormal directions of zero singular value.
inline LaesModel fit_laes(std::span<const Matrix> sequences, std::size_t p, const LaesFitOptions& opts = {}) {
  const auto shape = detail::corpus_shape(sequences);
  const std::size_t width = shape.l_max * shape.a;
  if (p < 1 || p > width) {
    throw DimensionError("fit_laes: p=" + std::to_string(p) + " outside [1, " + std::to_string(width) + "]");
  }
  const std::size_t k = std::min(p, shape.total);
  SvdResult svd;
  if (opts.use_slices) {
    svd = incremental_truncated_svd(data_matrix_slices(sequences), k, SliceSvdOptions{opts.working_rank});
  } else {
    svd = truncated_svd(build_data_matrix(sequences).Xi, k);
  }
  if (k == p) return laes_from_factor(svd.V, shape.a);
  std::vector<std::vector<double>> basis;
  for (std::size_t q = 0; q < k; ++q) basis.push_back(svd.V.col(q));
  detail::complete_orthonormal(basis, width, p);
  Matrix omega(width, p);
  for (std::size_t q = 0; q < p; ++q) omega.set_col(q, basis[q]);
  return laes_from_factor(omega, shape.a);
}

inline Matrix encode(const LaesModel& model, const Matrix& sequence) {
  if (sequence.cols() != model.a) {
    throw DimensionError("encode: element size " + std::to_string(sequence.cols()) + " != " +
                         std::to_string(model.a));
  }
  Matrix states(sequence.rows(), model.p);
  std::vector<double> prev(model.p, 0.0);
  for (std::size_t t = 0; t < sequence.rows(); ++t) {
    auto out = states.row(t);
    gemv_acc(model.A, sequence.row(t), out);
    gemv_acc(model.B, prev, out);
    prev.assign(out.begin(), out.end());
  }
  return states;
}

struct DecodedStep {
  Vector x;
  Vector m_prev;
};

inline DecodedStep decode_step(const LaesModel& model, std::span<const double> m) {
  if (m.size() != model.p) {
    throw DimensionError("decode_step: state length " + std::to_string(m.size()) + " != " +
                         std::to_string(model.p));
  }
  Vector out = model.C.apply(m);
  DecodedStep step;
  step.x.assign(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(model.a));
  step.m_prev.assign(out.begin() + static_cast<std::ptrdiff_t>(model.a), out.end());
  return step;
}

// Unrolls the decoder l times from the final state; rows come out in forward
// time order.
inline Matrix reconstruct(const LaesModel& model, std::span<const double> m_final, std::size_t l) {
  if (l < 1) throw PreconditionError("reconstruct: l must be >= 1");
  Matrix seq(l, model.a);
  Vector m(m_final.begin(), m_final.end());
  for (std::size_t i = 0; i < l; ++i) {
    DecodedStep step = decode_step(model, m);
    std::copy(step.x.begin(), step.x.end(), seq.row(l - 1 - i).begin());
    m = std::move(step.m_prev);
  }
  return seq;
}

// Max-abs reconstruction error of one sequence (encode, then decode from the
// last state).
inline double reconstruction_error(const LaesModel& model, const Matrix& sequence) {
  if (sequence.rows() == 0) return 0.0;
  const Matrix states = encode(model, sequence);
  const Matrix rec = reconstruct(model, states.row(states.rows() - 1), sequence.rows());
  return (rec - sequence).max_abs();
}

}  // namespace mslmn
