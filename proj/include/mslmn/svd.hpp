#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <ranges>
#include <string>
#include <utility>
#include <vector>

#include "mslmn/errors.hpp"
#include "mslmn/matrix.hpp"

namespace mslmn {

// Thin singular value decomposition M ~= U diag(S) V^T. U is rows x k, V is
// cols x k, S is non-increasing.
template <std::floating_point T>
struct BasicSvdResult {
  BasicMatrix<T> U;
  std::vector<T> S;
  BasicMatrix<T> V;

  std::size_t rank() const noexcept { return S.size(); }

  BasicMatrix<T> reconstruct() const {
    BasicMatrix<T> us = U;
    for (std::size_t r = 0; r < us.rows(); ++r)
      for (std::size_t c = 0; c < us.cols(); ++c) us(r, c) *= S[c];
    return us * V.transpose();
  }
};

using SvdResult = BasicSvdResult<double>;

namespace detail {

template <std::floating_point T>
T dot(const T* a, const T* b, std::size_t n) noexcept {
  T s{0};
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// Columns stored as rows of a row-major matrix ("column bank"): row j of
// `bank` is column j of the logical matrix. Extends `bank` (count x n) with
// unit vectors orthogonal to every existing row until it has `target` rows.
// Candidates are the canonical basis vectors in index order, so the
// completion is deterministic.
template <std::floating_point T>
void complete_orthonormal(std::vector<std::vector<T>>& bank, std::size_t n, std::size_t target) {
  for (std::size_t e = 0; e < n && bank.size() < target; ++e) {
    std::vector<T> v(n, T{0});
    v[e] = T{1};
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : bank) {
        const T proj = dot(q.data(), v.data(), n);
        for (std::size_t i = 0; i < n; ++i) v[i] -= proj * q[i];
      }
    }
    const T norm = std::sqrt(dot(v.data(), v.data(), n));
    if (norm < T{0.5}) continue;
    for (T& x : v) x /= norm;
    bank.push_back(std::move(v));
  }
}

// One-sided (Hestenes) Jacobi on a matrix whose columns are given as the rows
// of `cols` (m vectors of length n, with n >= m expected). On return the
// vectors are mutually orthogonal and `rot` (m x m, rows are columns) holds
// the accumulated right rotation.
template <std::floating_point T>
void hestenes_jacobi(std::vector<std::vector<T>>& cols, std::vector<std::vector<T>>& rot) {
  const std::size_t m = cols.size();
  const std::size_t n = m == 0 ? 0 : cols[0].size();
  rot.assign(m, std::vector<T>(m, T{0}));
  for (std::size_t i = 0; i < m; ++i) rot[i][i] = T{1};
  constexpr T tol = std::numeric_limits<T>::epsilon();
  constexpr int max_sweeps = 100;

  std::vector<T> norms(m);
  for (std::size_t j = 0; j < m; ++j) norms[j] = dot(cols[j].data(), cols[j].data(), n);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < m; ++p) {
      for (std::size_t q = p + 1; q < m; ++q) {
        const T alpha = norms[p];
        const T beta = norms[q];
        if (alpha == T{0} || beta == T{0}) continue;
        T* xp = cols[p].data();
        T* xq = cols[q].data();
        const T gamma = dot(xp, xq, n);
        if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const T zeta = (beta - alpha) / (T{2} * gamma);
        const T t = (zeta >= T{0} ? T{1} : T{-1}) / (std::abs(zeta) + std::sqrt(T{1} + zeta * zeta));
        const T c = T{1} / std::sqrt(T{1} + t * t);
        const T s = c * t;
        for (std::size_t i = 0; i < n; ++i) {
          const T a = xp[i];
          const T b = xq[i];
          xp[i] = c * a - s * b;
          xq[i] = s * a + c * b;
        }
        T* vp = rot[p].data();
        T* vq = rot[q].data();
        for (std::size_t i = 0; i < m; ++i) {
          const T a = vp[i];
          const T b = vq[i];
          vp[i] = c * a - s * b;
          vq[i] = s * a + c * b;
        }
        // Recompute rather than update incrementally; keeps the norms exact
        // enough for the convergence test on nearly dependent columns.
        norms[p] = dot(xp, xp, n);
        norms[q] = dot(xq, xq, n);
      }
    }
    if (!rotated) break;
  }
}

}  // namespace detail

// Top-k singular triples of `m`, computed by one-sided Jacobi on the thinner
// orientation. Left/right vectors belonging to (numerically) zero singular
// values are completed to an orthonormal set.
template <std::floating_point T>
BasicSvdResult<T> truncated_svd(const BasicMatrix<T>& m, std::size_t k) {
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  if (k < 1 || k > std::min(rows, cols)) {
    throw DimensionError("truncated_svd: k=" + std::to_string(k) + " outside [1, " +
                         std::to_string(std::min(rows, cols)) + "]");
  }
  require_finite(m, "truncated_svd");

  // Work on X with n >= w columns: X = M when rows >= cols, else M^T.
  const bool transposed = rows < cols;
  const std::size_t n = transposed ? cols : rows;
  const std::size_t w = transposed ? rows : cols;

  std::vector<std::vector<T>> x(w, std::vector<T>(n));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      if (transposed)
        x[r][c] = m(r, c);
      else
        x[c][r] = m(r, c);
    }

  std::vector<std::vector<T>> rot;
  detail::hestenes_jacobi(x, rot);

  std::vector<T> sigma(w);
  for (std::size_t j = 0; j < w; ++j) sigma[j] = std::sqrt(detail::dot(x[j].data(), x[j].data(), n));
  std::vector<std::size_t> order(w);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

  const T smax = sigma[order[0]];
  const T zero_tol = smax * static_cast<T>(std::max(n, w)) * std::numeric_limits<T>::epsilon();

  // Long side vectors: normalized Jacobi columns, completed where sigma ~ 0.
  std::vector<std::vector<T>> long_vecs;
  std::vector<std::vector<T>> short_vecs;
  std::vector<T> s;
  long_vecs.reserve(k);
  std::size_t needs_completion = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = order[i];
    s.push_back(sigma[j]);
    short_vecs.push_back(rot[j]);
    if (sigma[j] > zero_tol && sigma[j] > T{0}) {
      std::vector<T> u = x[j];
      for (T& v : u) v /= sigma[j];
      long_vecs.push_back(std::move(u));
    } else {
      ++needs_completion;
    }
  }
  // Numerically zero singular values carry no reliable long-side direction.
  if (needs_completion > 0) detail::complete_orthonormal(long_vecs, n, k);

  BasicMatrix<T> long_m(n, k);
  BasicMatrix<T> short_m(w, k);
  for (std::size_t i = 0; i < k; ++i) {
    long_m.set_col(i, long_vecs[i]);
    short_m.set_col(i, short_vecs[i]);
  }
  if (transposed) return {std::move(short_m), std::move(s), std::move(long_m)};
  return {std::move(long_m), std::move(s), std::move(short_m)};
}

template <std::floating_point T>
BasicSvdResult<T> full_thin_svd(const BasicMatrix<T>& m) {
  return truncated_svd(m, std::min(m.rows(), m.cols()));
}

struct SliceSvdOptions {
  // Cap on the rank tracked between merges. Zero keeps every direction whose
  // singular value is above `drop_tolerance * S1`, which makes the result
  // agree with the direct decomposition; a positive cap bounds memory to
  // O(rows * max(k, working_rank)) at the price of an approximation.
  std::size_t working_rank = 0;
  double drop_tolerance = 1e-13;
};

// Truncated SVD of the horizontal concatenation [C1 C2 ...] of the given
// column slices, processed one slice at a time. Each slice is merged into the
// running factorization by projecting it on the current left basis,
// orthogonalizing the residual (QR) and re-decomposing the small core
//   [ diag(S)  U^T C ]
//   [    0       K   ]
// Only the current slice and the running factors are held in memory.
template <std::ranges::input_range Slices>
  requires std::convertible_to<std::ranges::range_reference_t<Slices>, const Matrix&>
SvdResult incremental_truncated_svd(Slices&& slices, std::size_t k, const SliceSvdOptions& opts = {}) {
  if (k < 1) throw DimensionError("incremental_truncated_svd: k must be >= 1");

  std::size_t n = 0;
  bool first = true;
  std::size_t total_cols = 0;
  std::vector<std::vector<double>> u;  // r columns of length n
  std::vector<double> s;
  Matrix v;                            // total_cols x r

  for (auto&& slice_ref : slices) {
    const Matrix& c = slice_ref;
    if (first) {
      n = c.rows();
      first = false;
    } else if (c.rows() != n) {
      throw DimensionError("incremental_truncated_svd: slice has " + std::to_string(c.rows()) +
                           " rows, expected " + std::to_string(n));
    }
    require_finite(c, "incremental_truncated_svd");
    const std::size_t a = c.cols();
    if (a == 0) continue;
    const std::size_t r = u.size();

    // Residual columns of the slice after projecting out span(U), with the
    // projection coefficients L = U^T C accumulated over two passes.
    Matrix proj(r, a);
    std::vector<std::vector<double>> resid(a, std::vector<double>(n));
    for (std::size_t j = 0; j < a; ++j)
      for (std::size_t i = 0; i < n; ++i) resid[j][i] = c(i, j);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < a; ++j) {
        for (std::size_t q = 0; q < r; ++q) {
          const double coef = detail::dot(u[q].data(), resid[j].data(), n);
          proj(q, j) += coef;
          for (std::size_t i = 0; i < n; ++i) resid[j][i] -= coef * u[q][i];
        }
      }
    }

    // Modified Gram-Schmidt with reorthogonalization: resid = J K.
    Matrix kq(a, a);
    std::vector<std::vector<double>> jcols(a, std::vector<double>(n, 0.0));
    double scale = s.empty() ? 0.0 : s.front();
    for (std::size_t j = 0; j < a; ++j)
      scale = std::max(scale, std::sqrt(detail::dot(resid[j].data(), resid[j].data(), n)));
    for (std::size_t j = 0; j < a; ++j) {
      std::vector<double>& w = resid[j];
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t q = 0; q < j; ++q) {
          const double coef = detail::dot(jcols[q].data(), w.data(), n);
          kq(q, j) += coef;
          for (std::size_t i = 0; i < n; ++i) w[i] -= coef * jcols[q][i];
        }
        for (std::size_t q = 0; q < r; ++q) {
          // Keeps the new directions orthogonal to U; the leaked component
          // is below round-off and is not added back into L.
          const double coef = detail::dot(u[q].data(), w.data(), n);
          for (std::size_t i = 0; i < n; ++i) w[i] -= coef * u[q][i];
        }
      }
      const double norm = std::sqrt(detail::dot(w.data(), w.data(), n));
      if (norm > 1e-14 * scale && norm > 0.0) {
        kq(j, j) = norm;
        for (std::size_t i = 0; i < n; ++i) jcols[j][i] = w[i] / norm;
      }
    }

    const std::size_t core_n = r + a;
    Matrix core(core_n, core_n);
    for (std::size_t q = 0; q < r; ++q) core(q, q) = s[q];
    core.set_block(0, r, proj);
    core.set_block(r, r, kq);

    const SvdResult cs = full_thin_svd(core);
    const double s1 = cs.S.front();
    std::size_t keep = 0;
    while (keep < core_n && cs.S[keep] > opts.drop_tolerance * s1 && cs.S[keep] > 0.0) ++keep;
    if (opts.working_rank > 0) keep = std::min(keep, std::max(k, opts.working_rank));

    // U <- [U J] Uc(:, :keep)
    std::vector<std::vector<double>> new_u(keep, std::vector<double>(n, 0.0));
    for (std::size_t col = 0; col < keep; ++col) {
      for (std::size_t q = 0; q < core_n; ++q) {
        const double coef = cs.U(q, col);
        if (coef == 0.0) continue;
        const std::vector<double>& basis = q < r ? u[q] : jcols[q - r];
        for (std::size_t i = 0; i < n; ++i) new_u[col][i] += coef * basis[i];
      }
    }

    // V <- [[V, 0], [0, I_a]] Vc(:, :keep)
    Matrix new_v(total_cols + a, keep);
    for (std::size_t row = 0; row < total_cols; ++row)
      for (std::size_t col = 0; col < keep; ++col) {
        double acc = 0.0;
        for (std::size_t q = 0; q < r; ++q) acc += v(row, q) * cs.V(q, col);
        new_v(row, col) = acc;
      }
    for (std::size_t j = 0; j < a; ++j)
      for (std::size_t col = 0; col < keep; ++col) new_v(total_cols + j, col) = cs.V(r + j, col);

    u = std::move(new_u);
    s.assign(cs.S.begin(), cs.S.begin() + static_cast<std::ptrdiff_t>(keep));
    v = std::move(new_v);
    total_cols += a;
  }

  if (first) throw EmptyInputError("incremental_truncated_svd: no slices");
  if (k > std::min(n, total_cols)) {
    throw DimensionError("incremental_truncated_svd: k=" + std::to_string(k) + " exceeds min(rows, cols)=" +
                         std::to_string(std::min(n, total_cols)));
  }

  // Pad with zero singular values and complete the bases when the tracked
  // rank fell below k.
  const std::size_t r = u.size();
  std::vector<std::vector<double>> vcols;
  for (std::size_t q = 0; q < std::min(r, k); ++q) vcols.push_back(v.col(q));
  u.resize(std::min(r, k));
  s.resize(k, 0.0);
  detail::complete_orthonormal(u, n, k);
  detail::complete_orthonormal(vcols, total_cols, k);

  SvdResult out{Matrix(n, k), std::move(s), Matrix(total_cols, k)};
  for (std::size_t q = 0; q < k; ++q) {
    out.U.set_col(q, u[q]);
    out.V.set_col(q, vcols[q]);
  }
  return out;
}

// Splits `m` into consecutive column slices of width `width` (the last one may
// be narrower).
inline std::vector<Matrix> column_slices(const Matrix& m, std::size_t width) {
  if (width == 0) throw DimensionError("column_slices: width must be >= 1");
  std::vector<Matrix> out;
  for (std::size_t c0 = 0; c0 < m.cols(); c0 += width)
    out.push_back(m.block(0, c0, m.rows(), std::min(width, m.cols() - c0)));
  return out;
}

inline constexpr double kDefaultRcond = 1e-10;

// Moore-Penrose pseudoinverse. Singular values <= rcond * S1 are treated as
// zero.
template <std::floating_point T>
BasicMatrix<T> pseudoinverse(const BasicMatrix<T>& m, T rcond = static_cast<T>(kDefaultRcond)) {
  if (rcond < T{0}) throw PreconditionError("pseudoinverse: rcond must be >= 0");
  require_finite(m, "pseudoinverse");
  if (m.rows() == 0 || m.cols() == 0) return BasicMatrix<T>(m.cols(), m.rows());
  const auto svd = full_thin_svd(m);
  const T cutoff = rcond * svd.S.front();
  BasicMatrix<T> out(m.cols(), m.rows());
  for (std::size_t q = 0; q < svd.S.size(); ++q) {
    const T sq = svd.S[q];
    if (sq <= cutoff || sq == T{0}) continue;
    const T inv = T{1} / sq;
    for (std::size_t i = 0; i < m.cols(); ++i) {
      const T vi = svd.V(i, q) * inv;
      if (vi == T{0}) continue;
      for (std::size_t j = 0; j < m.rows(); ++j) out(i, j) += vi * svd.U(j, q);
    }
  }
  return out;
}

// Minimum-norm solution of min ||X W - Y||^2 + ridge ||W||^2 through the SVD
// of X. With ridge = 0 this equals pinv(X) Y.
inline Matrix least_squares(const Matrix& x, const Matrix& y, double ridge = 0.0, double rcond = kDefaultRcond) {
  if (x.rows() != y.rows()) throw DimensionError("least_squares: X and Y row counts differ");
  if (ridge < 0.0) throw PreconditionError("least_squares: ridge must be >= 0");
  require_finite(x, "least_squares");
  require_finite(y, "least_squares");
  Matrix w(x.cols(), y.cols());
  if (x.rows() == 0 || x.cols() == 0) return w;
  const SvdResult svd = full_thin_svd(x);
  const double cutoff = rcond * svd.S.front();
  const Matrix uty = svd.U.transpose() * y;  // k x ny
  for (std::size_t q = 0; q < svd.S.size(); ++q) {
    const double sq = svd.S[q];
    if (sq <= cutoff || sq == 0.0) continue;
    const double f = ridge == 0.0 ? 1.0 / sq : sq / (sq * sq + ridge);
    for (std::size_t i = 0; i < x.cols(); ++i) {
      const double vi = svd.V(i, q) * f;
      for (std::size_t j = 0; j < y.cols(); ++j) w(i, j) += vi * uty(q, j);
    }
  }
  return w;
}

}  // namespace mslmn
