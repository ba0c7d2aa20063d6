#pragma once

#include <cstddef>

#include "mslmn/errors.hpp"
#include "mslmn/matrix.hpp"

namespace mslmn {

// 0/1 matrices that extract the newest element (P) and shift a reversed
// prefix one block towards the past (R) in the stacked sequence space of
// dimension l * a.
struct SelectorMatrices {
  Matrix P;  // (l*a) x a
  Matrix R;  // (l*a) x (l*a)
  std::size_t l = 0;
  std::size_t a = 0;
};

inline SelectorMatrices build_selectors(std::size_t l, std::size_t a) {
  if (l == 0 || a == 0) throw DimensionError("build_selectors: l and a must be >= 1");
  const std::size_t n = l * a;
  SelectorMatrices sel{Matrix(n, a), Matrix(n, n), l, a};
  for (std::size_t i = 0; i < a; ++i) sel.P(i, i) = 1.0;
  // Block row b+1 receives block b; block 0 is zeroed and block l-1 dropped.
  for (std::size_t i = 0; i + a < n; ++i) sel.R(i + a, i) = 1.0;
  return sel;
}

}  // namespace mslmn
