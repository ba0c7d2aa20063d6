#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mslmn/errors.hpp"
#include "mslmn/matrix.hpp"

namespace mslmn {

enum class LossKind {
  mse,            // per-step mean squared error (regression)
  cross_entropy,  // softmax cross-entropy on the last step (classification)
};

// Sum of squared errors divided by the target's total squared deviation from
// its mean. 1.0 is the score of the constant mean predictor.
inline double nmse(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw DimensionError("nmse: shapes " + pred.shape_string() + " and " + target.shape_string() + " differ");
  }
  if (target.empty()) throw EmptyInputError("nmse: empty target");
  double mean = 0.0;
  for (double v : target.data()) mean += v;
  mean /= static_cast<double>(target.size());
  double err = 0.0;
  double var = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = pred.data()[i] - target.data()[i];
    const double c = target.data()[i] - mean;
    err += d * d;
    var += c * c;
  }
  if (var == 0.0) throw UndefinedMetricError("nmse: target is constant");
  return err / var;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : p) v /= z;
  return p;
}

inline double cross_entropy(std::span<const double> logits, std::size_t label) {
  if (logits.size() < 2) throw PreconditionError("cross_entropy: need at least 2 classes");
  if (label >= logits.size()) {
    throw IndexError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                     std::to_string(logits.size()) + ")");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return -(logits[label] - mx - std::log(z));
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace mslmn
