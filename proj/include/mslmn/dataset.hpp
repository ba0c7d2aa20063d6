#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "mslmn/errors.hpp"
#include "mslmn/matrix.hpp"

namespace mslmn {

enum class TaskKind { regression, classification };

inline const char* to_string(TaskKind kind) noexcept {
  return kind == TaskKind::regression ? "regression" : "classification";
}

inline TaskKind task_kind_from_string(const std::string& s) {
  if (s == "regression") return TaskKind::regression;
  if (s == "classification") return TaskKind::classification;
  throw FormatError("unknown task kind '" + s + "'");
}

struct SequenceItem {
  Matrix input;           // l x N_x
  Matrix target;          // l x N_y for regression, empty for classification
  std::size_t label = 0;  // classification only
};

struct SequenceDataset {
  std::vector<SequenceItem> items;
  TaskKind kind = TaskKind::regression;
  std::size_t n_x = 0;
  std::size_t n_y = 0;  // output size; the class count for classification
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::size_t l_max = 0;

  std::size_t num_classes() const noexcept { return kind == TaskKind::classification ? n_y : 0; }

  // Validation falls back to the clean training split when none is given.
  const std::vector<std::size_t>& validation_indices() const noexcept { return val.empty() ? train : val; }
  const std::vector<std::size_t>& test_indices() const noexcept { return test.empty() ? validation_indices() : test; }

  std::vector<Matrix> inputs(const std::vector<std::size_t>& indices) const {
    std::vector<Matrix> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(items.at(i).input);
    return out;
  }

  void validate() const {
    std::size_t lm = 0;
    for (const auto& item : items) {
      if (item.input.cols() != n_x) throw DimensionError("dataset: inconsistent input size");
      if (kind == TaskKind::regression) {
        if (item.target.rows() != item.input.rows() || item.target.cols() != n_y)
          throw DimensionError("dataset: regression target shape must be l x N_y");
      } else if (item.label >= n_y) {
        throw IndexError("dataset: label " + std::to_string(item.label) + " outside [0, " + std::to_string(n_y) + ")");
      }
      lm = std::max(lm, item.input.rows());
    }
    if (lm != l_max) throw DimensionError("dataset: l_max inconsistent with items");
    for (const auto* split : {&train, &val, &test})
      for (std::size_t i : *split)
        if (i >= items.size()) throw IndexError("dataset: split index out of range");
  }
};

// Non-owning view of one training example, possibly with a perturbed input.
struct Sample {
  const Matrix* input = nullptr;
  const Matrix* target = nullptr;
  std::size_t label = 0;
};

}  // namespace mslmn
