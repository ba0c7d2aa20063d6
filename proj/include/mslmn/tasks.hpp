#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mslmn/dataset.hpp"
#include "mslmn/errors.hpp"
#include "mslmn/matrix.hpp"
#include "mslmn/text.hpp"

namespace mslmn {

namespace detail {

// Per-feature mean/std over every step of the given items; applied to all
// items so the reference split ends up with zero mean and unit variance.
inline void standardize(SequenceDataset& data, const std::vector<std::size_t>& reference) {
  const std::size_t nx = data.n_x;
  std::vector<double> mean(nx, 0.0);
  std::vector<double> var(nx, 0.0);
  std::size_t count = 0;
  for (std::size_t i : reference) {
    const Matrix& x = data.items[i].input;
    for (std::size_t t = 0; t < x.rows(); ++t)
      for (std::size_t j = 0; j < nx; ++j) mean[j] += x(t, j);
    count += x.rows();
  }
  if (count == 0) return;
  for (double& m : mean) m /= static_cast<double>(count);
  for (std::size_t i : reference) {
    const Matrix& x = data.items[i].input;
    for (std::size_t t = 0; t < x.rows(); ++t)
      for (std::size_t j = 0; j < nx; ++j) var[j] += (x(t, j) - mean[j]) * (x(t, j) - mean[j]);
  }
  for (auto& item : data.items) {
    for (std::size_t t = 0; t < item.input.rows(); ++t)
      for (std::size_t j = 0; j < nx; ++j) {
        const double sd = std::sqrt(var[j] / static_cast<double>(count));
        item.input(t, j) = sd > 0.0 ? (item.input(t, j) - mean[j]) / sd : item.input(t, j) - mean[j];
      }
  }
}

// Per class, the first round(per_class * 5 / 7) items (at least one, and at
// least one left for test when possible) go to training, the rest to test.
inline void balanced_split(SequenceDataset& data) {
  const std::size_t classes = data.n_y;
  std::vector<std::vector<std::size_t>> per_class(classes);
  for (std::size_t i = 0; i < data.items.size(); ++i) per_class[data.items[i].label].push_back(i);
  data.train.clear();
  data.test.clear();
  for (const auto& members : per_class) {
    const std::size_t n = members.size();
    std::size_t n_train = static_cast<std::size_t>(std::lround(static_cast<double>(n) * 5.0 / 7.0));
    n_train = std::clamp<std::size_t>(n_train, std::min<std::size_t>(1, n), n > 1 ? n - 1 : n);
    for (std::size_t j = 0; j < n; ++j) (j < n_train ? data.train : data.test).push_back(members[j]);
  }
  std::sort(data.train.begin(), data.train.end());
  std::sort(data.test.begin(), data.test.end());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sequence generation

struct SignalSynthesizer {
  std::uint64_t seed = 7;
  std::size_t components = 5;
  double min_period = 12.0;  // samples
  double max_period = 300.0;
  double noise_std = 0.01;   // relative to the peak amplitude
};

// Sum of sinusoids with log-uniform periods, random phases and amplitudes
// decaying with frequency, plus Gaussian noise. Not scaled.
inline std::vector<double> synthesize_signal(std::size_t n, const SignalSynthesizer& spec = {}) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  struct Wave {
    double period, phase, amplitude;
  };
  std::vector<Wave> waves;
  const double lo = std::log(spec.min_period);
  const double hi = std::log(spec.max_period);
  for (std::size_t c = 0; c < spec.components; ++c) {
    const double period = std::exp(lo + (hi - lo) * unit(rng));
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    const double amplitude = (0.5 + 0.5 * unit(rng)) * std::sqrt(period / spec.max_period);
    waves.push_back({period, phase, amplitude});
  }
  double peak = 0.0;
  for (const auto& w : waves) peak += w.amplitude;
  std::vector<double> signal(n);
  for (std::size_t t = 0; t < n; ++t) {
    double v = 0.0;
    for (const auto& w : waves) v += w.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / w.period + w.phase);
    signal[t] = v + spec.noise_std * peak * gauss(rng);
  }
  return signal;
}

// One real per line; blank lines and lines starting with '#' are skipped.
inline std::vector<double> load_signal_file(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto v = detail::parse_double(t);
    if (!v || !std::isfinite(*v)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": not a finite number");
    }
    out.push_back(*v);
  }
  return out;
}

// Min-max scaling onto [-1, 1].
inline std::vector<double> scale_to_unit_range(std::span<const double> signal) {
  if (signal.empty()) throw EmptyInputError("scale_to_unit_range: empty signal");
  const auto [lo, hi] = std::minmax_element(signal.begin(), signal.end());
  if (*hi == *lo) throw ScalingError("signal is constant; cannot scale to [-1, 1]");
  const double lo_v = *lo;
  const double span = *hi - *lo;
  std::vector<double> out(signal.size());
  for (std::size_t i = 0; i < signal.size(); ++i) {
    out[i] = 2.0 * (signal[i] - lo_v) / span - 1.0;
  }
  // Pin the extremes so both endpoints are attained exactly.
  out[static_cast<std::size_t>(lo - signal.begin())] = -1.0;
  out[static_cast<std::size_t>(hi - signal.begin())] = 1.0;
  return out;
}

// Single-item regression dataset: the input is an all-zero one-dimensional
// sequence of length n, the target the first n samples of the signal scaled
// to [-1, 1]. Without a file, the built-in synthesizer provides the signal.
inline SequenceDataset make_generation_task(const std::optional<std::filesystem::path>& signal_file, std::size_t n = 300,
                                            const SignalSynthesizer& synth = {}) {
  if (n < 1) throw PreconditionError("make_generation_task: n must be >= 1");
  std::vector<double> raw;
  if (signal_file) {
    raw = load_signal_file(*signal_file);
    if (raw.size() < n) {
      throw InputError(signal_file->string() + ": has " + std::to_string(raw.size()) + " samples, need " +
                       std::to_string(n));
    }
    raw.resize(n);
  } else {
    raw = synthesize_signal(n, synth);
  }
  const std::vector<double> scaled = scale_to_unit_range(raw);
  SequenceDataset data;
  data.kind = TaskKind::regression;
  data.n_x = 1;
  data.n_y = 1;
  data.l_max = n;
  data.items.push_back({Matrix(n, 1), Matrix(n, 1, scaled), 0});
  data.train = {0};
  return data;
}

// ---------------------------------------------------------------------------
// Common-suffix classification

struct CommonSuffixSpec {
  std::size_t classes = 5;
  std::size_t per_class = 7;
  std::size_t prefix_len = 16;
  std::size_t suffix_len = 80;
  std::uint64_t seed = 0;
  std::size_t features = 13;
  double jitter_std = 0.5;  // per-item perturbation of the templates
};

// Every item is its class's prefix template followed by a suffix template
// shared by all classes, both perturbed by per-item Gaussian jitter. Features
// are standardized with training-split statistics.
inline SequenceDataset make_common_suffix_task(const CommonSuffixSpec& spec) {
  if (spec.classes < 2) throw DimensionError("common-suffix task: classes must be >= 2");
  if (spec.per_class < 1 || spec.prefix_len < 1 || spec.features < 1) {
    throw DimensionError("common-suffix task: per_class, prefix_len and features must be >= 1");
  }
  if (spec.jitter_std < 0.0) throw PreconditionError("common-suffix task: jitter_std must be >= 0");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto gaussian_matrix = [&](std::size_t rows) {
    Matrix m(rows, spec.features);
    for (double& v : m.data()) v = gauss(rng);
    return m;
  };
  std::vector<Matrix> prefixes;
  for (std::size_t c = 0; c < spec.classes; ++c) prefixes.push_back(gaussian_matrix(spec.prefix_len));
  const Matrix suffix = gaussian_matrix(spec.suffix_len);

  SequenceDataset data;
  data.kind = TaskKind::classification;
  data.n_x = spec.features;
  data.n_y = spec.classes;
  data.l_max = spec.prefix_len + spec.suffix_len;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t j = 0; j < spec.per_class; ++j) {
      Matrix x(data.l_max, spec.features);
      x.set_block(0, 0, prefixes[c]);
      if (spec.suffix_len > 0) x.set_block(spec.prefix_len, 0, suffix);
      for (double& v : x.data()) v += spec.jitter_std * gauss(rng);
      data.items.push_back({std::move(x), Matrix(), c});
    }
  }
  detail::balanced_split(data);
  detail::standardize(data, data.train);
  return data;
}

// ---------------------------------------------------------------------------
// Precomputed feature files

// Header row, then one timestep per row of comma-separated reals.
inline Matrix load_feature_csv_file(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header row");
  const std::size_t cols = detail::split(detail::trim(line), ',').size();
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    const auto fields = detail::split(t, ',');
    if (fields.size() != cols) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(cols) +
                        " columns, found " + std::to_string(fields.size()));
    }
    for (const auto f : fields) {
      const auto v = detail::parse_double(f);
      if (!v || !std::isfinite(*v)) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad number");
      values.push_back(*v);
    }
    ++rows;
  }
  return Matrix(rows, cols, std::move(values));
}

enum class Split { unspecified, train, test };

// Classification dataset with one item per feature file. Without explicit
// splits, each class is split 5:2 in file order. Standardization statistics
// come from the training split only.
inline SequenceDataset load_feature_csv(const std::vector<std::filesystem::path>& paths,
                                        const std::vector<std::size_t>& labels,
                                        const std::vector<Split>& splits = {}) {
  if (paths.empty()) throw EmptyInputError("load_feature_csv: no files");
  if (labels.size() != paths.size()) {
    throw InputError("load_feature_csv: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(paths.size()) + " files");
  }
  if (!splits.empty() && splits.size() != paths.size()) throw InputError("load_feature_csv: split count mismatch");
  SequenceDataset data;
  data.kind = TaskKind::classification;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    Matrix x = load_feature_csv_file(paths[i]);
    if (i == 0) data.n_x = x.cols();
    if (x.cols() != data.n_x) {
      throw FormatError(paths[i].string() + ": " + std::to_string(x.cols()) + " columns, expected " +
                        std::to_string(data.n_x));
    }
    if (x.rows() == 0) throw FormatError(paths[i].string() + ": no data rows");
    data.l_max = std::max(data.l_max, x.rows());
    data.items.push_back({std::move(x), Matrix(), labels[i]});
  }
  data.n_y = std::max<std::size_t>(2, *std::max_element(labels.begin(), labels.end()) + 1);
  const bool explicit_split =
      !splits.empty() && std::any_of(splits.begin(), splits.end(), [](Split s) { return s != Split::unspecified; });
  if (explicit_split) {
    for (std::size_t i = 0; i < splits.size(); ++i) (splits[i] == Split::test ? data.test : data.train).push_back(i);
  } else {
    detail::balanced_split(data);
  }
  detail::standardize(data, data.train);
  return data;
}

struct LabelFile {
  std::vector<std::filesystem::path> paths;
  std::vector<std::size_t> labels;
  std::vector<Split> splits;
};

// Lines of "path,label" with an optional third field "train" or "test".
// Relative paths resolve against the label file's directory.
inline LabelFile load_label_file(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  LabelFile lf;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto fields = detail::split(t, ',');
    if (fields.size() < 2 || fields.size() > 3) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected path,label[,split]");
    }
    const auto label = detail::parse_double(fields[1]);
    if (!label || *label < 0 || std::floor(*label) != *label) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": label must be a non-negative integer");
    }
    std::filesystem::path p{std::string(detail::trim(fields[0]))};
    if (p.is_relative()) p = path.parent_path() / p;
    Split split = Split::unspecified;
    if (fields.size() == 3) {
      const auto s = detail::trim(fields[2]);
      if (s == "train") split = Split::train;
      else if (s == "test") split = Split::test;
      else throw FormatError(path.string() + ":" + std::to_string(lineno) + ": split must be train or test");
    }
    lf.paths.push_back(std::move(p));
    lf.labels.push_back(static_cast<std::size_t>(*label));
    lf.splits.push_back(split);
  }
  return lf;
}

}  // namespace mslmn
