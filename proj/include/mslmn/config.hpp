#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mslmn/adam.hpp"
#include "mslmn/errors.hpp"
#include "mslmn/tasks.hpp"
#include "mslmn/text.hpp"
#include "mslmn/trainer.hpp"

namespace mslmn {

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A TOML subset: [section] headers, key = value pairs, '#' comments. Values
// are strings, integers, floats, booleans or one-line arrays of those.
struct ConfigValue {
  using Scalar = std::variant<std::string, std::int64_t, double, bool>;
  std::variant<Scalar, std::vector<Scalar>> value;
  std::size_t line = 0;
};

class ConfigTable {
 public:
  static ConfigTable parse(std::string_view text, const std::string& source = "<config>") {
    ConfigTable table;
    table.source_ = source;
    std::string section;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto eol = text.find('\n', pos);
      std::string_view raw = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
      pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
      ++lineno;
      const std::string_view line = detail::trim(strip_comment(raw));
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']' || line.size() < 3) table.fail(lineno, "malformed section header");
        section = std::string(detail::trim(line.substr(1, line.size() - 2)));
        if (!valid_key(section)) table.fail(lineno, "invalid section name '" + section + "'");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) table.fail(lineno, "expected key = value");
      const std::string key(detail::trim(line.substr(0, eq)));
      if (!valid_key(key)) table.fail(lineno, "invalid key '" + key + "'");
      const std::string full = section.empty() ? key : section + "." + key;
      if (table.values_.count(full) != 0) table.fail(lineno, "duplicate key '" + full + "'");
      ConfigValue v;
      v.line = lineno;
      v.value = table.parse_value(detail::trim(line.substr(eq + 1)), lineno);
      table.values_.emplace(full, std::move(v));
    }
    return table;
  }

  static ConfigTable load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& source() const noexcept { return source_; }

  std::optional<std::string> get_string(const std::string& key) {
    const auto* s = scalar(key);
    if (s == nullptr) return std::nullopt;
    if (const auto* str = std::get_if<std::string>(s)) return *str;
    fail_key(key, "expected a string");
  }

  std::optional<double> get_double(const std::string& key) {
    const auto* s = scalar(key);
    if (s == nullptr) return std::nullopt;
    if (const auto* d = std::get_if<double>(s)) return *d;
    if (const auto* i = std::get_if<std::int64_t>(s)) return static_cast<double>(*i);
    fail_key(key, "expected a number");
  }

  std::optional<std::uint64_t> get_uint(const std::string& key) {
    const auto* s = scalar(key);
    if (s == nullptr) return std::nullopt;
    if (const auto* i = std::get_if<std::int64_t>(s); i != nullptr && *i >= 0) return static_cast<std::uint64_t>(*i);
    fail_key(key, "expected a non-negative integer");
  }

  std::optional<bool> get_bool(const std::string& key) {
    const auto* s = scalar(key);
    if (s == nullptr) return std::nullopt;
    if (const auto* b = std::get_if<bool>(s)) return *b;
    fail_key(key, "expected true or false");
  }

  std::optional<std::vector<std::uint64_t>> get_uint_list(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    used_.insert(key);
    std::vector<std::uint64_t> out;
    const auto* list = std::get_if<std::vector<ConfigValue::Scalar>>(&it->second.value);
    if (list == nullptr) fail_key(key, "expected an array of non-negative integers");
    for (const auto& s : *list) {
      const auto* i = std::get_if<std::int64_t>(&s);
      if (i == nullptr || *i < 0) fail_key(key, "expected an array of non-negative integers");
      out.push_back(static_cast<std::uint64_t>(*i));
    }
    return out;
  }

  // Every key must have been read by now; anything left is a typo.
  void reject_unused() const {
    for (const auto& [key, v] : values_) {
      if (used_.count(key) == 0) fail(v.line, "unknown key '" + key + "'");
    }
  }

  [[noreturn]] void fail_key(const std::string& key, const std::string& what) const {
    const auto it = values_.find(key);
    fail(it == values_.end() ? 0 : it->second.line, key + ": " + what);
  }

  [[noreturn]] void fail(std::size_t line, const std::string& what) const {
    throw ConfigError(source_ + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what);
  }

 private:
  static std::string_view strip_comment(std::string_view s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
  }

  static bool valid_key(std::string_view k) {
    if (k.empty()) return false;
    for (char c : k) {
      const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
      if (!ok) return false;
    }
    return true;
  }

  ConfigValue::Scalar parse_scalar(std::string_view s, std::size_t line) const {
    if (s.empty()) fail(line, "missing value");
    if (s.front() == '"') {
      if (s.size() < 2 || s.back() != '"') fail(line, "unterminated string");
      return std::string(s.substr(1, s.size() - 2));
    }
    if (s == "true") return true;
    if (s == "false") return false;
    std::string digits;
    for (char c : s)
      if (c != '_') digits.push_back(c);
    const bool integral = digits.find_first_of(".eEn") == std::string::npos;
    if (integral) {
      std::int64_t v = 0;
      const char* b = digits.data() + (digits.front() == '+' ? 1 : 0);
      const auto [ptr, ec] = std::from_chars(b, digits.data() + digits.size(), v);
      if (ec == std::errc() && ptr == digits.data() + digits.size()) return v;
    }
    const auto d = detail::parse_double(digits);
    if (!d || !std::isfinite(*d)) fail(line, "cannot parse value '" + std::string(s) + "'");
    return *d;
  }

  std::variant<ConfigValue::Scalar, std::vector<ConfigValue::Scalar>> parse_value(std::string_view s,
                                                                                    std::size_t line) const {
    if (!s.empty() && s.front() == '[') {
      if (s.back() != ']') fail(line, "arrays must open and close on one line");
      std::vector<ConfigValue::Scalar> out;
      const auto inner = detail::trim(s.substr(1, s.size() - 2));
      if (inner.empty()) return out;
      for (const auto part : detail::split(inner, ',')) {
        const auto t = detail::trim(part);
        if (t.empty()) continue;  // trailing comma
        out.push_back(parse_scalar(t, line));
      }
      return out;
    }
    return parse_scalar(s, line);
  }

  const ConfigValue::Scalar* scalar(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    used_.insert(key);
    const auto* s = std::get_if<ConfigValue::Scalar>(&it->second.value);
    if (s == nullptr) fail_key(key, "expected a single value, found an array");
    return s;
  }

  std::string source_;
  std::map<std::string, ConfigValue> values_;
  std::set<std::string> used_;
};

enum class TaskSource { generation, common_suffix, feature_csv };
enum class TrainMode { incremental, fixed };

inline const char* to_string(TaskSource t) noexcept {
  switch (t) {
    case TaskSource::generation: return "generation";
    case TaskSource::common_suffix: return "common-suffix";
    case TaskSource::feature_csv: return "feature-csv";
  }
  return "?";
}

inline const char* to_string(TrainMode m) noexcept { return m == TrainMode::fixed ? "fixed" : "incremental"; }

struct TaskConfig {
  TaskSource source = TaskSource::generation;
  // generation
  std::optional<std::filesystem::path> signal_file;
  std::size_t length = 300;
  SignalSynthesizer synth;
  // common-suffix
  CommonSuffixSpec suffix;
  // feature-csv
  std::filesystem::path label_file;
};

struct ExperimentConfig {
  TaskConfig task;
  Architecture arch;
  TrainConfig train;
  TrainMode mode = TrainMode::fixed;
  std::filesystem::path out_dir = "runs";
  std::vector<std::uint64_t> seeds;  // empty: single run with train.seed

  std::vector<std::uint64_t> run_seeds() const { return seeds.empty() ? std::vector{train.seed} : seeds; }
};

// Reads an experiment description. Relative file paths resolve against
// `base_dir` (normally the config file's directory).
inline ExperimentConfig experiment_from_table(ConfigTable& t, const std::filesystem::path& base_dir = {}) {
  ExperimentConfig c;
  auto resolve = [&base_dir](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() ? base_dir / path : path;
  };
  auto size_field = [&t](const std::string& key, std::size_t& dst) {
    if (auto v = t.get_uint(key)) dst = static_cast<std::size_t>(*v);
  };
  auto double_field = [&t](const std::string& key, double& dst) {
    if (auto v = t.get_double(key)) dst = *v;
  };

  const std::string kind = t.get_string("task.kind").value_or("generation");
  if (kind == "generation") c.task.source = TaskSource::generation;
  else if (kind == "common-suffix") c.task.source = TaskSource::common_suffix;
  else if (kind == "feature-csv") c.task.source = TaskSource::feature_csv;
  else t.fail_key("task.kind", "must be generation, common-suffix or feature-csv");

  if (auto f = t.get_string("task.signal_file")) c.task.signal_file = resolve(*f);
  size_field("task.length", c.task.length);
  if (auto v = t.get_uint("task.synth_seed")) c.task.synth.seed = *v;
  size_field("task.synth_components", c.task.synth.components);
  double_field("task.synth_noise", c.task.synth.noise_std);
  size_field("task.classes", c.task.suffix.classes);
  size_field("task.per_class", c.task.suffix.per_class);
  size_field("task.prefix_len", c.task.suffix.prefix_len);
  size_field("task.suffix_len", c.task.suffix.suffix_len);
  size_field("task.features", c.task.suffix.features);
  double_field("task.jitter", c.task.suffix.jitter_std);
  if (auto v = t.get_uint("task.data_seed")) c.task.suffix.seed = *v;
  if (auto f = t.get_string("task.label_file")) c.task.label_file = resolve(*f);

  size_field("model.n_h", c.arch.n_h);
  size_field("model.n_m", c.arch.n_m);
  size_field("model.modules", c.arch.modules);
  if (auto b = t.get_bool("model.bias")) c.arch.bias = *b;

  const std::string mode = t.get_string("train.mode").value_or("fixed");
  if (mode == "fixed") c.mode = TrainMode::fixed;
  else if (mode == "incremental") c.mode = TrainMode::incremental;
  else t.fail_key("train.mode", "must be incremental or fixed");
  double_field("train.learning_rate", c.train.learning_rate);
  size_field("train.batch_size", c.train.batch_size);
  double_field("train.l2_decay", c.train.l2_decay);
  size_field("train.max_epochs", c.train.max_epochs);
  size_field("train.patience", c.train.patience);
  size_field("train.module_add_period", c.train.module_add_period);
  if (auto v = t.get_uint("train.seed")) c.train.seed = *v;
  double_field("train.noise_std", c.train.noise_std);
  size_field("train.laes_state_size", c.train.laes_state_size);
  size_field("train.laes_working_rank", c.train.laes_working_rank);
  if (auto b = t.get_bool("train.laes_use_slices")) c.train.laes_use_slices = *b;
  double_field("train.readout_ridge", c.train.readout_ridge);
  double_field("train.clip_norm", c.train.clip_norm);
  if (auto s = t.get_uint_list("train.seeds")) c.seeds = *s;

  if (auto o = t.get_string("run.out_dir")) c.out_dir = resolve(*o);

  t.reject_unused();

  if (c.arch.n_h < 1) t.fail_key("model.n_h", "must be >= 1");
  if (c.arch.n_m < 1) t.fail_key("model.n_m", "must be >= 1");
  if (c.arch.modules < 1) t.fail_key("model.modules", "must be >= 1");
  if (c.task.length < 1) t.fail_key("task.length", "must be >= 1");
  try {
    c.train.validate();
  } catch (const PreconditionError& e) {
    t.fail(0, std::string("[train] ") + e.what());
  }
  if (c.task.signal_file && !std::filesystem::exists(*c.task.signal_file))
    t.fail_key("task.signal_file", "file not found: " + c.task.signal_file->string());
  if (c.task.source == TaskSource::feature_csv) {
    if (c.task.label_file.empty()) t.fail(0, "task.label_file is required for feature-csv tasks");
    if (!std::filesystem::exists(c.task.label_file))
      t.fail_key("task.label_file", "file not found: " + c.task.label_file.string());
  }
  return c;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) {
  ConfigTable t = ConfigTable::load(path);
  return experiment_from_table(t, path.parent_path());
}

inline ExperimentConfig parse_experiment(std::string_view text, const std::filesystem::path& base_dir = {}) {
  ConfigTable t = ConfigTable::parse(text);
  return experiment_from_table(t, base_dir);
}

inline SequenceDataset build_dataset(const TaskConfig& task) {
  switch (task.source) {
    case TaskSource::generation:
      return make_generation_task(task.signal_file, task.length, task.synth);
    case TaskSource::common_suffix:
      return make_common_suffix_task(task.suffix);
    case TaskSource::feature_csv: {
      const LabelFile lf = load_label_file(task.label_file);
      return load_feature_csv(lf.paths, lf.labels, lf.splits);
    }
  }
  throw ConfigError("unknown task source");
}

}  // namespace mslmn
