#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mslmn/adam.hpp"
#include "mslmn/dataset.hpp"
#include "mslmn/errors.hpp"
#include "mslmn/matrix.hpp"
#include "mslmn/mslmn.hpp"
#include "mslmn/text.hpp"
#include "mslmn/trainer.hpp"

namespace mslmn {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  MsLmnParams params;
  TaskKind task_kind = TaskKind::regression;
  std::size_t epoch = 0;
  std::string rng_state;            // textual std::mt19937_64 state, may be empty
  std::optional<AdamState> optimizer;
};

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

inline Matrix matrix_from_json(const nlohmann::json& j, const std::string& where) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != rows * cols) {
    throw FormatError(where + ": " + std::to_string(data.size()) + " values for a " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " block");
  }
  return Matrix(rows, cols, std::move(data));
}

inline nlohmann::json blocks_to_json(const std::vector<Matrix>& blocks) {
  nlohmann::json out = nlohmann::json::array();
  for (const Matrix& m : blocks) out.push_back(matrix_to_json(m));
  return out;
}

inline std::vector<Matrix> blocks_from_json(const nlohmann::json& j, const std::string& where) {
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(matrix_from_json(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace detail

inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  const MsLmnParams& p = ck.params;
  nlohmann::json j;
  j["format"] = "mslmn-checkpoint";
  j["version"] = kCheckpointVersion;
  j["task_kind"] = to_string(ck.task_kind);
  j["architecture"] = {{"n_x", p.n_x}, {"n_h", p.n_h},   {"n_m", p.n_m},
                       {"n_y", p.n_y}, {"modules", p.g()}, {"bias", p.has_bias()}};
  j["param_count"] = count_params(p);
  j["epoch"] = ck.epoch;
  j["rng_state"] = ck.rng_state;
  nlohmann::json w;
  w["Wxh"] = detail::matrix_to_json(p.Wxh);
  if (p.has_bias()) w["bh"] = detail::matrix_to_json(p.bh);
  w["Wmh"] = detail::blocks_to_json(p.Wmh);
  w["Whm"] = detail::blocks_to_json(p.Whm);
  w["Wmm"] = detail::blocks_to_json(p.Wmm);
  w["Wmy"] = detail::blocks_to_json(p.Wmy);
  j["weights"] = std::move(w);
  if (ck.optimizer) {
    const AdamState& a = *ck.optimizer;
    j["optimizer"] = {{"step", a.step},
                      {"beta1", a.beta1},
                      {"beta2", a.beta2},
                      {"eps", a.eps},
                      {"m", detail::blocks_to_json(a.m)},
                      {"v", detail::blocks_to_json(a.v)}};
  }
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "mslmn-checkpoint") throw FormatError("not a checkpoint file");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    ck.task_kind = task_kind_from_string(j.at("task_kind").get<std::string>());
    const auto& a = j.at("architecture");
    MsLmnParams& p = ck.params;
    p.n_x = a.at("n_x").get<std::size_t>();
    p.n_h = a.at("n_h").get<std::size_t>();
    p.n_m = a.at("n_m").get<std::size_t>();
    p.n_y = a.at("n_y").get<std::size_t>();
    const auto& w = j.at("weights");
    p.Wxh = detail::matrix_from_json(w.at("Wxh"), "Wxh");
    if (a.at("bias").get<bool>()) p.bh = detail::matrix_from_json(w.at("bh"), "bh");
    p.Wmh = detail::blocks_from_json(w.at("Wmh"), "Wmh");
    p.Whm = detail::blocks_from_json(w.at("Whm"), "Whm");
    p.Wmm = detail::blocks_from_json(w.at("Wmm"), "Wmm");
    p.Wmy = detail::blocks_from_json(w.at("Wmy"), "Wmy");
    if (p.g() != a.at("modules").get<std::size_t>()) throw FormatError("module count does not match the weights");
    p.validate();
    ck.epoch = j.value("epoch", std::size_t{0});
    ck.rng_state = j.value("rng_state", std::string());
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      AdamState s;
      s.step = o.at("step").get<std::size_t>();
      s.beta1 = o.at("beta1").get<double>();
      s.beta2 = o.at("beta2").get<double>();
      s.eps = o.at("eps").get<double>();
      s.m = detail::blocks_from_json(o.at("m"), "optimizer.m");
      s.v = detail::blocks_from_json(o.at("v"), "optimizer.v");
      ck.optimizer = std::move(s);
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  }
}

// Writes to a sibling temporary file first so a crash never leaves a
// truncated checkpoint behind.
inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw InputError("cannot write '" + tmp.string() + "'");
    out << checkpoint_to_json(ck).dump() << '\n';
    if (!out) throw InputError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read checkpoint '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

// ---------------------------------------------------------------------------
// Metrics

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline constexpr const char* kMetricsHeader = "epoch,module_count,train_loss,val_loss,metric,wall_time_ms";

inline std::string metrics_row(const MetricsRecord& r) {
  return std::to_string(r.epoch) + "," + std::to_string(r.module_count) + "," + format_real(r.train_loss) + "," +
         format_real(r.val_loss) + "," + format_real(r.metric) + "," + format_real(r.wall_time_ms);
}

// Append-only metrics.csv: the header goes out on open and every row is
// flushed as soon as it is written.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw InputError("cannot write '" + path.string() + "'");
    out_ << kMetricsHeader << '\n' << std::flush;
  }

  void append(const MetricsRecord& r) { out_ << metrics_row(r) << '\n' << std::flush; }

 private:
  std::ofstream out_;
};

inline std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw FormatError(path.string() + ": unexpected header");
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 6) throw FormatError(path.string() + ": expected 6 columns");
    auto num = [&](std::size_t i) {
      const auto v = detail::parse_double(f[i]);
      if (!v) throw FormatError(path.string() + ": bad number '" + std::string(f[i]) + "'");
      return *v;
    };
    out.push_back({static_cast<std::size_t>(num(0)), static_cast<std::size_t>(num(1)), num(2), num(3), num(4), num(5)});
  }
  return out;
}

}  // namespace mslmn
