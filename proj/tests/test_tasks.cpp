#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "mslmn/errors.hpp"
#include "mslmn/tasks.hpp"

using namespace mslmn;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("mslmn_tasks_") + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path write(const std::string& name, const std::string& text) const {
    const fs::path p = path_ / name;
    std::ofstream(p) << text;
    return p;
  }

 private:
  fs::path path_;
};

std::string csv_file(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double shift = 0.0) {
  std::string s;
  for (std::size_t c = 0; c < cols; ++c) s += (c ? ",f" : "f") + std::to_string(c);
  s += '\n';
  std::normal_distribution<double> d(shift, 2.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) s += (c ? "," : "") + std::to_string(d(rng));
    s += '\n';
  }
  return s;
}

std::vector<double> feature_means(const SequenceDataset& d, const std::vector<std::size_t>& idx) {
  std::vector<double> mean(d.n_x, 0.0);
  std::size_t n = 0;
  for (std::size_t i : idx) {
    const Matrix& x = d.items[i].input;
    for (std::size_t t = 0; t < x.rows(); ++t)
      for (std::size_t j = 0; j < d.n_x; ++j) mean[j] += x(t, j);
    n += x.rows();
  }
  for (double& m : mean) m /= static_cast<double>(n);
  return mean;
}

std::size_t count_label(const SequenceDataset& d, const std::vector<std::size_t>& idx, std::size_t label) {
  return static_cast<std::size_t>(
      std::count_if(idx.begin(), idx.end(), [&](std::size_t i) { return d.items[i].label == label; }));
}

}  // namespace

TEST(GenerationTask, SynthesizedSignalSpansUnitRange) {
  const auto d = make_generation_task(std::nullopt);
  ASSERT_EQ(d.items.size(), 1u);
  const auto& target = d.items[0].target;
  EXPECT_EQ(target.rows(), 300u);
  EXPECT_EQ(d.items[0].input, Matrix(300, 1));
  const auto [lo, hi] = std::minmax_element(target.data().begin(), target.data().end());
  EXPECT_EQ(*lo, -1.0);
  EXPECT_EQ(*hi, 1.0);
  EXPECT_EQ(d.train, std::vector<std::size_t>{0});
  EXPECT_NO_THROW(d.validate());
}

TEST(GenerationTask, Deterministic) {
  EXPECT_EQ(make_generation_task(std::nullopt, 120).items[0].target,
            make_generation_task(std::nullopt, 120).items[0].target);
  SignalSynthesizer other;
  other.seed = 8;
  EXPECT_NE(make_generation_task(std::nullopt, 120, other).items[0].target,
            make_generation_task(std::nullopt, 120).items[0].target);
}

TEST(GenerationTask, FromFile) {
  TempDir dir;
  std::string text = "# header comment\n";
  for (int i = 0; i < 310; ++i) text += std::to_string(std::sin(0.1 * i) * 7.0 + 3.0) + "\n\n";
  const auto path = dir.write("signal.txt", text);
  const auto d = make_generation_task(path, 300);
  const auto& y = d.items[0].target;
  EXPECT_EQ(y.rows(), 300u);
  EXPECT_EQ(*std::min_element(y.data().begin(), y.data().end()), -1.0);
  EXPECT_EQ(*std::max_element(y.data().begin(), y.data().end()), 1.0);
  EXPECT_EQ(make_generation_task(path, 300).items[0].target, y);
  EXPECT_THROW(make_generation_task(path, 400), InputError);
}

TEST(GenerationTask, Errors) {
  TempDir dir;
  EXPECT_THROW(make_generation_task(dir.write("flat.txt", "2.5\n2.5\n2.5\n"), 3), ScalingError);
  EXPECT_THROW(make_generation_task(dir.path() / "missing.txt", 3), InputError);
  EXPECT_THROW(make_generation_task(dir.write("bad.txt", "1.0\nabc\n"), 2), FormatError);
  EXPECT_THROW(make_generation_task(std::nullopt, 0), PreconditionError);
}

TEST(ScaleToUnitRange, HandValues) {
  const std::vector<double> s{2.0, 4.0, 3.0};
  EXPECT_EQ(scale_to_unit_range(s), (std::vector<double>{-1.0, 1.0, 0.0}));
}

TEST(CommonSuffix, BalancedSplits) {
  const auto d = make_common_suffix_task(CommonSuffixSpec{});
  EXPECT_EQ(d.items.size(), 35u);
  EXPECT_EQ(d.n_x, 13u);
  EXPECT_EQ(d.n_y, 5u);
  EXPECT_EQ(d.l_max, 96u);
  EXPECT_EQ(d.train.size(), 25u);
  EXPECT_EQ(d.test.size(), 10u);
  for (std::size_t c = 0; c < 5; ++c) {
    EXPECT_EQ(count_label(d, d.train, c), 5u);
    EXPECT_EQ(count_label(d, d.test, c), 2u);
  }
  for (double m : feature_means(d, d.train)) EXPECT_NEAR(m, 0.0, 1e-10);
  EXPECT_NO_THROW(d.validate());
}

TEST(CommonSuffix, SameSeedSameData) {
  CommonSuffixSpec spec;
  spec.seed = 3;
  const auto a = make_common_suffix_task(spec);
  const auto b = make_common_suffix_task(spec);
  for (std::size_t i = 0; i < a.items.size(); ++i) EXPECT_EQ(a.items[i].input, b.items[i].input);
  spec.seed = 4;
  EXPECT_NE(make_common_suffix_task(spec).items[0].input, a.items[0].input);
}

TEST(CommonSuffix, SuffixSharedAcrossClassesWithoutJitter) {
  CommonSuffixSpec spec;
  spec.jitter_std = 0.0;
  spec.suffix_len = 10;
  const auto d = make_common_suffix_task(spec);
  const Matrix ref = d.items[0].input.block(16, 0, 10, 13);
  for (const auto& item : d.items) EXPECT_EQ(item.input.block(16, 0, 10, 13), ref);
  EXPECT_NE(d.items[0].input.block(0, 0, 16, 13), d.items[7].input.block(0, 0, 16, 13));
}

TEST(CommonSuffix, NoSuffixIsSolvableFromTheLastStep) {
  CommonSuffixSpec spec;
  spec.suffix_len = 0;
  const auto d = make_common_suffix_task(spec);
  EXPECT_EQ(d.l_max, 16u);
  // Nearest class centroid of the final-step features.
  std::vector<std::vector<double>> centroid(5, std::vector<double>(13, 0.0));
  for (std::size_t i : d.train)
    for (std::size_t j = 0; j < 13; ++j) centroid[d.items[i].label][j] += d.items[i].input(15, j) / 5.0;
  for (std::size_t i : d.test) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t c = 0; c < 5; ++c) {
      double dist = 0.0;
      for (std::size_t j = 0; j < 13; ++j) dist += std::pow(d.items[i].input(15, j) - centroid[c][j], 2);
      if (dist < best_d) {
        best_d = dist;
        best = c;
      }
    }
    EXPECT_EQ(best, d.items[i].label);
  }
}

TEST(CommonSuffix, InvalidSizes) {
  CommonSuffixSpec spec;
  spec.classes = 1;
  EXPECT_THROW(make_common_suffix_task(spec), DimensionError);
  spec = {};
  spec.prefix_len = 0;
  EXPECT_THROW(make_common_suffix_task(spec), DimensionError);
  spec = {};
  spec.features = 0;
  EXPECT_THROW(make_common_suffix_task(spec), DimensionError);
}

TEST(FeatureCsv, ShapesAndStandardization) {
  TempDir dir;
  std::mt19937_64 rng(1);
  const auto a = dir.write("a.csv", csv_file(12, 13, rng, 5.0));
  const auto b = dir.write("b.csv", csv_file(20, 13, rng, -1.0));
  const auto d = load_feature_csv({a, b}, {0, 1});
  EXPECT_EQ(d.n_x, 13u);
  EXPECT_EQ(d.l_max, 20u);
  EXPECT_EQ(d.n_y, 2u);
  EXPECT_EQ(d.items[1].input.rows(), 20u);
  for (double m : feature_means(d, d.train)) EXPECT_NEAR(m, 0.0, 1e-10);
}

TEST(FeatureCsv, StatisticsComeFromTrainingOnly) {
  TempDir dir;
  std::mt19937_64 rng(2);
  std::vector<fs::path> paths;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 14; ++i) {
    paths.push_back(dir.write("f" + std::to_string(i) + ".csv", csv_file(6, 3, rng, static_cast<double>(i))));
    labels.push_back(i / 7);
  }
  const auto d = load_feature_csv(paths, labels);
  EXPECT_EQ(d.train.size(), 10u);
  EXPECT_EQ(d.test.size(), 4u);
  for (double m : feature_means(d, d.train)) EXPECT_NEAR(m, 0.0, 1e-10);
  for (double m : feature_means(d, d.test)) EXPECT_GT(std::abs(m), 1e-3);
  // Repeated loads are identical and leave the files alone.
  const auto before = fs::file_size(paths[0]);
  const auto again = load_feature_csv(paths, labels);
  for (std::size_t i = 0; i < 14; ++i) EXPECT_EQ(again.items[i].input, d.items[i].input);
  EXPECT_EQ(fs::file_size(paths[0]), before);
}

TEST(FeatureCsv, Errors) {
  TempDir dir;
  EXPECT_THROW(load_feature_csv({}, {}), EmptyInputError);
  const auto ragged = dir.write("ragged.csv", "a,b\n1,2\n3\n");
  EXPECT_THROW(load_feature_csv({ragged}, {0}), FormatError);
  const auto ok = dir.write("ok.csv", "a,b\n1,2\n3,4\n");
  const auto wide = dir.write("wide.csv", "a,b,c\n1,2,3\n");
  EXPECT_THROW(load_feature_csv({ok, wide}, {0, 1}), FormatError);
  EXPECT_THROW(load_feature_csv({ok, ok}, {0}), InputError);
  EXPECT_THROW(load_feature_csv({dir.path() / "nope.csv"}, {0}), InputError);
}

TEST(LabelFile, ResolvesRelativePathsAndSplits) {
  TempDir dir;
  std::mt19937_64 rng(3);
  dir.write("x.csv", csv_file(4, 2, rng));
  dir.write("y.csv", csv_file(5, 2, rng));
  const auto lf = load_label_file(dir.write("labels.txt", "# items\nx.csv,0,train\ny.csv,1,test\n"));
  ASSERT_EQ(lf.paths.size(), 2u);
  EXPECT_EQ(lf.paths[0], dir.path() / "x.csv");
  EXPECT_EQ(lf.labels, (std::vector<std::size_t>{0, 1}));
  const auto d = load_feature_csv(lf.paths, lf.labels, lf.splits);
  EXPECT_EQ(d.train, std::vector<std::size_t>{0});
  EXPECT_EQ(d.test, std::vector<std::size_t>{1});
  EXPECT_THROW(load_label_file(dir.write("bad.txt", "x.csv\n")), FormatError);
  EXPECT_THROW(load_label_file(dir.write("neg.txt", "x.csv,-1\n")), FormatError);
}
