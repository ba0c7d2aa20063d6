#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mslmn/checkpoint.hpp"
#include "mslmn/config.hpp"
#include "mslmn/experiment.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Multiscale linear memory networks: training, evaluation and LAES fitting"};
  app.require_subcommand(1);

  std::string config_path;
  std::string train_out;
  std::string eval_out;
  std::string gen_out = ".";
  std::string laes_out = ".";
  std::optional<std::uint64_t> seed;
  bool quiet = false;

  auto* train = app.add_subcommand("train", "train one model per configured seed");
  train->add_option("--config", config_path, "experiment config (TOML)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "output directory (overrides run.out_dir)");
  train->add_option("--seed", seed, "single seed (overrides train.seed and train.seeds)");
  train->add_flag("--quiet", quiet, "suppress per-epoch progress");

  std::string checkpoint;
  std::string split = "test";
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a configured dataset");
  eval->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--config", config_path, "experiment config describing the dataset")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--out", eval_out, "directory for eval.json (default: the checkpoint's directory)");
  eval->add_flag("--quiet", quiet, "write eval.json only");

  std::size_t steps = 300;
  auto* gen = app.add_subcommand("generate", "run a regression checkpoint and write generated.csv");
  gen->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("-n,--steps", steps, "number of steps")->check(CLI::PositiveNumber);
  gen->add_option("--config", config_path, "optional config; adds the target column")->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "output directory")->capture_default_str();
  gen->add_flag("--quiet", quiet, "no console output");

  std::vector<std::string> files;
  std::size_t p = 0;
  bool slices = false;
  auto* laes = app.add_subcommand("laes-fit", "fit a linear autoencoder for sequences");
  laes->add_option("files", files, "sequence CSV files (header row, one step per row)")->required();
  laes->add_option("-p,--state-size", p, "memory size p")->required()->check(CLI::PositiveNumber);
  laes->add_option("--out", laes_out, "output directory")->capture_default_str();
  laes->add_flag("--slices", slices, "use the memory-bounded slice SVD");
  laes->add_flag("--quiet", quiet, "no console output");

  auto* inspect = app.add_subcommand("inspect", "print a checkpoint's architecture and parameter count");
  inspect->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      mslmn::RunOptions opts;
      if (!train_out.empty()) opts.out_dir = train_out;
      opts.seed = seed;
      opts.quiet = quiet;
      opts.threads = mslmn::threads_from_env();
      return mslmn::cmd_train(mslmn::load_experiment(config_path), opts, &std::cout);
    }
    if (*eval) {
      std::ostream null(nullptr);
      const auto dir = eval_out.empty() ? std::nullopt : std::optional<fs::path>(eval_out);
      return mslmn::cmd_eval(checkpoint, mslmn::load_experiment(config_path), mslmn::eval_split_from_string(split), dir,
                             quiet ? null : std::cout);
    }
    if (*gen) {
      const mslmn::Checkpoint ck = mslmn::load_checkpoint(checkpoint);
      std::optional<mslmn::SequenceDataset> data;
      if (!config_path.empty()) data = mslmn::build_dataset(mslmn::load_experiment(config_path).task);
      fs::create_directories(gen_out);
      const fs::path path = fs::path(gen_out) / "generated.csv";
      mslmn::write_generated(ck, steps, data ? &*data : nullptr, path);
      if (!quiet) std::cout << "wrote " << path.string() << '\n';
      return 0;
    }
    if (*laes) {
      std::vector<fs::path> paths(files.begin(), files.end());
      const double worst = mslmn::cmd_laes_fit(paths, p, laes_out, slices);
      if (!quiet) std::cout << "max_abs_error " << mslmn::format_real(worst) << '\n';
      return 0;
    }
    if (*inspect) {
      mslmn::print_inspect(mslmn::load_checkpoint(checkpoint), std::cout);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
