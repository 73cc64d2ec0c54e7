// Command-line front end: gen-data, train, eval, ablate.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "ipacp/ablate.hpp"
#include "ipacp/alloc_tuning.hpp"
#include "ipacp/errors.hpp"
#include "ipacp/evaluate.hpp"
#include "ipacp/phantom.hpp"
#include "ipacp/trainer.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kConfig = 2, kData = 3, kNumeric = 4 };

void print_summary(const ipacp::MetricsReport& report) {
  for (const auto& m : ipacp::metric_names()) {
    const auto s = report.summary(m);
    std::printf("%-8s %s  (n=%d)\n", m.c_str(), ipacp::mean_std_string(s).c_str(), s.count);
  }
}

}  // namespace

int main(int argc, char** argv) {
  ipacp::tune_allocator();
  CLI::App app{"Semi-supervised tumour segmentation on synthetic phantoms"};
  app.require_subcommand(1);

  std::string profile = "small", out_dir, config_path, ckpt_path, data_dir, split = "test",
              model = "teacher", report_stem, axis;
  std::uint64_t seed = 0;
  int n_train = 40, n_val = 10, n_test = 10, window = 0, stride = 0;
  double ratio = 0.1;

  auto* gen = app.add_subcommand("gen-data", "Generate a phantom dataset");
  gen->add_option("--profile", profile, "large|small")->check(CLI::IsMember({"large", "small"}));
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_option("--seed", seed, "Generator seed");
  gen->add_option("--train", n_train, "Training cases")->check(CLI::PositiveNumber);
  gen->add_option("--val", n_val, "Validation cases")->check(CLI::NonNegativeNumber);
  gen->add_option("--test", n_test, "Test cases")->check(CLI::NonNegativeNumber);
  gen->add_option("--labeled-ratio", ratio, "Labeled fraction of the training cases");

  auto* tr = app.add_subcommand("train", "Train from a key=value config file");
  tr->add_option("--config", config_path, "Config file")->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--ckpt", ckpt_path, "Checkpoint .vol file")->required();
  ev->add_option("--data", data_dir, "Dataset root")->required();
  ev->add_option("--split", split, "Split name")->check(CLI::IsMember({"test", "val", "validation", "train", "labeled", "unlabeled"}));
  ev->add_option("--model", model, "teacher|student")->check(CLI::IsMember({"teacher", "student"}));
  ev->add_option("--report", report_stem, "Report path without extension");
  ev->add_option("--window", window, "Sliding-window size (0 = whole volume)");
  ev->add_option("--stride", stride, "Sliding-window stride");

  auto* ab = app.add_subcommand("ablate", "Run an ablation sweep");
  ab->add_option("--config", config_path, "Config file")->required();
  ab->add_option("--axis", axis, "Sweep axis")
      ->required()
      ->check(CLI::IsMember({"tau", "holes", "pseudo_mode", "loss_mode", "component_flags"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) {
      ipacp::generate_dataset(out_dir, profile, seed, n_train, n_val, n_test, ratio);
      std::printf("wrote %d %s phantoms to %s\n", n_train + n_val + n_test, profile.c_str(),
                  out_dir.c_str());
    } else if (*tr) {
      const auto config = ipacp::load_config(config_path);
      const auto result = ipacp::train(config);
      std::printf("trained to iteration %ld; checkpoint in %s\n", result.checkpoint.iteration,
                  (fs::path(config.out_dir) / "checkpoint.vol").c_str());
    } else if (*ev) {
      const auto ckpt = ipacp::load_checkpoint(ckpt_path);
      const ipacp::Dataset ds(data_dir);
      const auto report = ipacp::evaluate_checkpoint(ckpt, ds, split, model, {window, stride});
      if (report_stem.empty()) {
        report_stem = (fs::path(ckpt_path).parent_path() / ("report_" + split)).string();
      }
      ipacp::write_report(report, report_stem);
      print_summary(report);
    } else if (*ab) {
      const auto config = ipacp::load_config(config_path);
      const auto table = ipacp::ablate(config, axis);
      ipacp::write_ablation(table, fs::path(config.out_dir) / ("ablation_" + axis));
      std::cout << ipacp::to_csv(table);
    }
  } catch (const ipacp::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const ipacp::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const ipacp::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid argument: %s\n", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInternal;
  }
  return kOk;
}
