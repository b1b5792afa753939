// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors
//
// dlhb command-line driver.
//
//   dlhb gen              --config C [--seed S] --out data.bin
//   dlhb train            --config C [--seed S] --data data.bin --out model.bin
//   dlhb sweep-snr        --config C [--seed S] --model model.bin [--out results.csv]
//   dlhb sweep-corruption --config C [--seed S] --model model.bin [--out results.csv]
//   dlhb time             --config C [--seed S] --model model.bin [--out timing.csv]
//
// Failures print one line "dlhb: error: <kind>: <message>" to stderr.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dlhb/dataset.hpp"
#include "dlhb/experiment_config.hpp"
#include "dlhb/harness.hpp"
#include "dlhb/network.hpp"

namespace {

constexpr const char* kVersion = "1.0.0";

enum Exit : int { kOk = 0, kInternal = 1, kUsage = 2, kConfig = 3, kIo = 4, kNumeric = 5 };

struct Failure {
  Exit code;
  const char* kind;
  std::string message;
};

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

int report(const Failure& f) {
  std::cerr << "dlhb: error: " << f.kind << ": " << one_line(f.message) << "\n";
  return f.code;
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string model;
};

dlhb::ExperimentConfig load(const Options& o) {
  dlhb::ExperimentConfig cfg = dlhb::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  return cfg;
}

std::string output_path(const Options& o, const dlhb::ExperimentConfig& cfg) { return o.out.empty() ? cfg.output : o.out; }

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-")
    std::cout << text;
  else
    dlhb::write_text_atomic(path, text);
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw CLI::RequiredError(flag);
}

int cmd_gen(const Options& o) {
  const auto cfg = load(o);
  require(output_path(o, cfg), "--out");
  dlhb::GenerateStats stats;
  const dlhb::Dataset ds = dlhb::generate(cfg.dataset_config(), &stats);
  dlhb::save(ds, output_path(o, cfg));
  std::cout << "samples=" << ds.samples.size() << " skipped=" << stats.skipped << " out=" << output_path(o, cfg)
            << "\n";
  return kOk;
}

int cmd_train(const Options& o) {
  const auto cfg = load(o);
  require(o.data, "--data");
  require(output_path(o, cfg), "--out");
  const dlhb::Dataset ds = dlhb::load(o.data);
  if (!(ds.dims == cfg.dims()))
    throw dlhb::ConfigError("dataset " + o.data + " does not match the scenario dimensions of " + o.config);
  const auto result = dlhb::train(ds, cfg.train_config(), cfg.cnn_config());
  const auto& r = result.report;
  for (std::size_t e = 0; e < r.train_loss.size(); ++e)
    std::cerr << "epoch " << e + 1 << " train_loss=" << r.train_loss[e] << " val_loss=" << r.val_loss[e] << "\n";
  dlhb::save_model(result.model, output_path(o, cfg));
  std::cout << "epochs=" << r.train_loss.size() << " best_epoch=" << r.best_epoch + 1
            << " best_val_loss=" << r.val_loss[r.best_epoch] << " checksum=" << std::hex << r.checksum << std::dec
            << " out=" << output_path(o, cfg) << "\n";
  return kOk;
}

template <typename Run>
int cmd_with_model(const Options& o, Run run) {
  const auto cfg = load(o);
  require(o.model, "--model");
  const dlhb::CnnModel model = dlhb::load_model(o.model);
  emit(output_path(o, cfg), run(cfg, model));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep-learning hybrid beamforming experiments"};
  app.name("dlhb");
  app.set_version_flag("--version", std::string("dlhb ") + kVersion + " (dataset format " +
                                        std::to_string(dlhb::kDatasetFormatVersion) + ", model format " +
                                        std::to_string(dlhb::kModelFormatVersion) + ")");
  app.require_subcommand(1);

  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config (JSON)")->required();
    sub->add_option("--seed", o.seed, "Override the config seed");
    sub->add_option("--out", o.out, "Output path");
  };
  auto* gen = app.add_subcommand("gen", "Generate a training dataset");
  common(gen);
  auto* trn = app.add_subcommand("train", "Train the network on a dataset");
  common(trn);
  trn->add_option("--data", o.data, "Dataset file")->required();
  auto* snr = app.add_subcommand("sweep-snr", "Spectral efficiency versus SNR");
  common(snr);
  auto* cor = app.add_subcommand("sweep-corruption", "Spectral efficiency versus channel-estimate SNR");
  common(cor);
  auto* tim = app.add_subcommand("time", "Median prediction and solve times");
  common(tim);
  for (auto* sub : {snr, cor, tim}) sub->add_option("--model", o.model, "Model file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report({kUsage, "usage", e.what()});
  }

  try {
    if (gen->parsed()) return cmd_gen(o);
    if (trn->parsed()) return cmd_train(o);
    if (snr->parsed())
      return cmd_with_model(o, [](const auto& cfg, const auto& model) {
        return dlhb::format_results_csv(dlhb::run_snr_sweep(cfg, model).rows);
      });
    if (cor->parsed())
      return cmd_with_model(o, [](const auto& cfg, const auto& model) {
        return dlhb::format_results_csv(dlhb::run_corruption_sweep(cfg, model).rows);
      });
    if (tim->parsed())
      return cmd_with_model(o, [](const auto& cfg, const auto& model) {
        return dlhb::format_timing_csv(dlhb::time_methods(cfg, model));
      });
    return report({kUsage, "usage", "no subcommand"});
  } catch (const CLI::ParseError& e) {
    return report({kUsage, "usage", e.what()});
  } catch (const dlhb::ConfigError& e) {
    return report({kConfig, "config", e.what()});
  } catch (const std::invalid_argument& e) {
    return report({kConfig, "config", e.what()});
  } catch (const dlhb::FormatError& e) {
    return report({kIo, "format", e.what()});
  } catch (const std::filesystem::filesystem_error& e) {
    return report({kIo, "io", e.what()});
  } catch (const dlhb::NumericError& e) {
    return report({kNumeric, "numeric", e.what()});
  } catch (const dlhb::TrainingError& e) {
    return report({kNumeric, "training", e.what()});
  } catch (const dlhb::ExperimentError& e) {
    return report({kNumeric, "experiment", e.what()});
  } catch (const std::exception& e) {
    return report({kInternal, "internal", e.what()});
  }
}
