#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scenechar/data.hpp"
#include "scenechar/network.hpp"

namespace scenechar {

// One grid cell of the experiment table plus the knobs the table leaves open.
struct ExperimentConfig {
  int filter_size = 3;  // 3 or 5
  int stride = 1;       // 1 or 2
  double learning_rate = 0.005;
  char architecture = 'B';  // 'A': conv-conv-fc, 'B': conv-pool x2 + extra fc
  std::size_t padding = 0;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t k1 = 16;
  std::size_t k2 = 32;
  std::size_t fc_hidden = 128;
};

void validate_config(const ExperimentConfig& config);

// Architecture A: conv-relu-conv-relu-flatten-fc(classes)-softmax.
// Architecture B: conv-relu-pool-conv-relu-pool-flatten-fc(hidden)-relu-
//                 fc(classes)-softmax.
NetworkSpec make_network_spec(const ExperimentConfig& config,
                              std::size_t num_classes,
                              std::size_t in_height = kInputSize,
                              std::size_t in_width = kInputSize);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_error_pct = 0.0;
  double test_error_pct = 0.0;
};

struct MetricsReport {
  ExperimentConfig config;
  std::vector<EpochStats> epochs;
  double final_test_error_pct = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  bool diverged = false;
  std::size_t best_epoch = 0;  // 1-based; 0 when no epoch completed
  double wall_clock_seconds = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> class_names;
  std::string error;  // non-empty when a sweep run failed outright
};

struct TrainResult {
  Checkpoint checkpoint;  // parameters of the best-test-error epoch
  MetricsReport report;
};

// Shuffled-minibatch SGD for config.epochs; evaluates the test split after
// every epoch and keeps the best-test-error parameters; a non-finite loss
// sets diverged and halts the run gracefully.
TrainResult train(const ExperimentConfig& config, const LoadedDataset& dataset);

MetricsReport evaluate(const Checkpoint& checkpoint,
                       const LoadedDataset& dataset, Split split);

// Canonical JSON echo of a config and its FNV-1a hash (used for file names).
std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const std::string& json_text);
std::string config_hash(const ExperimentConfig& config);

void write_report_json(const MetricsReport& report,
                       const std::filesystem::path& path);
MetricsReport read_report_json(const std::filesystem::path& path);
// Canonical text form; wall-clock is the one non-deterministic field, so
// determinism checks exclude it.
std::string report_canonical_json(const MetricsReport& report,
                                  bool include_wall_clock);

struct SweepCell {
  int filter_size = 3;
  int stride = 1;
  double learning_rate = 0.005;
  char architecture = 'B';
};

// The 8-cell grid in table order: {3,5} x stride {1,2} x lr {0.005, 0.5}.
std::vector<SweepCell> default_grid();

struct SweepOptions {
  ExperimentConfig base;  // epochs/batch/k/widths; cell overrides the rest
  std::vector<std::uint64_t> seeds{0};
  std::size_t jobs = 1;
  std::filesystem::path out_dir;
};

struct SweepRow {
  SweepCell cell;
  std::uint64_t seed = 0;
  double error_pct = 0.0;  // NaN when the run failed
  bool diverged = false;
  std::string error;
};

// Runs every (cell, seed) pair, optionally on a worker pool; per-run report
// JSON and checkpoint land in out_dir, then summary.csv. Individual failures
// become rows, never abort the sweep.
std::vector<SweepRow> sweep(const std::vector<SweepCell>& grid,
                            const LoadedDataset& dataset,
                            const SweepOptions& options);

// Summary table rebuilt purely from the persisted per-run reports, ordered
// by (filter, stride, lr, arch, seed). Header:
//   filter,stride,lr,arch,error_pct,diverged,seed
std::string sweep_summary_csv(const std::filesystem::path& runs_dir);
std::string sweep_summary_json(const std::filesystem::path& runs_dir);

struct LayerGradCheck {
  std::string name;  // parameter tensor, e.g. "conv1.weights"
  double max_rel_err = 0.0;
};

// Tractable 1x12x12 presets for gradient checking (f=3, s=1, tiny widths).
NetworkSpec reduced_spec(char architecture, std::size_t num_classes = 5);

// Central differences (eps = 1e-5) against the analytic gradients through
// softmax cross-entropy, per parameter tensor. Inputs near ReLU kinks or
// pooling ties are redrawn so the loss is differentiable at the test point.
std::vector<LayerGradCheck> gradient_check(const NetworkSpec& spec,
                                           std::uint64_t seed);

}  // namespace scenechar
