#include "scenechar/experiment.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "scenechar/optim.hpp"
#include "scenechar/rng.hpp"

namespace scenechar {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// Mean-subtracted copies of the sample images, ready to feed the network.
std::vector<Tensor> normalized_inputs(const std::vector<Sample>& samples,
                                      double pixel_mean) {
  std::vector<Tensor> inputs;
  inputs.reserve(samples.size());
  for (const auto& sample : samples) {
    Tensor t = sample.image;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] -= pixel_mean;
    inputs.push_back(std::move(t));
  }
  return inputs;
}

std::size_t argmax_first(const Tensor& values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

double error_rate_pct(const Network& net, const std::vector<Tensor>& inputs,
                      const std::vector<Sample>& samples) {
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (argmax_first(net.forward(inputs[i])) != samples[i].label) ++wrong;
  }
  return 100.0 * static_cast<double>(wrong) /
         static_cast<double>(inputs.size());
}

json cell_to_json(const SweepCell& cell, std::uint64_t seed) {
  json j;
  j["filter"] = cell.filter_size;
  j["stride"] = cell.stride;
  j["lr"] = cell.learning_rate;
  j["arch"] = std::string(1, cell.architecture);
  j["seed"] = seed;
  return j;
}

std::string format_lr(double lr) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", lr);
  return buf;
}

std::string format_error_pct(double error_pct) {
  if (std::isnan(error_pct)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", error_pct);
  return buf;
}

}  // namespace

void validate_config(const ExperimentConfig& config) {
  if (config.filter_size != 3 && config.filter_size != 5)
    throw std::invalid_argument("filter_size must be 3 or 5, got " +
                                std::to_string(config.filter_size));
  if (config.stride != 1 && config.stride != 2)
    throw std::invalid_argument("stride must be 1 or 2, got " +
                                std::to_string(config.stride));
  if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate))
    throw std::invalid_argument("learning_rate must be finite and >= 0");
  if (config.architecture != 'A' && config.architecture != 'B')
    throw std::invalid_argument("architecture must be 'A' or 'B'");
  if (config.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (config.batch_size < 1)
    throw std::invalid_argument("batch_size must be >= 1");
  if (config.k1 < 1 || config.k2 < 1 || config.fc_hidden < 1)
    throw std::invalid_argument("layer widths must be >= 1");
}

NetworkSpec make_network_spec(const ExperimentConfig& config,
                              std::size_t num_classes, std::size_t in_height,
                              std::size_t in_width) {
  validate_config(config);
  if (num_classes < 1) throw std::invalid_argument("need at least one class");
  const std::size_t f = static_cast<std::size_t>(config.filter_size);
  const std::size_t s = static_cast<std::size_t>(config.stride);

  NetworkSpec spec;
  spec.in_channels = 1;
  spec.in_height = in_height;
  spec.in_width = in_width;
  if (config.architecture == 'A') {
    spec.layers = {ConvSpec{config.k1, f, s, config.padding}, ReluSpec{},
                   ConvSpec{config.k2, f, s, config.padding}, ReluSpec{},
                   FlattenSpec{}, FcSpec{num_classes}, SoftmaxSpec{}};
  } else {
    spec.layers = {ConvSpec{config.k1, f, s, config.padding},
                   ReluSpec{},
                   MaxPoolSpec{2, 2},
                   ConvSpec{config.k2, f, s, config.padding},
                   ReluSpec{},
                   MaxPoolSpec{2, 2},
                   FlattenSpec{},
                   FcSpec{config.fc_hidden},
                   ReluSpec{},
                   FcSpec{num_classes},
                   SoftmaxSpec{}};
  }
  chain_shapes(spec);  // reject impossible geometry before any training
  return spec;
}

TrainResult train(const ExperimentConfig& config,
                  const LoadedDataset& dataset) {
  const double t_start = now_seconds();
  validate_config(config);
  if (dataset.train.empty() || dataset.test.empty())
    throw std::invalid_argument("train requires non-empty train and test splits");

  const std::size_t num_classes = dataset.class_names.size();
  const NetworkSpec spec = make_network_spec(config, num_classes);
  Network net(spec, config.seed);

  const std::vector<Tensor> train_inputs =
      normalized_inputs(dataset.train, dataset.pixel_mean);
  const std::vector<Tensor> test_inputs =
      normalized_inputs(dataset.test, dataset.pixel_mean);

  MetricsReport report;
  report.config = config;
  report.seed = config.seed;
  report.class_names = dataset.class_names;

  Network best_net = net;
  double best_error = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_inputs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  ForwardCache cache;
  Network::Gradients grads = net.zero_gradients();
  bool stop = false;
  for (std::size_t epoch = 1; epoch <= config.epochs && !stop; ++epoch) {
    Rng shuffle_rng = Rng::derive(config.seed, 0x5u64ffle + epoch);
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    std::size_t wrong = 0;
    for (std::size_t start = 0; start < order.size() && !stop;
         start += config.batch_size) {
      const std::size_t batch_end =
          std::min(order.size(), start + config.batch_size);
      grads = net.zero_gradients();
      for (std::size_t i = start; i < batch_end; ++i) {
        const Tensor& input = train_inputs[order[i]];
        const std::size_t label = dataset.train[order[i]].label;
        const Tensor logits = net.forward(input, &cache);
        const Tensor probs = softmax(logits);
        const CrossEntropyResult ce = cross_entropy(probs, label);
        if (!std::isfinite(ce.loss)) {
          report.diverged = true;
          stop = true;
          break;
        }
        loss_sum += ce.loss;
        ++seen;
        if (argmax_first(logits) != label) ++wrong;
        net.backward(cache, ce.grad_logits, grads);
      }
      if (stop) break;
      // averaged batch gradient keeps lr meaningful at any batch size
      grads.scale(1.0 / static_cast<double>(batch_end - start));
      net.apply_sgd(grads, config.learning_rate);
    }
    if (stop) break;

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(seen);
    stats.train_error_pct =
        100.0 * static_cast<double>(wrong) / static_cast<double>(seen);
    stats.test_error_pct = error_rate_pct(net, test_inputs, dataset.test);
    report.epochs.push_back(stats);

    if (stats.test_error_pct < best_error) {
      best_error = stats.test_error_pct;
      best_net = net;
      report.best_epoch = epoch;
    }
  }

  TrainResult result;
  result.checkpoint.network = std::move(best_net);
  result.checkpoint.input_mean = dataset.pixel_mean;
  result.checkpoint.config_echo = config_to_json(config);

  // final metrics come from the emitted (best-epoch) parameters
  MetricsReport final_eval =
      evaluate(result.checkpoint, dataset, Split::test);
  report.final_test_error_pct = final_eval.final_test_error_pct;
  report.confusion = std::move(final_eval.confusion);
  report.wall_clock_seconds = now_seconds() - t_start;
  result.report = std::move(report);
  return result;
}

MetricsReport evaluate(const Checkpoint& checkpoint,
                       const LoadedDataset& dataset, Split split) {
  const double t_start = now_seconds();
  const std::vector<Sample>& samples =
      split == Split::train ? dataset.train : dataset.test;
  if (samples.empty())
    throw std::invalid_argument("evaluate: empty " + to_string(split) + " split");

  const std::size_t num_classes = dataset.class_names.size();
  const auto shapes = chain_shapes(checkpoint.network.spec());
  if (shapes.back().size() != 1 || shapes.back()[0] != num_classes) {
    throw std::invalid_argument(
        "checkpoint predicts " + std::to_string(shapes.back()[0]) +
        " classes but the manifest has " + std::to_string(num_classes));
  }

  MetricsReport report;
  if (!checkpoint.config_echo.empty())
    report.config = config_from_json(checkpoint.config_echo);
  report.seed = report.config.seed;
  report.class_names = dataset.class_names;
  report.confusion.assign(num_classes,
                          std::vector<std::size_t>(num_classes, 0));

  const std::vector<Tensor> inputs =
      normalized_inputs(samples, checkpoint.input_mean);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    // lowest index wins exact ties, same rule as argmax over softmax
    const std::size_t predicted =
        argmax_first(checkpoint.network.forward(inputs[i]));
    report.confusion[samples[i].label][predicted] += 1;
    if (predicted == samples[i].label) ++correct;
  }
  report.final_test_error_pct =
      100.0 * (1.0 - static_cast<double>(correct) /
                         static_cast<double>(inputs.size()));
  report.wall_clock_seconds = now_seconds() - t_start;
  return report;
}

std::string config_to_json(const ExperimentConfig& config) {
  json j;
  j["filter"] = config.filter_size;
  j["stride"] = config.stride;
  j["lr"] = config.learning_rate;
  j["arch"] = std::string(1, config.architecture);
  j["padding"] = config.padding;
  j["epochs"] = config.epochs;
  j["batch"] = config.batch_size;
  j["seed"] = config.seed;
  j["k1"] = config.k1;
  j["k2"] = config.k2;
  j["fc_hidden"] = config.fc_hidden;
  return j.dump();
}

ExperimentConfig config_from_json(const std::string& json_text) {
  const json j = json::parse(json_text);
  ExperimentConfig config;
  config.filter_size = j.at("filter").get<int>();
  config.stride = j.at("stride").get<int>();
  config.learning_rate = j.at("lr").get<double>();
  config.architecture = j.at("arch").get<std::string>().at(0);
  config.padding = j.at("padding").get<std::size_t>();
  config.epochs = j.at("epochs").get<std::size_t>();
  config.batch_size = j.at("batch").get<std::size_t>();
  config.seed = j.at("seed").get<std::uint64_t>();
  config.k1 = j.at("k1").get<std::size_t>();
  config.k2 = j.at("k2").get<std::size_t>();
  config.fc_hidden = j.at("fc_hidden").get<std::size_t>();
  return config;
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = config_to_json(config);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(hash));
  return buf;
}

namespace {

json report_to_json(const MetricsReport& report, bool include_wall_clock) {
  json j;
  j["config"] = json::parse(config_to_json(report.config));
  j["best_epoch"] = report.best_epoch;
  j["class_names"] = report.class_names;
  j["confusion"] = report.confusion;
  j["diverged"] = report.diverged;
  json epochs = json::array();
  for (const auto& e : report.epochs) {
    json je;
    je["epoch"] = e.epoch;
    je["train_loss"] = e.train_loss;
    je["train_error_pct"] = e.train_error_pct;
    je["test_error_pct"] = e.test_error_pct;
    epochs.push_back(je);
  }
  j["epochs"] = epochs;
  j["error"] = report.error.empty() ? json() : json(report.error);
  j["final_test_error_pct"] =
      std::isnan(report.final_test_error_pct) ? json()
                                              : json(report.final_test_error_pct);
  j["seed"] = report.seed;
  if (include_wall_clock) j["wall_clock_seconds"] = report.wall_clock_seconds;
  return j;
}

MetricsReport report_from_json(const json& j) {
  MetricsReport report;
  report.config = config_from_json(j.at("config").dump());
  report.best_epoch = j.at("best_epoch").get<std::size_t>();
  report.class_names = j.at("class_names").get<std::vector<std::string>>();
  report.confusion =
      j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
  report.diverged = j.at("diverged").get<bool>();
  for (const auto& je : j.at("epochs")) {
    EpochStats e;
    e.epoch = je.at("epoch").get<std::size_t>();
    e.train_loss = je.at("train_loss").get<double>();
    e.train_error_pct = je.at("train_error_pct").get<double>();
    e.test_error_pct = je.at("test_error_pct").get<double>();
    report.epochs.push_back(e);
  }
  if (!j.at("error").is_null()) report.error = j.at("error").get<std::string>();
  report.final_test_error_pct =
      j.at("final_test_error_pct").is_null()
          ? std::numeric_limits<double>::quiet_NaN()
          : j.at("final_test_error_pct").get<double>();
  report.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("wall_clock_seconds"))
    report.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
  return report;
}

}  // namespace

void write_report_json(const MetricsReport& report, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write report: " + path.string());
  out << report_to_json(report, true).dump(2) << '\n';
  if (!out) throw std::runtime_error("report write failed: " + path.string());
}

MetricsReport read_report_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read report: " + path.string());
  json j;
  in >> j;
  return report_from_json(j);
}

std::string report_canonical_json(const MetricsReport& report,
                                  bool include_wall_clock) {
  return report_to_json(report, include_wall_clock).dump();
}

std::vector<SweepCell> default_grid() {
  std::vector<SweepCell> grid;
  for (int filter : {3, 5})
    for (int stride : {1, 2})
      for (double lr : {0.005, 0.5})
        grid.push_back(SweepCell{filter, stride, lr, 'B'});
  return grid;
}

std::vector<SweepRow> sweep(const std::vector<SweepCell>& grid,
                            const LoadedDataset& dataset,
                            const SweepOptions& options) {
  if (grid.empty()) throw std::invalid_argument("sweep grid is empty");
  if (options.seeds.empty())
    throw std::invalid_argument("sweep needs at least one seed");
  fs::create_directories(options.out_dir);

  struct Task {
    SweepCell cell;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const auto& cell : grid)
    for (std::uint64_t seed : options.seeds) tasks.push_back({cell, seed});

  std::vector<SweepRow> rows(tasks.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& task = tasks[i];
      ExperimentConfig config = options.base;
      config.filter_size = task.cell.filter_size;
      config.stride = task.cell.stride;
      config.learning_rate = task.cell.learning_rate;
      config.architecture = task.cell.architecture;
      config.seed = task.seed;

      SweepRow& row = rows[i];
      row.cell = task.cell;
      row.seed = task.seed;
      const std::string hash = config_hash(config);
      try {
        TrainResult result = train(config, dataset);
        save_checkpoint(options.out_dir / (hash + ".ckpt"), result.checkpoint);
        write_report_json(result.report, options.out_dir / (hash + ".json"));
        row.error_pct = result.report.final_test_error_pct;
        row.diverged = result.report.diverged;
      } catch (const std::exception& e) {
        row.error = e.what();
        row.error_pct = std::numeric_limits<double>::quiet_NaN();
        MetricsReport failed;
        failed.config = config;
        failed.seed = task.seed;
        failed.error = e.what();
        failed.final_test_error_pct = std::numeric_limits<double>::quiet_NaN();
        write_report_json(failed, options.out_dir / (hash + ".json"));
      }
    }
  };

  const std::size_t jobs =
      std::max<std::size_t>(1, std::min(options.jobs, tasks.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& thread : pool) thread.join();
  }

  std::ofstream csv(options.out_dir / "summary.csv", std::ios::binary);
  csv << sweep_summary_csv(options.out_dir);
  return rows;
}

namespace {

std::vector<MetricsReport> collect_reports(const fs::path& runs_dir) {
  if (!fs::is_directory(runs_dir))
    throw std::runtime_error("runs directory not found: " + runs_dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(runs_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json" &&
        entry.path().filename() != "summary.json")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<MetricsReport> reports;
  for (const auto& file : files) reports.push_back(read_report_json(file));
  std::stable_sort(reports.begin(), reports.end(),
                   [](const MetricsReport& a, const MetricsReport& b) {
                     const auto key = [](const MetricsReport& r) {
                       return std::make_tuple(
                           r.config.filter_size, r.config.stride,
                           r.config.learning_rate, r.config.architecture,
                           r.seed);
                     };
                     return key(a) < key(b);
                   });
  return reports;
}

}  // namespace

std::string sweep_summary_csv(const fs::path& runs_dir) {
  std::ostringstream out;
  out << "filter,stride,lr,arch,error_pct,diverged,seed\n";
  for (const auto& report : collect_reports(runs_dir)) {
    out << report.config.filter_size << ',' << report.config.stride << ','
        << format_lr(report.config.learning_rate) << ','
        << report.config.architecture << ','
        << format_error_pct(report.final_test_error_pct) << ','
        << (report.diverged ? "true" : "false") << ',' << report.seed << '\n';
  }
  return out.str();
}

std::string sweep_summary_json(const fs::path& runs_dir) {
  json rows = json::array();
  for (const auto& report : collect_reports(runs_dir)) {
    json row = cell_to_json(SweepCell{report.config.filter_size,
                                      report.config.stride,
                                      report.config.learning_rate,
                                      report.config.architecture},
                            report.seed);
    row["error_pct"] = std::isnan(report.final_test_error_pct)
                           ? json()
                           : json(report.final_test_error_pct);
    row["diverged"] = report.diverged;
    if (!report.error.empty()) row["error"] = report.error;
    rows.push_back(row);
  }
  return rows.dump(2) + "\n";
}

NetworkSpec reduced_spec(char architecture, std::size_t num_classes) {
  ExperimentConfig config;
  config.architecture = architecture;
  config.filter_size = 3;
  config.stride = 1;
  config.k1 = 2;
  config.k2 = 3;
  config.fc_hidden = 8;
  return make_network_spec(config, num_classes, 12, 12);
}

namespace {

// Smallest margin to a ReLU kink or pooling tie along the forward pass; the
// finite-difference step must not cross either.
double differentiability_margin(const NetworkSpec& spec,
                                const ForwardCache& cache) {
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (std::holds_alternative<ReluSpec>(spec.layers[i])) {
      const Tensor& input = cache.activations[i];
      for (std::size_t j = 0; j < input.size(); ++j)
        margin = std::min(margin, std::fabs(input[j]));
    } else if (const auto* pool = std::get_if<MaxPoolSpec>(&spec.layers[i])) {
      const Tensor& input = cache.activations[i];
      const std::size_t in_h = input.extent(1);
      const std::size_t in_w = input.extent(2);
      const Shape2D out = conv_output_shape({in_h, in_w}, pool->window, 0,
                                            pool->stride);
      for (std::size_t c = 0; c < input.extent(0); ++c) {
        for (std::size_t y = 0; y < out.height; ++y) {
          for (std::size_t x = 0; x < out.width; ++x) {
            double best = -std::numeric_limits<double>::infinity();
            double second = best;
            for (std::size_t wy = 0; wy < pool->window; ++wy) {
              for (std::size_t wx = 0; wx < pool->window; ++wx) {
                const double v = input(c, y * pool->stride + wy,
                                       x * pool->stride + wx);
                if (v > best) {
                  second = best;
                  best = v;
                } else if (v > second) {
                  second = v;
                }
              }
            }
            if (std::isfinite(second)) margin = std::min(margin, best - second);
          }
        }
      }
    }
  }
  return margin;
}

}  // namespace

std::vector<LayerGradCheck> gradient_check(const NetworkSpec& spec,
                                           std::uint64_t seed) {
  constexpr double kEps = 1e-5;
  const auto shapes = chain_shapes(spec);
  Network net(spec, seed);

  // Draw an input comfortably away from kinks and ties so central
  // differences see a smooth loss.
  Tensor input({spec.in_channels, spec.in_height, spec.in_width});
  std::size_t label = 0;
  ForwardCache cache;
  for (std::size_t attempt = 0; attempt < 64; ++attempt) {
    Rng rng = Rng::derive(seed, 0xd1f + attempt);
    for (std::size_t i = 0; i < input.size(); ++i)
      input[i] = rng.uniform(-0.5, 0.5);
    label = rng.below(shapes.back()[0]);
    net.forward(input, &cache);
    if (differentiability_margin(spec, cache) > 1e-3) break;
  }

  const auto loss_at = [&]() {
    const Tensor logits = net.forward(input);
    return cross_entropy(softmax(logits), label).loss;
  };

  Network::Gradients grads = net.zero_gradients();
  {
    const Tensor logits = net.forward(input, &cache);
    const CrossEntropyResult ce = cross_entropy(softmax(logits), label);
    net.backward(cache, ce.grad_logits, grads);
  }

  // Analytic gradients in parameters() order: weights then bias per layer.
  std::vector<const Tensor*> analytic;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (grads.weights[i].empty()) continue;
    analytic.push_back(&grads.weights[i]);
    analytic.push_back(&grads.bias[i]);
  }

  std::vector<Tensor*> params = net.parameters();
  const std::vector<std::string> names = net.parameter_names();
  std::vector<LayerGradCheck> checks;
  for (std::size_t t = 0; t < params.size(); ++t) {
    double max_rel = 0.0;
    Tensor& tensor = *params[t];
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double saved = tensor[i];
      tensor[i] = saved + kEps;
      const double loss_plus = loss_at();
      tensor[i] = saved - kEps;
      const double loss_minus = loss_at();
      tensor[i] = saved;
      const double numeric = (loss_plus - loss_minus) / (2.0 * kEps);
      const double a = (*analytic[t])[i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
      max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
    }
    checks.push_back({names[t], max_rel});
  }
  return checks;
}

}  // namespace scenechar
