#pragma once
// Standard, size-sweep and transfer protocols with multi-seed aggregation.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "astreg/harness/metrics.hpp"
#include "astreg/harness/split.hpp"
#include "astreg/harness/train.hpp"
#include "astreg/models.hpp"
#include "astreg/treedata/scaler.hpp"

namespace astreg::harness {

using treedata::ScalerScheme;
using treedata::TargetScaler;

struct ExperimentConfig {
  ModelConfig model = ModelConfig::make(ModelKind::dual, Preset::tiny);
  TrainConfig train{};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double train_fraction = 0.8;
  std::vector<double> sweep_fractions{0.2, 0.4, 0.6};
  double sweep_test_fraction = 0.2;
  std::vector<double> transfer_portions{0.1, 0.2, 0.3};
  double transfer_test_fraction = 0.2;
  double finetune_epoch_ratio = 0.25;
  ScalerScheme scaler = ScalerScheme::log_min_max;
  /// Sanity mode: evaluate on the training records themselves.
  bool train_equals_test = false;
  std::size_t jobs = 1;

  std::size_t finetune_epochs() const {
    if (train.epochs == 0 || finetune_epoch_ratio <= 0) return 0;
    return std::max<std::size_t>(1, static_cast<std::size_t>(static_cast<double>(train.epochs) * finetune_epoch_ratio + 0.5));
  }

  void validate() const {
    model.validate();
    if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
    std::vector<std::uint64_t> s = seeds;
    std::sort(s.begin(), s.end());
    if (std::adjacent_find(s.begin(), s.end()) != s.end()) throw std::invalid_argument("seeds must be distinct");
    if (!(train_fraction > 0 && train_fraction < 1)) throw std::invalid_argument("train fraction must be in (0, 1)");
    for (double f : sweep_fractions)
      if (!(f > 0 && f < 1)) throw std::invalid_argument("sweep fractions must be in (0, 1)");
    for (double p : transfer_portions)
      if (!(p >= 0 && p < 1)) throw std::invalid_argument("transfer portions must be in [0, 1)");
    if (train.batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
    if (!(train.learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
    if (finetune_epoch_ratio < 0) throw std::invalid_argument("fine-tune epoch ratio must be >= 0");
  }

  nlohmann::json to_json() const {
    return {{"model", model.to_json()},
            {"epochs", train.epochs},
            {"learning_rate", train.learning_rate},
            {"batch_size", train.batch_size},
            {"seeds", seeds},
            {"train_fraction", train_fraction},
            {"sweep_fractions", sweep_fractions},
            {"sweep_test_fraction", sweep_test_fraction},
            {"sweep_nesting", "nested"},
            {"transfer_portions", transfer_portions},
            {"transfer_test_fraction", transfer_test_fraction},
            {"finetune_epoch_ratio", finetune_epoch_ratio},
            {"scaler", treedata::to_string(scaler)},
            {"train_equals_test", train_equals_test},
            {"jobs", jobs}};
  }

  /// Fields absent from `j` keep the values already in `base`.
  static ExperimentConfig from_json(const nlohmann::json& j) { return from_json(j, ExperimentConfig{}); }

  static ExperimentConfig from_json(const nlohmann::json& j, ExperimentConfig base) {
    ExperimentConfig c = std::move(base);
    if (j.contains("model")) {
      nlohmann::json m = c.model.to_json();
      m.update(j.at("model"));
      c.model = ModelConfig::from_json(m);
    }
    c.train.epochs = j.value("epochs", c.train.epochs);
    c.train.learning_rate = j.value("learning_rate", c.train.learning_rate);
    c.train.batch_size = j.value("batch_size", c.train.batch_size);
    c.seeds = j.value("seeds", c.seeds);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.sweep_fractions = j.value("sweep_fractions", c.sweep_fractions);
    c.sweep_test_fraction = j.value("sweep_test_fraction", c.sweep_test_fraction);
    c.transfer_portions = j.value("transfer_portions", c.transfer_portions);
    c.transfer_test_fraction = j.value("transfer_test_fraction", c.transfer_test_fraction);
    c.finetune_epoch_ratio = j.value("finetune_epoch_ratio", c.finetune_epoch_ratio);
    if (j.contains("scaler")) c.scaler = treedata::scaler_scheme_from_string(j.at("scaler").get<std::string>());
    c.train_equals_test = j.value("train_equals_test", c.train_equals_test);
    c.jobs = j.value("jobs", c.jobs);
    return c;
  }
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  Metrics metrics;
  std::vector<double> truth;
  std::vector<double> predicted;
  std::vector<double> loss_history;
};

struct MetricsReport {
  std::string model;
  std::string dataset;
  std::string protocol;  // standard | sweep | transfer
  double fraction = 0.0;
  std::vector<SeedOutcome> seeds;  // in configured seed order
  Summary mse, mae, pearson;
  bool pearson_degenerate = false;  // any seed hit zero variance

  /// (true, predicted) pairs of the last seed.
  std::vector<std::pair<double, double>> last_pairs() const {
    std::vector<std::pair<double, double>> out;
    if (seeds.empty()) return out;
    const auto& s = seeds.back();
    for (std::size_t i = 0; i < s.truth.size(); ++i) out.emplace_back(s.truth[i], s.predicted[i]);
    return out;
  }

  void aggregate() {
    std::vector<double> a, b, c;
    pearson_degenerate = false;
    for (const auto& s : seeds) {
      a.push_back(s.metrics.mse);
      b.push_back(s.metrics.mae);
      c.push_back(s.metrics.pearson);
      pearson_degenerate = pearson_degenerate || s.metrics.pearson_degenerate;
    }
    mse = summarize(a);
    mae = summarize(b);
    pearson = summarize(c);
  }

  nlohmann::json to_json() const {
    nlohmann::json per_seed = nlohmann::json::array();
    for (const auto& s : seeds) {
      per_seed.push_back({{"seed", s.seed},
                          {"mse", s.metrics.mse},
                          {"mae", s.metrics.mae},
                          {"pearson", s.metrics.pearson},
                          {"pearson_degenerate", s.metrics.pearson_degenerate},
                          {"truth", s.truth},
                          {"predicted", s.predicted},
                          {"loss_history", s.loss_history}});
    }
    return {{"model", model},
            {"dataset", dataset},
            {"protocol", protocol},
            {"fraction", fraction},
            {"mse", {{"mean", mse.mean}, {"std", mse.std}}},
            {"mae", {{"mean", mae.mean}, {"std", mae.std}}},
            {"pearson", {{"mean", pearson.mean}, {"std", pearson.std}}},
            {"single_seed", mse.single},
            {"pearson_degenerate", pearson_degenerate},
            {"seeds", per_seed}};
  }

  static MetricsReport from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.model = j.at("model").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    r.protocol = j.at("protocol").get<std::string>();
    r.fraction = j.at("fraction").get<double>();
    for (const auto& s : j.at("seeds")) {
      SeedOutcome o;
      o.seed = s.at("seed").get<std::uint64_t>();
      o.metrics.mse = s.at("mse").get<double>();
      o.metrics.mae = s.at("mae").get<double>();
      o.metrics.pearson = s.at("pearson").get<double>();
      o.metrics.pearson_degenerate = s.value("pearson_degenerate", false);
      o.truth = s.value("truth", std::vector<double>{});
      o.predicted = s.value("predicted", std::vector<double>{});
      o.loss_history = s.value("loss_history", std::vector<double>{});
      r.seeds.push_back(std::move(o));
    }
    r.aggregate();
    return r;
  }
};

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results must be written
/// to per-index slots; the first exception is rethrown after all threads join.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

/// Fits the scaler on `train` only and writes targets into both sets.
inline TargetScaler prepare_targets(std::vector<SampleRecord>& train, std::vector<SampleRecord>& test, ScalerScheme scheme) {
  return treedata::fit_and_apply_scaler(train, {&test}, scheme);
}

inline SeedOutcome fit_and_evaluate(const ExperimentConfig& cfg, const std::vector<SampleRecord>& train,
                                    const std::vector<SampleRecord>& test, std::uint64_t seed, const std::string& label) {
  auto model = make_regressor(cfg.model);
  model->prepare(train, seed);
  SeedOutcome out;
  out.seed = seed;
  out.loss_history = train_model(*model, train, cfg.train, seed, [&](std::size_t e, double loss) {
                       spdlog::debug("{} seed {} epoch {} loss {:.6g}", label, seed, e + 1, loss);
                     }).loss_history;
  out.truth = targets_of(test);
  out.predicted = predict_all(*model, test);
  out.metrics = compute_metrics(out.truth, out.predicted);
  spdlog::info("{} seed {}: mse {:.6g} mae {:.6g} pearson {:.4f}", label, seed, out.metrics.mse, out.metrics.mae,
               out.metrics.pearson);
  return out;
}

inline MetricsReport run_standard(const std::vector<SampleRecord>& corpus, const std::string& dataset,
                                  const ExperimentConfig& cfg) {
  cfg.validate();
  if (corpus.size() < 10) throw std::invalid_argument(fmt::format("standard protocol needs >= 10 records, got {}", corpus.size()));
  MetricsReport report{to_string(cfg.model.kind), dataset, "standard", cfg.train_fraction, {}, {}, {}, {}, false};
  report.seeds.resize(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), cfg.jobs, [&](std::size_t i) {
    const std::uint64_t seed = cfg.seeds[i];
    Split split = split_dataset(corpus, cfg.train_fraction, seed);
    if (cfg.train_equals_test) split.test = split.train;
    else require_disjoint(split.train, split.test, "standard protocol");
    prepare_targets(split.train, split.test, cfg.scaler);
    report.seeds[i] = fit_and_evaluate(cfg, split.train, split.test, seed, fmt::format("{}/standard", report.model));
  });
  report.aggregate();
  return report;
}

inline std::vector<MetricsReport> run_size_sweep(const std::vector<SampleRecord>& corpus, const std::string& dataset,
                                                 const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<double> fractions = cfg.sweep_fractions;
  std::sort(fractions.begin(), fractions.end());
  std::vector<MetricsReport> reports;
  for (double f : fractions) {
    reports.push_back({to_string(cfg.model.kind), dataset, "sweep", f, {}, {}, {}, {}, false});
    reports.back().seeds.resize(cfg.seeds.size());
  }
  const std::size_t cells = cfg.seeds.size() * fractions.size();
  parallel_for(cells, cfg.jobs, [&](std::size_t cell) {
    const std::size_t si = cell / fractions.size(), fi = cell % fractions.size();
    const std::uint64_t seed = cfg.seeds[si];
    const SweepSplit split = sweep_split(corpus.size(), fractions, cfg.sweep_test_fraction, seed);
    auto train = pick(corpus, split.train[fi]);
    auto test = pick(corpus, split.test);
    require_disjoint(train, test, "size sweep");
    prepare_targets(train, test, cfg.scaler);
    reports[fi].seeds[si] = fit_and_evaluate(cfg, train, test, seed, fmt::format("{}/sweep {}", reports[fi].model, fractions[fi]));
  });
  for (auto& r : reports) r.aggregate();
  return reports;
}

inline std::vector<MetricsReport> run_transfer(const std::vector<SampleRecord>& source, const std::string& source_name,
                                               const std::vector<SampleRecord>& target, const std::string& target_name,
                                               const ExperimentConfig& cfg) {
  cfg.validate();
  if (source.empty() || target.empty()) throw std::invalid_argument("transfer needs non-empty source and target corpora");
  const std::string dataset = source_name + "->" + target_name;
  std::vector<MetricsReport> reports;
  for (double p : cfg.transfer_portions) {
    reports.push_back({to_string(cfg.model.kind), dataset, "transfer", p, {}, {}, {}, {}, false});
    reports.back().seeds.resize(cfg.seeds.size());
  }
  parallel_for(cfg.seeds.size(), cfg.jobs, [&](std::size_t si) {
    const std::uint64_t seed = cfg.seeds[si];
    std::vector<SampleRecord> src = source;
    const TargetScaler source_scaler = treedata::fit_and_apply_scaler(src, {}, cfg.scaler);
    auto base = make_regressor(cfg.model);
    base->prepare(src, seed);
    train_model(*base, src, cfg.train, seed);
    const TransferSplit split = transfer_split(target.size(), cfg.transfer_portions, cfg.transfer_test_fraction, seed);
    for (std::size_t pi = 0; pi < cfg.transfer_portions.size(); ++pi) {
      auto portion = pick(target, split.finetune[pi]);
      auto test = pick(target, split.test);
      require_disjoint(portion, test, "transfer protocol");
      SeedOutcome out;
      out.seed = seed;
      std::unique_ptr<Regressor> model = clone_regressor(*base);
      if (portion.empty()) {
        treedata::apply_scaler(source_scaler, test);
      } else {
        prepare_targets(portion, test, cfg.scaler);
        TrainConfig ft = cfg.train;
        ft.epochs = cfg.finetune_epochs();
        out.loss_history = train_model(*model, portion, ft, seed + 1000003 * (pi + 1)).loss_history;
      }
      out.truth = targets_of(test);
      out.predicted = predict_all(*model, test);
      out.metrics = compute_metrics(out.truth, out.predicted);
      spdlog::info("{}/transfer {} seed {}: mse {:.6g} pearson {:.4f}", reports[pi].model, cfg.transfer_portions[pi], seed,
                   out.metrics.mse, out.metrics.pearson);
      reports[pi].seeds[si] = std::move(out);
    }
  });
  for (auto& r : reports) r.aggregate();
  return reports;
}

}  // namespace astreg::harness
