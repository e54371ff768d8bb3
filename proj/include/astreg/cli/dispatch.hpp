#pragma once
// `astreg` command line: synth, stats, vocab, train, eval, standard, sweep,
// transfer, gradcheck, report. Exit codes: 0 success, 1 runtime failure
// (one "error: ..." line on stderr), 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "astreg/harness/emit.hpp"
#include "astreg/harness/experiment.hpp"
#include "astreg/harness/gradcheck.hpp"
#include "astreg/models.hpp"
#include "astreg/treedata/corpus_io.hpp"
#include "astreg/treedata/stats.hpp"
#include "astreg/treedata/synth.hpp"
#include "astreg/treedata/vocab.hpp"

namespace astreg::cli {

namespace fs = std::filesystem;

struct CommonFlags {
  std::string corpus;
  std::string out;
  std::string model = "dual";
  std::string preset = "tiny";
  std::string seeds = "0,1,2,3,4";
  std::uint64_t seed = 0;
  std::size_t epochs = 100;
  double lr = 1e-4;
  std::size_t batch = 4;
  std::string config;
  std::size_t jobs = 1;
  std::string cross_direction = "bi";
  std::string scaler = "log_min_max";
  bool train_equals_test = false;
};

inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const auto v = std::stoull(item, &used);
    if (used != item.size()) throw CLI::ValidationError("--seeds", "not an integer: " + item);
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("--seeds", "empty seed list");
  return out;
}

inline std::size_t thread_cap(std::size_t requested) {
  if (const char* env = std::getenv("ASTREG_THREADS")) {
    try {
      const std::size_t cap = std::stoul(env);
      if (cap > 0) return std::min(requested, cap);
    } catch (const std::exception&) {
      spdlog::warn("ignoring ASTREG_THREADS='{}'", env);
    }
  }
  return requested;
}

/// Defaults, then the --config file, then any flag given on the command line.
inline harness::ExperimentConfig effective_config(const CLI::App& sub, const CommonFlags& f) {
  harness::ExperimentConfig cfg;
  nlohmann::json file = nlohmann::json::object();
  if (!f.config.empty()) {
    file = treedata::detail::parse_json_text(treedata::detail::read_file(f.config), f.config);
    if (!file.is_object()) throw std::runtime_error(fmt::format("{}: config must be a JSON object", f.config));
    const nlohmann::json known = harness::ExperimentConfig{}.to_json();
    for (const auto& [key, value] : file.items())
      if (!known.contains(key)) throw std::runtime_error(fmt::format("{}: unknown config key '{}'", f.config, key));
    if (file.contains("model")) {
      const nlohmann::json known_model = ModelConfig{}.to_json();
      for (const auto& [key, value] : file.at("model").items())
        if (!known_model.contains(key)) throw std::runtime_error(fmt::format("{}: unknown model key '{}'", f.config, key));
    }
  }
  auto given = [&sub](const char* name) {
    const CLI::Option* o = sub.get_option_no_throw(name);
    return o && o->count() > 0;
  };
  auto model_json = file.contains("model") ? file.at("model") : nlohmann::json::object();
  if (given("--model") || !model_json.contains("kind")) model_json["kind"] = f.model;
  if (given("--preset") || !model_json.contains("preset")) model_json["preset"] = f.preset;
  if (given("--cross-direction")) model_json["cross_direction"] = f.cross_direction;
  // preset defaults first, then explicit model fields from the file
  nlohmann::json merged = ModelConfig::make(model_kind_from_string(model_json.at("kind")),
                                            preset_from_string(model_json.at("preset")))
                              .to_json();
  merged.update(model_json);
  file["model"] = merged;
  cfg = harness::ExperimentConfig::from_json(file, cfg);
  if (given("--epochs")) cfg.train.epochs = f.epochs;
  if (given("--lr")) cfg.train.learning_rate = f.lr;
  if (given("--batch")) cfg.train.batch_size = f.batch;
  if (given("--seeds")) cfg.seeds = parse_seed_list(f.seeds);
  if (given("--seed")) cfg.seeds = {f.seed};
  if (given("--jobs")) cfg.jobs = f.jobs;
  if (given("--scaler")) cfg.scaler = treedata::scaler_scheme_from_string(f.scaler);
  if (given("--train-equals-test")) cfg.train_equals_test = f.train_equals_test;
  cfg.jobs = thread_cap(std::max<std::size_t>(1, cfg.jobs));
  cfg.validate();
  return cfg;
}

inline void add_model_flags(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--model", f.model, "Model kind")
      ->check(CLI::IsMember({"gcn", "gat", "sage", "gin", "tbcnn", "code2vec", "tbast", "dual"}));
  sub->add_option("--preset", f.preset, "Transformer size preset")->check(CLI::IsMember({"tiny", "small", "large"}));
  sub->add_option("--cross-direction", f.cross_direction, "Cross-attention wiring of the dual model")
      ->check(CLI::IsMember({"bi", "code2ast", "ast2code"}));
  sub->add_option("--config", f.config, "JSON config file; command-line flags take precedence")->check(CLI::ExistingFile);
}

inline void add_training_flags(CLI::App* sub, CommonFlags& f, bool many_seeds) {
  add_model_flags(sub, f);
  sub->add_option("--epochs", f.epochs, "Training epochs");
  sub->add_option("--lr", f.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  sub->add_option("--batch", f.batch, "Batch size")->check(CLI::PositiveNumber);
  sub->add_option("--scaler", f.scaler, "Target scaling")->check(CLI::IsMember({"log_min_max", "min_max", "identity"}));
  if (many_seeds) {
    sub->add_option("--seeds", f.seeds, "Comma-separated seeds");
    sub->add_option("--jobs", f.jobs, "Seeds run in parallel (capped by ASTREG_THREADS)")->check(CLI::PositiveNumber);
  }
  sub->add_option("--seed", f.seed, "Single seed (overrides --seeds)");
}

inline void print_report_line(std::ostream& out, const harness::MetricsReport& r) {
  out << fmt::format("{} {} {} {}: mse {:.6f} ± {:.6f}  mae {:.6f} ± {:.6f}  pearson {:.4f} ± {:.4f}{}{}\n", r.model, r.dataset,
                     r.protocol, r.fraction, r.mse.mean, r.mse.std, r.mae.mean, r.mae.std, r.pearson.mean, r.pearson.std,
                     r.mse.single ? "  [single seed: std reported as 0]" : "",
                     r.pearson_degenerate ? "  [zero-variance pearson reported as 0]" : "");
}

inline std::string dataset_name(const std::string& path) {
  fs::path p(path);
  if (p.filename().empty()) p = p.parent_path();
  return p.stem().string();
}

/// Routes the default logger to `err` until destroyed, then puts the old one back.
class ScopedLogging {
 public:
  ScopedLogging(std::ostream& err, const std::string& level) : previous_(spdlog::default_logger()) {
    configure_logging(err, level);
  }
  ~ScopedLogging() { spdlog::set_default_logger(previous_); }
  ScopedLogging(const ScopedLogging&) = delete;
  ScopedLogging& operator=(const ScopedLogging&) = delete;

 private:
  static void configure_logging(std::ostream& err, const std::string& level);
  std::shared_ptr<spdlog::logger> previous_;
};

inline void ScopedLogging::configure_logging(std::ostream& err, const std::string& level) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("astreg", sink);
  logger->set_pattern("[%l] %v");
  logger->set_level(spdlog::level::from_str(level));
  spdlog::set_default_logger(logger);
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"astreg: execution-time regression over abstract syntax trees"};
  app.name("astreg");
  app.require_subcommand(1);
  app.allow_extras(false);
  app.fallthrough();
  std::string log_level = "info";
  bool verbose = false, quiet = false;
  auto* level_opt = app.add_option("--log-level", log_level, "Progress verbosity on stderr")
                        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));
  auto* verbose_opt = app.add_flag("-v,--verbose", verbose, "Debug-level progress");
  auto* quiet_opt = app.add_flag("-q,--quiet", quiet, "Warnings and errors only");
  verbose_opt->excludes(quiet_opt);
  level_opt->excludes(verbose_opt)->excludes(quiet_opt);

  CommonFlags f;

  // synth
  std::size_t synth_n = 0;
  std::string synth_format = "dir";
  treedata::SynthConfig synth_cfg;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with a planted duration function");
  synth->add_option("--n", synth_n, "Number of records")->required()->check(CLI::PositiveNumber);
  synth->add_option("--seed", f.seed, "Generator seed");
  synth->add_option("--out", f.out, "Output directory (or .jsonl file with --format jsonl)")->required();
  synth->add_option("--format", synth_format, "dir or jsonl")->check(CLI::IsMember({"dir", "jsonl"}));
  synth->add_option("--min-nodes", synth_cfg.min_nodes, "Minimum nodes per tree");
  synth->add_option("--max-nodes", synth_cfg.max_nodes, "Maximum nodes per tree");
  synth->add_option("--a", synth_cfg.a, "Weight of the LOOP count");
  synth->add_option("--b", synth_cfg.b, "Weight of the tree depth");
  synth->add_option("--c", synth_cfg.c, "Weight of the token count");
  synth->add_option("--sigma", synth_cfg.sigma, "Noise standard deviation")->check(CLI::NonNegativeNumber);
  synth->add_option("--runs", synth_cfg.runs_per_record, "Runs per record")->check(CLI::PositiveNumber);
  synth->add_option("--project", synth_cfg.project, "Project name stored in each record");
  synth->add_option("--id-prefix", synth_cfg.id_prefix, "Record id prefix");

  auto* stats = app.add_subcommand("stats", "Average tree statistics of a corpus");
  stats->add_option("--corpus", f.corpus, "Corpus directory or .jsonl file")->required();

  std::string vocab_source = "tokens";
  std::size_t min_freq = 1;
  auto* vocab = app.add_subcommand("vocab", "Build a vocabulary from a corpus");
  vocab->add_option("--corpus", f.corpus, "Corpus directory or .jsonl file")->required();
  vocab->add_option("--source", vocab_source, "What to count")
      ->check(CLI::IsMember({"tokens", "node_labels", "path_keys", "terminal_values", "linearized"}));
  vocab->add_option("--min-freq", min_freq, "Minimum frequency")->check(CLI::PositiveNumber);
  vocab->add_option("--out", f.out, "Write the vocabulary as JSON");

  auto* train = app.add_subcommand("train", "Train one model on a whole corpus and save a checkpoint");
  train->add_option("--corpus", f.corpus, "Training corpus")->required();
  train->add_option("--out", f.out, "Checkpoint directory")->required();
  add_training_flags(train, f, false);

  std::string checkpoint;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--corpus", f.corpus, "Evaluation corpus")->required();
  eval->add_option("--out", f.out, "Write predictions.csv into this directory");

  auto* standard = app.add_subcommand("standard", "80/20 protocol over several seeds");
  standard->add_option("--corpus", f.corpus, "Corpus")->required();
  standard->add_option("--out", f.out, "Results directory")->required();
  standard->add_flag("--train-equals-test", f.train_equals_test, "Sanity mode: evaluate on the training split");
  add_training_flags(standard, f, true);

  auto* sweep = app.add_subcommand("sweep", "Training-size sweep (20/40/60%) against a fixed test set");
  sweep->add_option("--corpus", f.corpus, "Corpus")->required();
  sweep->add_option("--out", f.out, "Results directory")->required();
  add_training_flags(sweep, f, true);

  std::string source, target;
  auto* transfer = app.add_subcommand("transfer", "Train on a source corpus, fine-tune on portions of a target");
  transfer->add_option("--source", source, "Source corpus")->required();
  transfer->add_option("--target", target, "Target corpus")->required();
  transfer->add_option("--out", f.out, "Results directory")->required();
  add_training_flags(transfer, f, true);

  std::string gc_model = "all";
  std::size_t gc_entries = 48;
  double gc_epsilon = 1e-3, gc_tolerance = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of a model's gradients");
  gradcheck->add_option("--model", gc_model, "Model kind or 'all'")
      ->check(CLI::IsMember({"all", "gcn", "gat", "sage", "gin", "tbcnn", "code2vec", "tbast", "dual"}));
  gradcheck->add_option("--preset", f.preset, "Transformer size preset")->check(CLI::IsMember({"tiny", "small", "large"}));
  gradcheck->add_option("--entries", gc_entries, "Entries sampled per parameter tensor (0 = all)");
  gradcheck->add_option("--epsilon", gc_epsilon, "Largest finite-difference step")->check(CLI::Range(1e-7, 1e-3));
  gradcheck->add_option("--tolerance", gc_tolerance, "Maximum accepted relative error");
  gradcheck->add_option("--seed", f.seed, "Seed for data, initialisation and sampling");

  std::vector<std::string> report_inputs;
  auto* report = app.add_subcommand("report", "Re-render results from saved reports.json files");
  report->add_option("--in", report_inputs, "Result directories or reports.json files")->required();
  report->add_option("--out", f.out, "Output directory for the merged results");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "usage error: " << e.what() << "\n";
    const CLI::App* failing = &app;
    for (auto* s : app.get_subcommands())
      if (s->parsed()) failing = s;
    err << failing->help();
    return 2;
  }

  if (verbose) log_level = "debug";
  if (quiet) log_level = "warn";
  const ScopedLogging logging(err, log_level);
  try {
    if (synth->parsed()) {
      const auto records = treedata::generate_synthetic(synth_n, f.seed, synth_cfg);
      nlohmann::json meta = treedata::synthetic_metadata(f.seed, synth_cfg);
      if (synth_format == "dir") {
        treedata::save_corpus_dir(f.out, records);
        harness::write_text(fs::path(f.out) / treedata::kCorpusMetaFile, meta.dump(2) + "\n");
      } else {
        if (fs::path(f.out).has_parent_path()) fs::create_directories(fs::path(f.out).parent_path());
        treedata::save_corpus_jsonl(f.out, records);
        harness::write_text(fs::path(f.out).string() + ".meta.json", meta.dump(2) + "\n");
      }
      out << fmt::format("wrote {} records to {}\n", records.size(), f.out);
      return 0;
    }
    if (stats->parsed()) {
      const auto records = treedata::load_corpus(f.corpus);
      const auto s = treedata::average_tree_stats(records, [](const SampleRecord& r) -> const treedata::AstTree& { return r.tree; });
      out << fmt::format("trees {}\navg_nodes {:.3f}\navg_edges {:.3f}\navg_diameter {:.3f}\navg_density {:.6f}\n", s.trees,
                         s.avg_nodes, s.avg_edges, s.avg_diameter, s.avg_density);
      return 0;
    }
    if (vocab->parsed()) {
      const auto records = treedata::load_corpus(f.corpus);
      const std::vector<std::pair<const char*, treedata::VocabSource>> sources = {
          {"tokens", treedata::VocabSource::tokens},
          {"node_labels", treedata::VocabSource::node_labels},
          {"path_keys", treedata::VocabSource::path_keys},
          {"terminal_values", treedata::VocabSource::terminal_values},
          {"linearized", treedata::VocabSource::linearized}};
      treedata::VocabSource src = treedata::VocabSource::tokens;
      for (const auto& [name, s] : sources)
        if (vocab_source == name) src = s;
      const auto v = treedata::build_vocab(records, src, min_freq);
      if (!f.out.empty()) harness::write_text(f.out, v.to_json().dump(2) + "\n");
      out << fmt::format("vocabulary {} size {} (including 4 specials)\n", vocab_source, v.size());
      return 0;
    }
    if (train->parsed()) {
      const auto cfg = effective_config(*train, f);
      auto records = treedata::load_corpus(f.corpus);
      const auto scaler = treedata::fit_and_apply_scaler(records, {}, cfg.scaler);
      auto model = make_regressor(cfg.model);
      model->prepare(records, cfg.seeds.front());
      const auto result = harness::train_model(*model, records, cfg.train, cfg.seeds.front(), [&](std::size_t e, double loss) {
        spdlog::info("epoch {}/{} loss {:.6g}", e + 1, cfg.train.epochs, loss);
      });
      save_model(*model, f.out, {{"experiment", cfg.to_json()}, {"scaler", scaler.to_json()}, {"corpus_sha1", harness::corpus_hash(records)}});
      out << fmt::format("trained {} on {} records; final loss {:.6g}; checkpoint {}\n", to_string(cfg.model.kind), records.size(),
                         result.loss_history.empty() ? 0.0 : result.loss_history.back(), f.out);
      return 0;
    }
    if (eval->parsed()) {
      nlohmann::json config;
      auto model = load_model(checkpoint, &config);
      const auto scaler = treedata::TargetScaler::from_json(config.at("scaler"));
      auto records = treedata::load_corpus(f.corpus);
      treedata::apply_scaler(scaler, records);
      const auto truth = harness::targets_of(records);
      const auto pred = harness::predict_all(*model, records);
      const auto m = harness::compute_metrics(truth, pred);
      if (!f.out.empty()) {
        fs::create_directories(f.out);
        std::string csv = "id,target,predicted,predicted_ms\n";
        for (std::size_t i = 0; i < records.size(); ++i) {
          csv += fmt::format("{},{:.10g},{:.10g},{:.10g}\n", harness::csv_field(records[i].id), truth[i], pred[i],
                             scaler.inverse_transform(pred[i]));
        }
        harness::write_text(fs::path(f.out) / "predictions.csv", csv);
      }
      out << fmt::format("{} on {} records: mse {:.6f} mae {:.6f} pearson {:.4f}{}\n", to_string(model->kind()), records.size(),
                         m.mse, m.mae, m.pearson, m.pearson_degenerate ? " [zero variance]" : "");
      return 0;
    }
    if (standard->parsed() || sweep->parsed()) {
      const CLI::App& sub = standard->parsed() ? *standard : *sweep;
      const auto cfg = effective_config(sub, f);
      const auto records = treedata::load_corpus(f.corpus);
      const std::string name = dataset_name(f.corpus);
      std::vector<harness::MetricsReport> reports;
      if (standard->parsed()) reports.push_back(harness::run_standard(records, name, cfg));
      else reports = harness::run_size_sweep(records, name, cfg);
      harness::emit_results(reports, f.out, cfg.to_json(), {harness::describe_corpus(name, records)});
      for (const auto& r : harness::sorted_reports(reports)) print_report_line(out, r);
      return 0;
    }
    if (transfer->parsed()) {
      const auto cfg = effective_config(*transfer, f);
      const auto src = treedata::load_corpus(source);
      const auto tgt = treedata::load_corpus(target);
      const auto reports = harness::run_transfer(src, dataset_name(source), tgt, dataset_name(target), cfg);
      harness::emit_results(reports, f.out, cfg.to_json(),
                            {harness::describe_corpus(dataset_name(source), src), harness::describe_corpus(dataset_name(target), tgt)});
      for (const auto& r : reports) print_report_line(out, r);
      return 0;
    }
    if (gradcheck->parsed()) {
      std::vector<ModelKind> kinds;
      if (gc_model == "all") kinds.assign(std::begin(kAllModelKinds), std::end(kAllModelKinds));
      else kinds.push_back(model_kind_from_string(gc_model));
      nn::GradCheckOptions opt;
      opt.epsilon = gc_epsilon;
      opt.max_entries_per_parameter = gc_entries;
      opt.seed = f.seed;
      double worst = 0;
      for (auto k : kinds) {
        spdlog::info("gradcheck {} ...", to_string(k));
        const auto r = harness::gradcheck_model(ModelConfig::make(k, preset_from_string(f.preset)), opt, f.seed);
        worst = std::max(worst, r.result.max_rel_error);
        out << fmt::format("{} max_rel_error {:.3e} entries {} worst {}[{}] seconds {:.1f}\n", to_string(k), r.result.max_rel_error,
                           r.result.entries_checked, r.result.worst_parameter, r.result.worst_index, r.seconds);
      }
      if (worst > gc_tolerance) {
        err << fmt::format("error: max relative error {:.3e} exceeds tolerance {:.1e}\n", worst, gc_tolerance);
        return 1;
      }
      return 0;
    }
    if (report->parsed()) {
      std::vector<harness::MetricsReport> reports;
      for (const auto& in : report_inputs) {
        const fs::path p = fs::is_directory(in) ? fs::path(in) / "reports.json" : fs::path(in);
        for (auto& r : harness::load_reports(p)) reports.push_back(std::move(r));
      }
      if (reports.empty()) throw std::runtime_error("no reports found");
      if (!f.out.empty()) {
        harness::emit_results(reports, f.out, {{"merged_from", report_inputs}}, {});
      }
      for (const auto& r : harness::sorted_reports(reports)) print_report_line(out, r);
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& c : msg)
      if (c == '\n') c = ' ';
    err << "error: " << msg << "\n";
    return 1;
  }
  return 2;
}

}  // namespace astreg::cli
