// Acceptance suite: one PASS/FAIL line per criterion on stdout, details
// indented underneath. Exit status is nonzero when any criterion fails.
//
//   astreg_acceptance                 run everything
//   astreg_acceptance overfit signal  run criteria whose name contains a word

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "astreg/astreg.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace astreg;
using namespace astreg::oracles;
using astreg::testing::random_tree;
using nn::Rng;
namespace fs = std::filesystem;

namespace {

enum class Status { pass, fail, skip };

struct Outcome {
  Status status = Status::pass;
  std::string summary;
  std::vector<std::string> details;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      status = Status::fail;
      details.push_back("violated: " + what);
    }
  }
  void note(const std::string& line) { details.push_back(line); }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

gnn::GraphBatch tree_graph(const treedata::AstTree& t) {
  return gnn::graph_from_tree(t, [](const std::string&) { return std::size_t{0}; });
}

std::size_t random_size(Rng& rng, std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); }

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) { return to_tensor(random_matrix(r, c, rng)); }

double worst_row_sum_error(const Tensor& w) {
  double worst = 0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double s = 0;
    for (std::size_t j = 0; j < w.cols(); ++j) s += w(i, j);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- gradient suite ----

Outcome gradient_suite() {
  Outcome o;
  const auto start = Clock::now();
  nn::GradCheckOptions opt;
  opt.max_entries_per_parameter = 48;
  double worst = 0;
  for (auto kind : kAllModelKinds) {
    const auto r = harness::gradcheck_model(ModelConfig::make(kind, Preset::tiny), opt, 0);
    worst = std::max(worst, r.result.max_rel_error);
    o.note(fmt::format("{:<9} max_rel_error {:.3e}  entries {:>5}  worst {}[{}]  {:.1f} s", to_string(kind), r.result.max_rel_error,
                       r.result.entries_checked, r.result.worst_parameter, r.result.worst_index, r.seconds));
    o.require(r.result.max_rel_error <= 1e-4, fmt::format("{} max relative error <= 1e-4", to_string(kind)));
  }
  const double total = seconds_since(start);
  o.require(total <= 120.0, "total runtime <= 120 s");
  o.require(sizeof(nn::Real) == 8, "64-bit tensors");
  o.summary = fmt::format("worst max_rel_error {:.3e} over 8 kinds, {:.1f} s (limit 1e-4, 120 s)", worst, total);
  return o;
}

// ---- oracle equivalence ----

Outcome oracle_equivalence() {
  Outcome o;
  Rng rng(2024);
  double gcn = 0, gat = 0, sage = 0, gin = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = random_size(rng, 1, 6);
    const auto g = tree_graph(random_tree(n, rng));
    const gnn::Propagation prop(g);
    const Matrix h = random_matrix(n, 4, rng), w = random_matrix(4, 3, rng), a = random_matrix(6, 1, rng);
    gcn = std::max(gcn, max_abs_diff(gnn::gcn_forward(to_tensor(w), prop, to_tensor(h)), dense_gcn(g, h, w)));
    gat = std::max(gat, max_abs_diff(gnn::gat_forward(to_tensor(w), to_tensor(a), prop, to_tensor(h)), dense_gat(g, h, w, a).first));
    sage = std::max(sage, max_abs_diff(gnn::sage_forward(to_tensor(w), prop, to_tensor(h)), dense_sage(g, h, w)));
    const Matrix w1 = random_matrix(4, 5, rng), w2 = random_matrix(5, 3, rng);
    const double eps = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
    const Tensor tw1 = to_tensor(w1), tw2 = to_tensor(w2);
    const Tensor out = gnn::gin_forward(
        Tensor::scalar(eps), [&](const Tensor& x) { return nn::matmul(nn::relu(nn::matmul(x, tw1)), tw2); }, prop, to_tensor(h));
    gin = std::max(gin, max_abs_diff(out, dense_gin(g, h, eps, w1, w2)));
  }
  o.note(fmt::format("50 trees of 1..6 nodes: max |diff| gcn {:.2e} gat {:.2e} sage {:.2e} gin {:.2e}", gcn, gat, sage, gin));
  o.require(std::max({gcn, gat, sage, gin}) <= 1e-6, "GNN layers within 1e-6 of dense oracles");

  std::size_t mismatched = 0, contexts = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto t = random_tree(random_size(rng, 2, 12), rng, 0.8);
    auto got = treedata::extract_path_contexts(t, {8, 2, 1000000, 0});
    auto want = brute_force_paths(t, 8, 2);
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    contexts += want.size();
    if (got != want) ++mismatched;
  }
  o.note(fmt::format("100 trees of 2..12 nodes: {} path contexts, {} trees differ from brute force", contexts, mismatched));
  o.require(mismatched == 0, "path contexts equal brute-force LCA enumeration exactly");
  o.summary = fmt::format("GNN max |diff| {:.2e} (limit 1e-6); path contexts exact on 100/100 trees",
                          std::max({gcn, gat, sage, gin}));
  if (mismatched) o.summary = fmt::format("{} trees with differing path contexts", mismatched);
  return o;
}

// ---- attention invariants ----

Outcome attention_invariants() {
  Outcome o;
  Rng rng(7);
  double self_err = 0, cross_err = 0, gat_err = 0, c2v_err = 0, masked_mass = 0;

  nn::MultiHeadAttention mha("self", 16, 4, rng);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = random_size(rng, 1, 20);
    std::vector<std::uint8_t> mask(n, 1);
    for (std::size_t j = 1; j < n; ++j) mask[j] = std::bernoulli_distribution(0.7)(rng) ? 1 : 0;
    const Tensor x = random_tensor(n, 16, rng);
    std::vector<Tensor> weights;
    mha(x, x, mask, &weights);
    for (const auto& w : weights) {
      self_err = std::max(self_err, worst_row_sum_error(w));
      for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (!mask[j]) masked_mass = std::max(masked_mass, std::abs(w(i, j)));
    }
  }

  seqmodels::CrossAttention cross("cross", 16, 4, rng);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t lc = random_size(rng, 1, 15), la = random_size(rng, 2, 15);
    std::vector<std::uint8_t> code_mask(lc, 1);
    for (std::size_t j = 1; j < lc; ++j) code_mask[j] = std::bernoulli_distribution(0.7)(rng) ? 1 : 0;
    const auto out = seqmodels::cross_attend(random_tensor(lc, 16, rng), code_mask, random_tensor(la, 16, rng), {}, cross);
    for (const auto* side : {&out.ast_weights, &out.code_weights})
      for (const auto& w : *side) cross_err = std::max(cross_err, worst_row_sum_error(w));
    for (const auto& w : out.ast_weights)
      for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < lc; ++j)
          if (!code_mask[j]) masked_mass = std::max(masked_mass, std::abs(w(i, j)));
  }

  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = random_size(rng, 1, 40);
    const auto g = tree_graph(random_tree(n, rng));
    const gnn::Propagation prop(g);
    Tensor alpha;
    gnn::gat_forward(random_tensor(5, 4, rng), random_tensor(8, 1, rng), prop, random_tensor(n, 5, rng), gnn::Activation::relu,
                     &alpha);
    std::vector<double> sums(n, 0.0);
    for (std::size_t k = 0; k < prop.attn_dst.size(); ++k) sums[prop.attn_dst[k]] += alpha.values()[k];
    for (double s : sums) gat_err = std::max(gat_err, std::abs(s - 1.0));
  }

  const auto records = treedata::generate_synthetic(40, 3);
  treemodels::Code2VecRegressor c2v(ModelConfig::make(ModelKind::code2vec, Preset::tiny));
  c2v.prepare(records, 1);
  for (const auto& r : records) {
    const auto e = c2v.encode(r);
    const auto out = treemodels::code2vec_forward(encoded_as<treemodels::Code2VecEncoded>(e.get()).contexts, c2v.weights());
    if (out.alpha.size() == 0) continue;
    double s = 0;
    for (Real a : out.alpha.values()) s += a;
    c2v_err = std::max(c2v_err, std::abs(s - 1.0));
  }

  o.note(fmt::format("max |row sum - 1|: self {:.2e} cross {:.2e} gat {:.2e} code2vec {:.2e}; max masked weight {:.2e}", self_err,
                     cross_err, gat_err, c2v_err, masked_mass));
  const double worst_sum = std::max({self_err, cross_err, gat_err, c2v_err});
  o.require(worst_sum <= 1e-6, "attention rows sum to 1 within 1e-6");
  o.require(masked_mass == 0.0, "masked keys get exactly zero weight");

  double pad_shift = 0;
  for (auto direction : {CrossDirection::bi, CrossDirection::code2ast, CrossDirection::ast2code}) {
    auto cfg = ModelConfig::make(ModelKind::dual, Preset::tiny);
    cfg.cross_direction = direction;
    seqmodels::DualTransformer model(cfg);
    model.prepare(records, 5);
    for (std::size_t i = 0; i < 20; ++i) {
      const auto in = model.make_input(records[i]);
      const double base = model.predict_input(in, RunContext{}).item();
      for (std::size_t pad : {1, 7, 40}) {
        auto padded = in;
        padded.token_mask.assign(in.tokens.size(), 1);
        for (std::size_t k = 0; k < pad && padded.tokens.size() < cfg.max_len; ++k) {
          padded.tokens.push_back(treedata::Vocabulary::kPadId);
          padded.token_mask.push_back(0);
        }
        pad_shift = std::max(pad_shift, std::abs(model.predict_input(padded, RunContext{}).item() - base));
      }
    }
  }
  o.note(fmt::format("dual prediction shift under code-side padding (3 directions, 20 records, 1/7/40 pads): {:.2e}", pad_shift));
  o.require(pad_shift <= 1e-9, "padding the code side changes the dual prediction by <= 1e-9");
  o.summary = fmt::format("row sums within {:.2e} (limit 1e-6); masked weight {:.1e}; padding shift {:.2e} (limit 1e-9)", worst_sum,
                          masked_mass, pad_shift);
  return o;
}

// ---- permutation invariance ----

Outcome permutation_invariance() {
  Outcome o;
  Rng rng(11);
  const auto records = treedata::generate_synthetic(20, 8);
  double gnn_worst = 0;
  for (auto kind : {ModelKind::gcn, ModelKind::gat, ModelKind::sage, ModelKind::gin}) {
    gnn::GraphRegressor model(ModelConfig::make(kind, Preset::tiny));
    model.prepare(records, 2);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    for (auto& b : model.buffers())
      for (auto& v : b.values()) v = static_cast<Real>(u(rng));
    double worst = 0;
    for (const auto& r : records) {
      const auto g = encoded_as<gnn::GraphEncoded>(model.encode(r).get()).graph;
      std::vector<std::size_t> perm(g.num_nodes());
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (int k = 0; k < 3; ++k) {
        std::shuffle(perm.begin(), perm.end(), rng);
        const double base = model.forward_graphs(g, RunContext{}).item();
        worst = std::max(worst, std::abs(model.forward_graphs(permute_graph(g, perm), RunContext{}).item() - base));
      }
    }
    o.note(fmt::format("{:<5} max |shift| under node relabelling: {:.2e}", to_string(kind), worst));
    gnn_worst = std::max(gnn_worst, worst);
  }
  o.require(gnn_worst <= 1e-6, "GNN regressors unchanged within 1e-6 under node relabelling");

  treemodels::Code2VecRegressor c2v(ModelConfig::make(ModelKind::code2vec, Preset::tiny));
  c2v.prepare(records, 4);
  double c2v_worst = 0;
  for (const auto& r : records) {
    const auto ctx = encoded_as<treemodels::Code2VecEncoded>(c2v.encode(r).get()).contexts;
    const double base = treemodels::code2vec_forward(ctx, c2v.weights()).prediction.item();
    std::vector<std::size_t> order(ctx.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int k = 0; k < 3; ++k) {
      std::shuffle(order.begin(), order.end(), rng);
      treemodels::ContextIds moved;
      for (auto i : order) {
        moved.start.push_back(ctx.start[i]);
        moved.path.push_back(ctx.path[i]);
        moved.end.push_back(ctx.end[i]);
      }
      c2v_worst = std::max(c2v_worst, std::abs(treemodels::code2vec_forward(moved, c2v.weights()).prediction.item() - base));
    }
  }
  o.note(fmt::format("code2vec max |shift| under context reordering: {:.2e}", c2v_worst));
  o.require(c2v_worst <= 1e-9, "code2vec unchanged within 1e-9 under context reordering");
  o.summary = fmt::format("GNN shift {:.2e} (limit 1e-6); code2vec shift {:.2e} (limit 1e-9)", gnn_worst, c2v_worst);
  return o;
}

// ---- overfit capacity ----

Outcome overfit_capacity() {
  Outcome o;
  auto records = treedata::generate_synthetic(16, 42);
  treedata::fit_and_apply_scaler(records, {});
  const auto truth = harness::targets_of(records);
  double worst_mse = 0, worst_time = 0;
  for (auto kind : kAllModelKinds) {
    const auto start = Clock::now();
    auto cfg = ModelConfig::make(kind, Preset::tiny);
    cfg.dropout = 0.0;
    cfg.gnn_dropout = 0.0;
    auto model = make_regressor(cfg);
    model->prepare(records, 0);
    const auto result = harness::train_model(*model, records, harness::TrainConfig{500, 1e-3, records.size()}, 0);
    const double mse = harness::compute_metrics(truth, harness::predict_all(*model, records)).mse;
    const double secs = seconds_since(start);
    worst_mse = std::max(worst_mse, mse);
    worst_time = std::max(worst_time, secs);
    o.note(fmt::format("{:<9} train mse {:.3e} (last epoch loss {:.3e}) after 500 epochs, {:.1f} s", to_string(kind), mse,
                       result.loss_history.back(), secs));
    o.require(mse <= 1e-3, fmt::format("{} train MSE <= 1e-3", to_string(kind)));
    o.require(secs <= 300.0, fmt::format("{} runtime <= 300 s", to_string(kind)));
  }
  o.summary = fmt::format("worst train MSE {:.3e} (limit 1e-3), slowest model {:.1f} s (limit 300 s)", worst_mse, worst_time);
  return o;
}

// ---- signal recovery ----

Outcome signal_recovery() {
  Outcome o;
  treedata::SynthConfig synth;
  synth.sigma = 0.1;
  const auto corpus = treedata::generate_synthetic(200, 0, synth);
  harness::ExperimentConfig cfg;
  cfg.seeds = {0};
  cfg.train.learning_rate = 1e-3;
  cfg.train.batch_size = 8;

  cfg.model = ModelConfig::make(ModelKind::dual, Preset::tiny);
  cfg.train.epochs = 30;
  auto start = Clock::now();
  const auto dual = harness::run_standard(corpus, "synthetic", cfg);
  const double dual_secs = seconds_since(start);
  const double dual_r = dual.seeds[0].metrics.pearson;
  o.note(fmt::format("dual tiny, 30 epochs: test pearson {:.4f} mse {:.3e}, {:.1f} s", dual_r, dual.seeds[0].metrics.mse, dual_secs));

  cfg.model = ModelConfig::make(ModelKind::gcn, Preset::tiny);
  cfg.train.epochs = 100;
  start = Clock::now();
  const auto gcn = harness::run_standard(corpus, "synthetic", cfg);
  const double gcn_r = gcn.seeds[0].metrics.pearson;
  o.note(fmt::format("gcn tiny, 100 epochs: test pearson {:.4f} mse {:.3e}, {:.1f} s", gcn_r, gcn.seeds[0].metrics.mse,
                     seconds_since(start)));

  o.require(dual_r >= 0.8, "dual test Pearson >= 0.8");
  o.require(dual_secs <= 600.0, "dual run within 10 min");
  o.require(gcn_r >= 0.6, "gcn test Pearson >= 0.6");
  o.summary = fmt::format("dual pearson {:.4f} (limit 0.8) in {:.0f} s; gcn pearson {:.4f} (limit 0.6)", dual_r, dual_secs, gcn_r);
  return o;
}

// ---- protocol integrity ----

Outcome protocol_integrity() {
  Outcome o;
  harness::ExperimentConfig cfg;
  cfg.model = ModelConfig::make(ModelKind::gcn, Preset::tiny);
  cfg.train.epochs = 2;
  cfg.train.learning_rate = 1e-3;
  cfg.seeds = {0, 1, 2};
  const auto corpus = treedata::generate_synthetic(50, 21);

  // identity scaling keeps test truths comparable across runs with different training pools
  auto raw_cfg = cfg;
  raw_cfg.scaler = treedata::ScalerScheme::identity;
  const auto sweep = harness::run_size_sweep(corpus, "synthetic", raw_cfg);
  bool sweep_same = sweep.size() == 3;
  for (const auto& r : sweep)
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) sweep_same = sweep_same && r.seeds[s].truth == sweep[0].seeds[s].truth;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto split = harness::sweep_split(corpus.size(), cfg.sweep_fractions, cfg.sweep_test_fraction, seed);
    const std::set<std::size_t> test(split.test.begin(), split.test.end());
    for (auto i : split.train.back()) sweep_same = sweep_same && !test.count(i);
  }
  o.note(fmt::format("sweep: test targets identical across fractions for {} seeds", cfg.seeds.size()));
  o.require(sweep_same, "size-sweep test set identical across fractions per seed and disjoint from training pools");

  const auto target = treedata::generate_synthetic(40, 22, treedata::SynthConfig{.a = 5.0});
  raw_cfg.transfer_portions = {0.0, 0.1, 0.2, 0.3};
  const auto transfer = harness::run_transfer(corpus, "source", target, "target", raw_cfg);
  bool transfer_ok = transfer.size() == 4;
  for (const auto& r : transfer)
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) transfer_ok = transfer_ok && r.seeds[s].truth == transfer[0].seeds[s].truth;
  std::size_t overlaps = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto split = harness::transfer_split(target.size(), raw_cfg.transfer_portions, 0.2, seed);
    const std::set<std::size_t> test(split.test.begin(), split.test.end());
    for (const auto& portion : split.finetune)
      for (auto i : portion) overlaps += test.count(i);
  }
  o.note(fmt::format("transfer: {} overlaps between test slice and fine-tune portions over 20 seeds", overlaps));
  o.require(transfer_ok && overlaps == 0, "transfer test set fixed and disjoint from every fine-tune portion");

  auto one_seed = cfg;
  one_seed.seeds = {0};
  auto poisoned = corpus;
  std::set<std::string> test_ids;
  for (const auto& r : harness::split_dataset(corpus, cfg.train_fraction, 0).test) test_ids.insert(r.id);
  for (auto& r : poisoned)
    if (test_ids.count(r.id)) r.runs_ms = {1e12};
  const auto clean_run = harness::run_standard(corpus, "synthetic", one_seed);
  const auto poisoned_run = harness::run_standard(poisoned, "synthetic", one_seed);
  auto split_a = harness::split_dataset(corpus, cfg.train_fraction, 0), split_b = harness::split_dataset(poisoned, cfg.train_fraction, 0);
  const auto scaler_a = harness::prepare_targets(split_a.train, split_a.test, cfg.scaler);
  const auto scaler_b = harness::prepare_targets(split_b.train, split_b.test, cfg.scaler);
  const bool untouched = clean_run.seeds[0].predicted == poisoned_run.seeds[0].predicted &&
                         clean_run.seeds[0].loss_history == poisoned_run.seeds[0].loss_history &&
                         scaler_a.fitted_min() == scaler_b.fitted_min() && scaler_a.fitted_max() == scaler_b.fitted_max();
  o.note(fmt::format("scaler: {} test records poisoned with 1e12 ms; fitted range [{:.6g}, {:.6g}] vs [{:.6g}, {:.6g}]", test_ids.size(),
                     scaler_a.fitted_min(), scaler_a.fitted_max(), scaler_b.fitted_min(), scaler_b.fitted_max()));
  o.require(untouched, "poisoned test durations change neither the scaler, the training losses nor the predictions");

  const auto base = fs::temp_directory_path() / fmt::format("astreg_acceptance_{}", ::getpid());
  std::string first;
  bool identical = true;
  for (int run = 0; run < 2; ++run) {
    auto c = cfg;
    c.jobs = run == 0 ? 1 : 3;
    const auto dir = base / std::to_string(run);
    harness::emit_results({harness::run_standard(corpus, "synthetic", c)}, dir, cfg.to_json(),
                          {harness::describe_corpus("synthetic", corpus)});
    const std::string csv = slurp(dir / "results.csv");
    if (run == 0) first = csv;
    else identical = csv == first && !csv.empty();
  }
  fs::remove_all(base);
  o.note(fmt::format("results.csv sha1 {} (two runs, 1 and 3 worker threads)", harness::sha1_hex(first)));
  o.require(identical, "identical config and seed give byte-identical results.csv");
  o.summary = fmt::format("sweep {}, transfer {}, scaler isolation {}, results.csv {}", sweep_same ? "ok" : "BAD",
                          transfer_ok && overlaps == 0 ? "ok" : "BAD", untouched ? "ok" : "BAD", identical ? "identical" : "DIFFERS");
  return o;
}

// ---- metrics oracle ----

Outcome metrics_oracle() {
  Outcome o;
  Rng rng(5);
  std::normal_distribution<double> g(0, 1);
  std::vector<double> t(1000), p(1000);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = g(rng);
    p[i] = 0.6 * t[i] + 0.8 * g(rng);
  }
  const auto m = harness::compute_metrics(t, p);
  const double dm = std::abs(m.mse - textbook_mse(t, p)), da = std::abs(m.mae - textbook_mae(t, p)),
               dp = std::abs(m.pearson - textbook_pearson(t, p));
  o.note(fmt::format("1000 pairs: |diff| mse {:.2e} mae {:.2e} pearson {:.2e}", dm, da, dp));
  o.require(std::max({dm, da, dp}) <= 1e-10, "metrics within 1e-10 of textbook formulas");

  const auto perfect = harness::compute_metrics(t, t);
  std::vector<double> neg(t.size());
  std::transform(t.begin(), t.end(), neg.begin(), [](double x) { return -x; });
  const auto negated = harness::compute_metrics(t, neg);
  o.note(fmt::format("perfect: ({}, {}, {:.17g}); negated pearson {:.17g}", perfect.mse, perfect.mae, perfect.pearson, negated.pearson));
  o.require(perfect.mse == 0 && perfect.mae == 0 && std::abs(perfect.pearson - 1.0) <= 1e-10, "perfect predictions give (0, 0, 1)");
  o.require(std::abs(negated.pearson + 1.0) <= 1e-10, "negated predictions give Pearson -1");
  o.summary = fmt::format("max |diff| {:.2e} (limit 1e-10); perfect ({}, {}, {:.12f}); negated {:.12f}", std::max({dm, da, dp}),
                          perfect.mse, perfect.mae, perfect.pearson, negated.pearson);
  return o;
}

// ---- tree statistics ----

Outcome tree_statistics() {
  Outcome o;
  Rng rng(30);
  std::size_t diameter_mismatch = 0;
  double density_err = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = random_size(rng, 1, 30);
    const auto t = random_tree(n, rng);
    const auto s = treedata::compute_tree_stats(t);
    if (s.diameter != floyd_warshall_diameter(t) || s.num_nodes != n || s.num_edges + 1 != n) ++diameter_mismatch;
    density_err = std::max(density_err, std::abs(s.density - tree_density(n)));
  }
  o.note(fmt::format("300 trees of 1..30 nodes: {} diameter/size mismatches, max density error {:.1e}", diameter_mismatch, density_err));
  o.require(diameter_mismatch == 0, "diameter equals Floyd-Warshall");
  o.require(density_err <= 1e-12, "density equals 2|E| / (|V|(|V|-1))");
  o.summary = fmt::format("{} mismatches on 300 trees; density error {:.1e}", diameter_mismatch, density_err);
  return o;
}

Outcome ossbuild_statistics() {
  Outcome o;
  const char* path = std::getenv("ASTREG_OSSBUILD_CORPUS");
  if (!path || !*path) {
    o.status = Status::skip;
    o.summary = "set ASTREG_OSSBUILD_CORPUS to a converted OSSBuild corpus to run";
    return o;
  }
  const auto records = treedata::load_corpus(path);
  const auto avg = treedata::average_tree_stats(records, [](const treedata::SampleRecord& r) -> const treedata::AstTree& { return r.tree; });
  o.note(fmt::format("{} trees: average |V| {:.1f}, diameter {:.2f}", records.size(), avg.avg_nodes, avg.avg_diameter));
  o.require(std::abs(avg.avg_nodes - 875.0) <= 87.5, "average |V| within 10% of 875");
  o.require(std::abs(avg.avg_diameter - 17.0) <= 2.0, "average diameter within 2 of 17");
  o.summary = fmt::format("average |V| {:.1f} (875 +- 87.5), diameter {:.2f} (17 +- 2)", avg.avg_nodes, avg.avg_diameter);
  return o;
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::err);
  const std::vector<Criterion> criteria{
      {"gradient_suite", gradient_suite},
      {"oracle_equivalence", oracle_equivalence},
      {"attention_invariants", attention_invariants},
      {"permutation_invariance", permutation_invariance},
      {"overfit_capacity", overfit_capacity},
      {"signal_recovery", signal_recovery},
      {"protocol_integrity", protocol_integrity},
      {"metrics_oracle", metrics_oracle},
      {"tree_statistics", tree_statistics},
      {"tree_statistics_ossbuild", ossbuild_statistics},
  };
  const std::vector<std::string> filters(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& c : criteria) {
    if (!filters.empty() &&
        std::none_of(filters.begin(), filters.end(), [&](const std::string& f) { return std::string(c.name).find(f) != std::string::npos; }))
      continue;
    const auto start = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.status = Status::fail;
      o.summary = fmt::format("threw: {}", e.what());
    }
    const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::fail ? "FAIL" : "SKIP";
    std::cout << fmt::format("{} {}: {} [{:.1f} s]\n", tag, c.name, o.summary, seconds_since(start));
    for (const auto& d : o.details) std::cout << "    " << d << "\n";
    std::cout.flush();
    if (o.status == Status::fail) ++failures;
  }
  std::cout << (failures ? fmt::format("{} criteria failed\n", failures) : std::string("all criteria passed\n"));
  return failures ? 1 : 0;
}
