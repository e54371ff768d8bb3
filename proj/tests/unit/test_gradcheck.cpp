#include <gtest/gtest.h>

#include "astreg/harness/gradcheck.hpp"

using namespace astreg;

namespace {

// every entry checked, so widths are kept small
ModelConfig reduced(ModelKind kind) {
  auto cfg = ModelConfig::make(kind, Preset::tiny);
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.max_len = 64;
  cfg.gnn_embed = 6;
  cfg.gnn_hidden1 = 5;
  cfg.gnn_hidden2 = 4;
  cfg.tbcnn_embed = 6;
  cfg.tbcnn_conv = 5;
  cfg.code2vec_dim = 6;
  cfg.paths.max_contexts = 20;
  return cfg;
}

}  // namespace

class FullGradCheck : public ::testing::TestWithParam<ModelKind> {};

TEST_P(FullGradCheck, EveryEntryWithinTolerance) {
  nn::GradCheckOptions opt;
  opt.max_entries_per_parameter = 0;
  const auto r = harness::gradcheck_model(reduced(GetParam()), opt, 1);
  EXPECT_EQ(r.result.entries_checked, r.parameters);
  EXPECT_LE(r.result.max_rel_error, 1e-4) << r.result.worst_parameter << "[" << r.result.worst_index
                                          << "] analytic " << r.result.worst_analytic << " numeric "
                                          << r.result.worst_numeric;
}

TEST_P(FullGradCheck, SampledCheckAtPresetWidths) {
  nn::GradCheckOptions opt;
  opt.max_entries_per_parameter = 6;
  opt.seed = 11;
  const auto r = harness::gradcheck_model(ModelConfig::make(GetParam(), Preset::tiny), opt, 2);
  EXPECT_LE(r.result.max_rel_error, 1e-4) << r.result.worst_parameter << "[" << r.result.worst_index << "]";
}

INSTANTIATE_TEST_SUITE_P(AllKinds, FullGradCheck, ::testing::ValuesIn(kAllModelKinds),
                         [](const auto& info) { return to_string(info.param); });

TEST(GradCheckModel, CountsParameters) {
  nn::GradCheckOptions opt;
  opt.max_entries_per_parameter = 1;
  const auto r = harness::gradcheck_model(reduced(ModelKind::gcn), opt, 0);
  EXPECT_GT(r.parameters, 0u);
  EXPECT_LT(r.result.entries_checked, r.parameters);
  EXPECT_EQ(r.kind, ModelKind::gcn);
}
