#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "astreg/seqmodels/dual_transformer.hpp"
#include "astreg/seqmodels/tbast.hpp"
#include "astreg/treedata/synth.hpp"
#include "support/test_util.hpp"

using namespace astreg;
using namespace astreg::seqmodels;
using astreg::testing::leaf;
using astreg::testing::node;
using nn::Rng;

namespace {

ModelConfig small_config(ModelKind kind, CrossDirection direction = CrossDirection::bi) {
  auto cfg = ModelConfig::make(kind, Preset::tiny);
  cfg.dim = 16;
  cfg.heads = 2;
  cfg.max_len = 64;
  cfg.cross_direction = direction;
  return cfg;
}

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Real> v(r * c);
  for (auto& x : v) x = u(rng);
  return Tensor::from(r, c, std::move(v));
}

void expect_same(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.rows(), b.rows());
  ASSERT_EQ(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], tol);
}

void expect_rows_sum_to_one(const std::vector<Tensor>& weights) {
  for (const auto& w : weights)
    for (std::size_t i = 0; i < w.rows(); ++i) {
      double s = 0;
      for (std::size_t j = 0; j < w.cols(); ++j) s += w(i, j);
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

std::vector<SampleRecord> corpus(std::size_t n = 8) { return treedata::generate_synthetic(n, 21); }

}  // namespace

// ---- encoder ----

TEST(Encoder, BlockIsResidualThenNorm) {
  Rng rng(1);
  EncoderBlock block("b", 8, 2, 32, rng);
  const Tensor x = random_tensor(5, 8, rng);
  const Tensor mid = block.norm1(nn::add(x, block.attention(x, x)));
  expect_same(block(x, {}, 0.1, RunContext{}), block.norm2(nn::add(mid, block.ffn(mid))), 1e-14);
  // zeroing the feed-forward network leaves O = LN(O')
  for (auto* p : {&block.ffn.inner.weight, &block.ffn.inner.bias, &block.ffn.outer.weight, &block.ffn.outer.bias})
    std::fill(p->values().begin(), p->values().end(), 0);
  expect_same(block(x, {}, 0.1, RunContext{}), block.norm2(mid), 1e-14);
}

TEST(Encoder, DropoutOnlyInTraining) {
  Rng rng(2);
  EncoderStack stack("s", 10, 16, 8, 2, 1, 32, 0.5, rng);
  const std::vector<std::size_t> ids{4, 5, 6};
  const Tensor eval1 = stack(ids, {}, RunContext{});
  nn::Rng drop(3);
  const Tensor train = stack(ids, {}, RunContext{true, &drop});
  expect_same(eval1, stack(ids, {}, RunContext{}), 0.0);
  bool differs = false;
  for (std::size_t i = 0; i < train.size(); ++i) differs = differs || train.values()[i] != eval1.values()[i];
  EXPECT_TRUE(differs);
}

TEST(Encoder, EmptyAndOverlongInputs) {
  Rng rng(3);
  EncoderStack stack("s", 10, 4, 8, 2, 1, 32, 0.1, rng);
  EXPECT_THROW(stack(std::vector<std::size_t>{}, {}, RunContext{}), std::invalid_argument);
  const std::vector<std::size_t> ids{1, 2, 3, 4, 5, 6};
  EXPECT_EQ(stack(ids, {}, RunContext{}).rows(), 4u);
}

// ---- dual transformer encoders ----

TEST(Dual, NlEncodeShapeAndDeterminism) {
  DualTransformer model(small_config(ModelKind::dual));
  const auto records = corpus();
  model.prepare(records, 0);
  const auto in = model.make_input(records[0]);
  const Tensor a = model.nl_encode(in.tokens, {}, RunContext{});
  EXPECT_EQ(a.rows(), std::min<std::size_t>(in.tokens.size(), 64));
  EXPECT_EQ(a.cols(), 16u);
  expect_same(a, model.nl_encode(in.tokens, {}, RunContext{}), 0.0);
  EXPECT_THROW(model.nl_encode({}, {}, RunContext{}), std::invalid_argument);
}

TEST(Dual, AstEncodeAddsClsRow) {
  DualTransformer model(small_config(ModelKind::dual));
  const auto records = corpus();
  model.prepare(records, 0);
  const auto in = model.make_input(records[1]);
  EXPECT_EQ(in.ast.front(), treedata::Vocabulary::kClsId);
  EXPECT_EQ(in.ast.size(), records[1].tree.node_count() + 1);
  EXPECT_EQ(model.ast_encode(in.ast, RunContext{}).rows(), in.ast.size());
  const std::vector<std::size_t> cls_only{treedata::Vocabulary::kClsId};
  EXPECT_THROW(model.ast_encode(cls_only, RunContext{}), std::invalid_argument);
}

TEST(Dual, AstEncodeIsPositionSensitive) {
  DualTransformer model(small_config(ModelKind::dual));
  model.prepare(corpus(), 0);
  Rng rng(4);
  std::uniform_int_distribution<std::size_t> pick(treedata::Vocabulary::kNumSpecials, model.label_vocab().size() - 1);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::size_t> ids{treedata::Vocabulary::kClsId};
    for (int i = 0; i < 6; ++i) ids.push_back(pick(rng));
    while (ids[2] == ids[4]) ids[4] = pick(rng);
    auto swapped = ids;
    std::swap(swapped[2], swapped[4]);
    const Tensor a = model.ast_encode(ids, RunContext{}), b = model.ast_encode(swapped, RunContext{});
    double diff = 0;
    for (std::size_t j = 0; j < 16; ++j) diff += std::abs(a(0, j) - b(0, j));
    EXPECT_GT(diff, 1e-9);
  }
}

// ---- cross attention ----

TEST(Cross, SingleCodeKeyGetsFullWeight) {
  Rng rng(5);
  CrossAttention cross("c", 8, 2, rng);
  const auto out = cross_attend(random_tensor(1, 8, rng), {}, random_tensor(5, 8, rng), {}, cross);
  ASSERT_EQ(out.ast_weights.size(), 2u);
  for (const auto& w : out.ast_weights)
    for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(w(i, 0), 1.0);
}

TEST(Cross, ZeroProjectionsLeaveNormedInputs) {
  Rng rng(6);
  CrossAttention cross("c", 8, 2, rng);
  for (auto* p : {&cross.attention.w_query, &cross.attention.w_key, &cross.attention.w_value, &cross.attention.w_out})
    std::fill(p->values().begin(), p->values().end(), 0);
  const Tensor code = random_tensor(4, 8, rng), ast = random_tensor(6, 8, rng);
  const auto out = cross_attend(code, {}, ast, {}, cross);
  expect_same(out.ast_fused, cross.ast_norm(ast), 1e-14);
  expect_same(out.code_fused, cross.code_norm(code), 1e-14);
}

TEST(Cross, RowsSumToOneWithMasks) {
  Rng rng(7);
  CrossAttention cross("c", 16, 4, rng);
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<std::uint8_t> code_mask{1, 1, 1, 0, 0};
    const auto out = cross_attend(random_tensor(5, 16, rng), code_mask, random_tensor(7, 16, rng), {}, cross);
    expect_rows_sum_to_one(out.ast_weights);
    expect_rows_sum_to_one(out.code_weights);
    for (const auto& w : out.ast_weights)
      for (std::size_t i = 0; i < w.rows(); ++i) EXPECT_EQ(w(i, 3) + w(i, 4), 0.0);
  }
}

TEST(Cross, FullyMaskedKeysRejected) {
  Rng rng(8);
  CrossAttention cross("c", 8, 2, rng);
  const std::vector<std::uint8_t> none{0, 0};
  EXPECT_THROW(cross_attend(random_tensor(2, 8, rng), none, random_tensor(3, 8, rng), {}, cross), std::invalid_argument);
  EXPECT_THROW(cross_attend(random_tensor(2, 8, rng), {}, random_tensor(3, 4, rng), {}, cross), nn::ShapeError);
}

TEST(Cross, DirectionsSelectQuerySides) {
  Rng rng(9);
  CrossAttention cross("c", 8, 2, rng);
  const Tensor code = random_tensor(3, 8, rng), ast = random_tensor(4, 8, rng);
  const auto c2a = cross_attend(code, {}, ast, {}, cross, CrossDirection::code2ast);
  EXPECT_TRUE(c2a.ast_weights.empty());
  EXPECT_EQ(c2a.code_weights.size(), 2u);
  expect_same(c2a.ast_fused, ast, 0.0);
  const auto a2c = cross_attend(code, {}, ast, {}, cross, CrossDirection::ast2code);
  EXPECT_TRUE(a2c.code_weights.empty());
  expect_same(a2c.code_fused, code, 0.0);
}

// ---- dual prediction ----

TEST(Dual, PredictionIsBitwiseDeterministic) {
  DualTransformer model(small_config(ModelKind::dual));
  const auto records = corpus();
  model.prepare(records, 1);
  for (const auto& r : records) EXPECT_EQ(model.predict(r), model.predict(r));
}

TEST(Dual, FiniteOnTwoHundredRecords) {
  DualTransformer model(ModelConfig::make(ModelKind::dual, Preset::tiny));
  const auto records = treedata::generate_synthetic(200, 1);
  model.prepare(records, 0);
  for (const auto& r : records) EXPECT_TRUE(std::isfinite(model.predict(r))) << r.id;
}

TEST(Dual, HeadReadsOnlyRowZero) {
  DualTransformer model(small_config(ModelKind::dual));
  const auto records = corpus();
  model.prepare(records, 2);
  const auto in = model.make_input(records[3]);
  auto fused = model.fuse(in, RunContext{});
  const double base = model.head(model.summary_row(fused)).item();
  // zero every fused row except row 0
  const std::size_t rows = fused.ast_fused.rows();
  std::vector<Real> kept(fused.ast_fused.size(), 0);
  std::copy_n(fused.ast_fused.values().begin(), 16, kept.begin());
  fused.ast_fused = Tensor::from(rows, 16, kept);
  fused.code_fused = Tensor(fused.code_fused.rows(), 16, 0);
  EXPECT_EQ(model.head(model.summary_row(fused)).item(), base);
  EXPECT_EQ(model.predict(records[3]), model.predict_input(in, RunContext{}).item());
}

class DualDirections : public ::testing::TestWithParam<CrossDirection> {};

TEST_P(DualDirections, CodePaddingDoesNotChangePrediction) {
  DualTransformer model(small_config(ModelKind::dual, GetParam()));
  const auto records = corpus();
  model.prepare(records, 3);
  for (const auto& r : records) {
    const auto in = model.make_input(r);
    const double base = model.predict_input(in, RunContext{}).item();
    for (std::size_t pad : {1, 5, 17}) {
      auto padded = in;
      padded.token_mask.assign(in.tokens.size(), 1);
      for (std::size_t k = 0; k < pad && padded.tokens.size() < 64; ++k) {
        padded.tokens.push_back(treedata::Vocabulary::kPadId);
        padded.token_mask.push_back(0);
      }
      EXPECT_NEAR(model.predict_input(padded, RunContext{}).item(), base, 1e-9);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(AllDirections, DualDirections,
                         ::testing::Values(CrossDirection::bi, CrossDirection::code2ast, CrossDirection::ast2code),
                         [](const auto& info) { return to_string(info.param); });

TEST(Dual, PresetShapes) {
  const auto tiny = ModelConfig::make(ModelKind::dual, Preset::tiny);
  EXPECT_EQ(tiny.blocks, 1u);
  EXPECT_EQ(tiny.dim, 64u);
  EXPECT_EQ(tiny.heads, 4u);
  EXPECT_EQ(tiny.max_len, 256u);
  const auto small = ModelConfig::make(ModelKind::dual, Preset::small);
  EXPECT_EQ(small.dim, 768u);
  EXPECT_EQ(small.heads, 8u);
  EXPECT_EQ(small.max_len, 2048u);
  EXPECT_EQ(ModelConfig::make(ModelKind::dual, Preset::large).blocks, 12u);
  auto bad = tiny;
  bad.heads = 5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

// ---- tbast ----

TEST(Tbast, NoStatementsGivesPlainPreorder) {
  const treedata::AstTree t(node("A", {leaf("B", "b"), node("C", {leaf("D")})}));
  EXPECT_EQ(tbast_sequence(t), treedata::linearize_preorder(t));
}

TEST(Tbast, PiecesJoinedWithSeparator) {
  const treedata::AstTree t(node("M", {node("IfStatement", {leaf("X", "x")}), leaf("Y")}));
  const std::vector<std::string> want{"IfStatement", "X", "x", treedata::kSep, "M", treedata::kSplitPlaceholder, "Y"};
  EXPECT_EQ(tbast_sequence(t), want);
}

TEST(Tbast, FiniteOnSyntheticRecords) {
  TbastModel model(ModelConfig::make(ModelKind::tbast, Preset::tiny));
  const auto records = treedata::generate_synthetic(50, 5);
  model.prepare(records, 0);
  for (const auto& r : records) EXPECT_TRUE(std::isfinite(model.predict(r)));
}
