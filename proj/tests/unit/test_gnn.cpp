#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "astreg/gnn/regressor.hpp"
#include "astreg/models.hpp"
#include "astreg/treedata/synth.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace astreg;
using namespace astreg::gnn;
using astreg::testing::random_tree;
using nn::Rng;

using namespace astreg::oracles;

namespace {

GraphBatch tree_graph(const treedata::AstTree& t) {
  return graph_from_tree(t, [](const std::string&) { return std::size_t{0}; });
}

void expect_near(const Tensor& got, const Matrix& want, double tol) {
  ASSERT_EQ(got.rows(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i)
    for (std::size_t j = 0; j < want[i].size(); ++j) EXPECT_NEAR(got(i, j), want[i][j], tol);
}

std::vector<std::size_t> tree_sizes(Rng& rng, int count, std::size_t max_nodes) {
  std::vector<std::size_t> out;
  for (int i = 0; i < count; ++i) out.push_back(std::uniform_int_distribution<std::size_t>(1, max_nodes)(rng));
  return out;
}

}  // namespace

// ---- GCN ----

TEST(Gcn, TwoNodeIdentityExample) {
  const GraphBatch g{{0, 0}, {{0, 1}}, {0, 0}, 1};
  const Tensor eye = Tensor::from(2, 2, {1, 0, 0, 1});
  const Tensor out = gcn_forward(eye, Propagation(g), eye);
  for (Real v : out.values()) EXPECT_NEAR(v, 0.5, 1e-15);
}

TEST(Gcn, ZeroWeightGivesZeros) {
  Rng rng(1);
  const auto g = tree_graph(random_tree(6, rng));
  const Tensor out = gcn_forward(Tensor(3, 2, 0), Propagation(g), to_tensor(random_matrix(6, 3, rng)));
  for (Real v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(Gcn, MatchesDenseOracle) {
  Rng rng(2);
  for (auto n : tree_sizes(rng, 50, 6)) {
    const auto g = tree_graph(random_tree(n, rng));
    const Matrix h = random_matrix(n, 4, rng), w = random_matrix(4, 3, rng);
    expect_near(gcn_forward(to_tensor(w), Propagation(g), to_tensor(h)), dense_gcn(g, h, w), 1e-6);
  }
}

// ---- GAT ----

TEST(Gat, SingleNeighbourWithEqualFeaturesSplitsEvenly) {
  const GraphBatch g{{0, 0}, {{0, 1}}, {0, 0}, 1};
  const Propagation prop(g);
  Tensor alpha;
  Rng rng(3);
  gat_forward(to_tensor(random_matrix(3, 2, rng)), to_tensor(random_matrix(4, 1, rng)), prop, Tensor(2, 3, 0.7),
              Activation::relu, &alpha);
  for (Real a : alpha.values()) EXPECT_NEAR(a, 0.5, 1e-15);
}

TEST(Gat, IdenticalFeaturesGiveUniformNeighbourhoods) {
  Rng rng(4);
  const auto g = tree_graph(random_tree(9, rng));
  const Propagation prop(g);
  Tensor alpha;
  gat_forward(to_tensor(random_matrix(3, 4, rng)), to_tensor(random_matrix(8, 1, rng)), prop, Tensor(9, 3, -0.4),
              Activation::relu, &alpha);
  std::vector<double> size(9, 0.0);
  for (auto d : prop.attn_dst) size[d] += 1;
  for (std::size_t k = 0; k < prop.attn_dst.size(); ++k) EXPECT_NEAR(alpha.values()[k], 1.0 / size[prop.attn_dst[k]], 1e-12);
}

TEST(Gat, StarMatchesPerNodeSoftmaxOracle) {
  Rng rng(5);
  const GraphBatch star{{0, 0, 0, 0, 0}, {{0, 1}, {0, 2}, {0, 3}, {0, 4}}, {0, 0, 0, 0, 0}, 1};
  const Matrix h = random_matrix(5, 3, rng), w = random_matrix(3, 4, rng), a = random_matrix(8, 1, rng);
  const Propagation prop(star);
  Tensor alpha;
  const Tensor out = gat_forward(to_tensor(w), to_tensor(a), prop, to_tensor(h), Activation::relu, &alpha);
  const auto [want_out, want_alpha] = dense_gat(star, h, w, a);
  std::vector<double> row_sum(5, 0.0);
  for (std::size_t k = 0; k < prop.attn_dst.size(); ++k) {
    EXPECT_NEAR(alpha.values()[k], want_alpha[prop.attn_dst[k]][prop.attn_src[k]], 1e-12);
    row_sum[prop.attn_dst[k]] += alpha.values()[k];
  }
  for (double s : row_sum) EXPECT_NEAR(s, 1.0, 1e-6);
  expect_near(out, want_out, 1e-12);
}

TEST(Gat, MatchesDenseOracle) {
  Rng rng(6);
  for (auto n : tree_sizes(rng, 50, 6)) {
    const auto g = tree_graph(random_tree(n, rng));
    const Matrix h = random_matrix(n, 4, rng), w = random_matrix(4, 3, rng), a = random_matrix(6, 1, rng);
    expect_near(gat_forward(to_tensor(w), to_tensor(a), Propagation(g), to_tensor(h)), dense_gat(g, h, w, a).first, 1e-6);
  }
}

TEST(Gat, RejectsWrongAttentionShape) {
  const GraphBatch g{{0, 0}, {{0, 1}}, {0, 0}, 1};
  EXPECT_THROW(gat_forward(Tensor(2, 3), Tensor(5, 1), Propagation(g), Tensor(2, 2)), nn::ShapeError);
}

// ---- GraphSAGE ----

TEST(Sage, MeanOfSelfAndNeighbour) {
  const GraphBatch g{{0, 0}, {{0, 1}}, {0, 0}, 1};
  const Tensor out = sage_forward(Tensor::scalar(1), Propagation(g), Tensor::from(2, 1, {2, 4}), Activation::identity);
  EXPECT_DOUBLE_EQ(out(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(out(1, 0), 3.0);
}

TEST(Sage, ConstantFeaturesGiveConstantOutput) {
  Rng rng(7);
  const auto g = tree_graph(random_tree(8, rng));
  const Matrix w = random_matrix(2, 3, rng);
  const Tensor out = sage_forward(to_tensor(w), Propagation(g), Tensor(8, 2, 0.25));
  const Matrix want = relu(matmul({{0.25, 0.25}}, w));
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(out(i, j), want[0][j], 1e-12);
}

TEST(Sage, MatchesPerNodeMeanOracle) {
  Rng rng(8);
  for (auto n : tree_sizes(rng, 50, 6)) {
    const auto g = tree_graph(random_tree(n, rng));
    const Matrix h = random_matrix(n, 3, rng), w = random_matrix(3, 2, rng);
    expect_near(sage_forward(to_tensor(w), Propagation(g), to_tensor(h)), dense_sage(g, h, w), 1e-6);
  }
}

// ---- GIN ----

TEST(Gin, EpsilonZeroIdentityHook) {
  const GraphBatch g{{0, 0}, {{0, 1}}, {0, 0}, 1};
  const Tensor h = Tensor::from(2, 2, {1, 2, 10, 20});
  const Tensor out = gin_forward(Tensor::scalar(0), [](const Tensor& x) { return x; }, Propagation(g), h);
  EXPECT_DOUBLE_EQ(out(0, 0), 11.0);
  EXPECT_DOUBLE_EQ(out(1, 1), 22.0);
}

TEST(Gin, EpsilonOneLeafNode) {
  const GraphBatch g{{0, 0}, {{0, 1}}, {0, 0}, 1};
  const Tensor h = Tensor::from(2, 1, {3, 5});
  const Tensor out = gin_forward(Tensor::scalar(1), [](const Tensor& x) { return x; }, Propagation(g), h);
  EXPECT_DOUBLE_EQ(out(1, 0), 2 * 5.0 + 3.0);
}

TEST(Gin, MatchesSumOracleWithMlp) {
  Rng rng(9);
  for (auto n : tree_sizes(rng, 50, 6)) {
    const auto g = tree_graph(random_tree(n, rng));
    const Matrix h = random_matrix(n, 3, rng);
    const Matrix w1 = random_matrix(3, 4, rng), w2 = random_matrix(4, 2, rng);
    const double eps = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
    const Tensor tw1 = to_tensor(w1), tw2 = to_tensor(w2);
    const Tensor out = gin_forward(Tensor::scalar(eps), [&](const Tensor& x) { return nn::matmul(nn::relu(nn::matmul(x, tw1)), tw2); },
                                   Propagation(g), to_tensor(h));
    expect_near(out, dense_gin(g, h, eps, w1, w2), 1e-6);
  }
}

// ---- batches ----

TEST(GraphBatchTest, ValidateRejectsNonTrees) {
  GraphBatch g{{0, 0, 0}, {{0, 1}}, {0, 0, 0}, 1};
  EXPECT_THROW(g.validate(), std::invalid_argument);
  GraphBatch cross{{0, 0}, {{0, 1}}, {0, 1}, 2};
  EXPECT_THROW(cross.validate(), std::invalid_argument);
  GraphBatch range{{0, 0}, {{0, 5}}, {0, 0}, 1};
  EXPECT_THROW(range.validate(), std::invalid_argument);
}

// ---- regressor ----

namespace {

std::unique_ptr<GraphRegressor> prepared(ModelKind kind, const std::vector<SampleRecord>& records) {
  auto model = std::make_unique<GraphRegressor>(ModelConfig::make(kind, Preset::tiny));
  model->prepare(records, 3);
  // nontrivial running statistics
  ParameterList buffers = model->buffers();
  Rng rng(1);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (auto& b : buffers)
    for (auto& v : b.values()) v = static_cast<Real>(u(rng));
  return model;
}


}  // namespace

class GraphRegressorKinds : public ::testing::TestWithParam<ModelKind> {};

TEST_P(GraphRegressorKinds, PermutationInvariant) {
  const auto records = treedata::generate_synthetic(6, 4);
  auto model = prepared(GetParam(), records);
  Rng rng(12);
  for (const auto& r : records) {
    const auto g = encoded_as<GraphEncoded>(model->encode(r).get()).graph;
    std::vector<std::size_t> perm(g.num_nodes());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const double base = model->forward_graphs(g, RunContext{}).item();
    const double moved = model->forward_graphs(permute_graph(g, perm), RunContext{}).item();
    EXPECT_NEAR(moved, base, 1e-6);
  }
}

TEST_P(GraphRegressorKinds, DuplicatedGraphsInOneBatchAgree) {
  const auto records = treedata::generate_synthetic(4, 6);
  auto model = prepared(GetParam(), records);
  const auto e0 = model->encode(records[0]);
  const auto e1 = model->encode(records[1]);
  const Encoded* batch[] = {e0.get(), e1.get(), e0.get()};
  const Tensor out = model->forward(batch, RunContext{});
  ASSERT_EQ(out.rows(), 3u);
  EXPECT_EQ(out(0, 0), out(2, 0));
  EXPECT_NEAR(out(0, 0), model->predict(records[0]), 1e-12);
  EXPECT_NEAR(out(1, 0), model->predict(records[1]), 1e-12);
}

TEST_P(GraphRegressorKinds, HeadShapesFollowPooling) {
  const auto records = treedata::generate_synthetic(4, 6);
  auto model = prepared(GetParam(), records);
  const auto params = model->parameters();
  const auto head = std::find_if(params.begin(), params.end(), [](const auto& p) { return p.name() == "head.hidden.weight"; });
  ASSERT_NE(head, params.end());
  EXPECT_EQ(head->rows(), 60u);
  EXPECT_EQ(head->cols(), 30u);
}

INSTANTIATE_TEST_SUITE_P(AllKinds, GraphRegressorKinds,
                         ::testing::Values(ModelKind::gcn, ModelKind::gat, ModelKind::sage, ModelKind::gin),
                         [](const auto& info) { return to_string(info.param); });

TEST(GraphRegressorTest, OneHotFeaturesOption) {
  auto cfg = ModelConfig::make(ModelKind::gcn, Preset::tiny);
  cfg.gnn_one_hot = true;
  GraphRegressor model(cfg);
  const auto records = treedata::generate_synthetic(4, 1);
  model.prepare(records, 0);
  EXPECT_TRUE(std::isfinite(model.predict(records[0])));
  for (const auto& p : model.parameters()) EXPECT_NE(p.name(), "node_embedding");
}
