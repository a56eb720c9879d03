#include <cmath>
#include <functional>

#include <gtest/gtest.h>

#include "pfl/autograd.hpp"
#include "pfl/gradcheck.hpp"
#include "pfl/param_set.hpp"
#include "pfl/rng.hpp"

namespace pfl {
namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t = Tensor::zeros(r, c);
  for (auto& v : t.data()) v = rng.normal(0.0, 1.0);
  return t;
}

// Central differences of a scalar function of one tensor.
Tensor numeric_grad(const std::function<double(const Tensor&)>& f, Tensor x, double h = 1e-5) {
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// Checks d(build(x))/dx against finite differences.
void expect_op_grad(const std::function<Var(Var)>& build, const Tensor& x0, double tol = 1e-6) {
  Graph g;
  Var x = g.parameter("x", x0);
  const auto grads = g.backward(build(x));
  const Tensor numeric = numeric_grad(
      [&](const Tensor& x1) {
        Graph h;
        return build(h.constant(x1)).value().item();
      },
      x0);
  const Tensor& analytic = grads.at("x");
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    EXPECT_NEAR(analytic[i], numeric[i], tol * std::max(1.0, std::abs(numeric[i]))) << "index " << i;
  }
}

TEST(Backward, IdentityLossHasUnitGradient) {
  Graph g;
  Var x = g.parameter("x", Tensor::scalar(3.5));
  const auto grads = g.backward(x);
  EXPECT_EQ(grads.at("x").item(), 1.0);
}

TEST(Backward, SumOfSquaresGivesTwoX) {
  Rng rng(2);
  const Tensor x0 = random_matrix(3, 4, rng);
  Graph g;
  Var x = g.parameter("x", x0);
  const auto grads = g.backward(ag::sum(ag::mul(x, x)));
  for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_EQ(grads.at("x")[i], 2.0 * x0[i]);
}

TEST(Backward, NonScalarLossThrows) {
  Graph g;
  Var x = g.parameter("x", Tensor::zeros(2, 2));
  EXPECT_THROW(g.backward(x), ShapeError);
}

TEST(Backward, UntouchedParameterGetsZeroGradient) {
  Graph g;
  Var x = g.parameter("x", Tensor::row({1, 2}));
  g.parameter("unused", Tensor::zeros(2, 3));
  const auto grads = g.backward(ag::sum(x));
  ASSERT_TRUE(grads.count("unused"));
  for (double v : grads.at("unused").data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(grads.at("unused").shape(), (std::vector<std::size_t>{2, 3}));
}

TEST(Backward, ConstantsReceiveNoGradient) {
  Graph g;
  Var c = g.constant(Tensor::row({1, 2}));
  Var x = g.parameter("x", Tensor::row({3, 4}));
  const auto grads = g.backward(ag::sum(ag::mul(c, x)));
  EXPECT_EQ(grads.size(), 1u);
  EXPECT_EQ(grads.at("x")[0], 1.0);
  EXPECT_EQ(grads.at("x")[1], 2.0);
}

TEST(OpGradients, MatchFiniteDifferences) {
  Rng rng(9);
  const Tensor w = random_matrix(4, 3, rng);
  const Tensor x0 = random_matrix(2, 4, rng);
  const Tensor gain = random_matrix(1, 4, rng);
  const Tensor bias = random_matrix(1, 4, rng);
  auto weighted = [&](Var v) {
    // Fixed random projection so every output coordinate matters.
    Rng r(42);
    Tensor c = random_matrix(v.value().rows(), v.value().cols(), r);
    return ag::sum(ag::mul(v, v.graph->constant(c)));
  };
  expect_op_grad([&](Var x) { return weighted(ag::matmul(x, x.graph->constant(w))); }, x0);
  expect_op_grad([&](Var x) { return weighted(ag::transpose(x)); }, x0);
  expect_op_grad([&](Var x) { return weighted(ag::gelu(x)); }, x0);
  expect_op_grad([&](Var x) { return weighted(ag::softmax(x, 1)); }, x0);
  expect_op_grad([&](Var x) { return weighted(ag::softmax(x, 0)); }, x0);
  expect_op_grad(
      [&](Var x) {
        return weighted(ag::layer_norm(x, x.graph->constant(gain), x.graph->constant(bias), 1e-5));
      },
      x0);
  expect_op_grad([&](Var x) { return weighted(ag::slice_cols(x, 1, 2)); }, x0);
  expect_op_grad([&](Var x) { return weighted(ag::slice_rows(x, 1, 1)); }, x0);
  const std::size_t idx[] = {1, 0, 1};
  expect_op_grad([&](Var x) { return weighted(ag::gather_rows(x, idx)); }, x0);
  expect_op_grad(
      [&](Var x) {
        const Var parts[] = {x, ag::scale(x, -2.0)};
        return weighted(ag::concat_cols(parts));
      },
      x0);
  expect_op_grad([&](Var x) { return weighted(ag::add_bias(x, x.graph->constant(bias))); }, x0);
  expect_op_grad([&](Var x) { return ag::cross_entropy(ag::slice_rows(x, 0, 1), 2); }, x0);
}

TEST(OpGradients, LayerNormParameterGradients) {
  Rng rng(4);
  const Tensor x0 = random_matrix(3, 5, rng);
  const Tensor gain0 = random_matrix(1, 5, rng);
  const Tensor c = random_matrix(3, 5, rng);
  expect_op_grad(
      [&](Var gain) {
        Graph& g = *gain.graph;
        Var out = ag::layer_norm(g.constant(x0), gain, g.constant(Tensor::zeros(1, 5)), 1e-5);
        return ag::sum(ag::mul(out, g.constant(c)));
      },
      gain0);
}

TEST(LstrGradients, MatchCentralDifferencesOnToyModel) {
  const ModelConfig cfg = toy_model_config();
  const Lstr model(cfg);
  const ParamSet params = model.init(123);
  ASSERT_LE(params.count_values(), 2000u);
  const auto batch = random_samples(cfg, 3, 77);
  GradCheckOptions opt;
  opt.max_coords = 150;
  opt.seed = 5;
  const auto result = check_gradients(model, params, batch, opt);
  EXPECT_GE(result.checked, 100u);
  EXPECT_LE(result.max_rel_error, 1e-3) << result.worst_param << "[" << result.worst_index << "]";
}

ParamSet two_partition_params() {
  ParamSet p;
  p.add("enc.w", Tensor::row({1.0, -2.0}), Partition::kEncoder);
  p.add("dec.w", Tensor::row({0.5, 4.0}), Partition::kDecoder);
  return p;
}

TEST(SgdStep, SingleStep) {
  ParamSet p;
  p.add("p", Tensor::scalar(1.0), Partition::kDecoder);
  const GradMap g{{"p", Tensor::scalar(2.0)}};
  const ParamSet out = sgd_step(p, g, 0.1, PartitionSel::kDecoder);
  EXPECT_DOUBLE_EQ(out.tensor("p").item(), 0.8);
}

TEST(SgdStep, EncoderStepLeavesDecoderBitIdentical) {
  const ParamSet p = two_partition_params();
  const GradMap g{{"enc.w", Tensor::row({1, 1})}, {"dec.w", Tensor::row({1, 1})}};
  const ParamSet enc = sgd_step(p, g, 0.5, PartitionSel::kEncoder);
  EXPECT_TRUE(enc.tensor("dec.w").bit_equal(p.tensor("dec.w")));
  EXPECT_FALSE(enc.tensor("enc.w").bit_equal(p.tensor("enc.w")));
  const ParamSet dec = sgd_step(p, g, 0.5, PartitionSel::kDecoder);
  EXPECT_TRUE(dec.tensor("enc.w").bit_equal(p.tensor("enc.w")));
}

TEST(SgdStep, TwoStepsEqualOneSummedStep) {
  const ParamSet p = two_partition_params();
  const GradMap g{{"enc.w", Tensor::row({0.25, -1.5})}, {"dec.w", Tensor::row({2.0, 0.75})}};
  const ParamSet twice = sgd_step(sgd_step(p, g, 0.125, PartitionSel::kAll), g, 0.125,
                                  PartitionSel::kAll);
  // Hand-applied: p - 2 * lr * g.
  EXPECT_DOUBLE_EQ(twice.tensor("enc.w")[0], 1.0 - 2 * 0.125 * 0.25);
  EXPECT_DOUBLE_EQ(twice.tensor("enc.w")[1], -2.0 - 2 * 0.125 * -1.5);
  EXPECT_DOUBLE_EQ(twice.tensor("dec.w")[0], 0.5 - 2 * 0.125 * 2.0);
  EXPECT_DOUBLE_EQ(twice.tensor("dec.w")[1], 4.0 - 2 * 0.125 * 0.75);
}

TEST(SgdStep, RejectsNonPositiveRate) {
  const ParamSet p = two_partition_params();
  const GradMap g{{"enc.w", Tensor::row({1, 1})}, {"dec.w", Tensor::row({1, 1})}};
  EXPECT_THROW(sgd_step(p, g, 0.0, PartitionSel::kAll), std::invalid_argument);
  EXPECT_THROW(sgd_step(p, g, -1.0, PartitionSel::kAll), std::invalid_argument);
}

}  // namespace
}  // namespace pfl
