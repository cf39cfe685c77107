#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gradient_check.hpp"
#include "seizure/network.hpp"
#include "test_util.hpp"

using namespace seizure;

using testutil::gradient_check;
using testutil::random_epoch;
using testutil::tiny_plan;

TEST(Plan, StandardShapes) {
  const auto p = LayerPlan::standard();
  ASSERT_EQ(p.conv.size(), 6u);
  EXPECT_EQ(p.conv[2].filters, 50u);
  EXPECT_EQ(p.conv[2].kernel_h, 3u);
  EXPECT_EQ(p.conv[2].kernel_w, 3u);
  ASSERT_EQ(p.dense.size(), 2u);
  EXPECT_EQ(p.dense[0].units, 250u);
  EXPECT_EQ(p.dense[1].units, 100u);
  EXPECT_EQ(p.flattened_size(), 400u);
  const auto s = p.conv_shapes();
  EXPECT_EQ(s.back().maps, 20u);
  EXPECT_EQ(s.back().height, 5u);
  EXPECT_EQ(s.back().width, 4u);
  for (std::size_t i = 0; i < p.conv.size(); ++i) {
    const bool pooled = p.conv[i].pool_h * p.conv[i].pool_w > 1;
    EXPECT_EQ(pooled, i % 2 == 1) << i;
    EXPECT_TRUE((p.conv[i].kernel_h == 3 && p.conv[i].kernel_w == 3) ||
                (p.conv[i].kernel_h == 2 && p.conv[i].kernel_w == 2));
  }
}

TEST(Plan, RawModeDisablesScalePooling) {
  const auto p = LayerPlan::standard({22, 1, 256});
  for (const auto& c : p.conv) EXPECT_EQ(c.pool_h, 1u);
  EXPECT_EQ(p.conv_shapes().back().height, 1u);
}

TEST(Plan, PoolingMustDivide) {
  EXPECT_THROW(tiny_plan({{2, 3, 3, 3, 1, 0.0}}, {}), InputError);
}

TEST(Forward, ZeroParametersGiveUniform) {
  const auto plan = tiny_plan({{3, 3, 3, 2, 2, 0.0}}, {{5, 0.0}});
  auto params = initialize_parameters(plan, 1);
  std::fill(params.values.begin(), params.values.end(), 0.0);
  std::mt19937_64 rng(1);
  std::vector<EpochTensor> data;
  for (int i = 0; i < 4; ++i) data.push_back(random_epoch(plan.input, rng));
  Batch batch;
  for (const auto& e : data) batch.push_back(&e);
  const auto r = forward(params, batch, Mode::infer);
  ASSERT_EQ(r.probabilities.size(), 4u);
  for (const auto& p : r.probabilities)
    for (double v : p) EXPECT_EQ(v, 1.0 / 3.0);
}

TEST(Forward, RowsSumToOneAndInferIsDeterministic) {
  const auto plan = tiny_plan({{4, 3, 3, 1, 2, 0.25}, {3, 2, 2, 2, 2, 0.25}}, {{6, 0.5}});
  std::mt19937_64 rng(2);
  std::vector<EpochTensor> data;
  for (int i = 0; i < 5; ++i) data.push_back(random_epoch(plan.input, rng));
  Batch batch;
  for (const auto& e : data) batch.push_back(&e);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto params = initialize_parameters(plan, seed);
    std::normal_distribution<double> g(0.0, 3.0);
    for (auto& v : params.values) v += g(rng);
    for (Mode m : {Mode::train, Mode::infer}) {
      const auto r = forward(params, batch, m, seed);
      for (const auto& p : r.probabilities) EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-6);
    }
    const auto a = forward(params, batch, Mode::infer), b = forward(params, batch, Mode::infer);
    EXPECT_EQ(a.probabilities, b.probabilities);
  }
}

TEST(Forward, ShapeMismatchRejected) {
  const auto plan = tiny_plan({{2, 3, 3, 1, 1, 0.0}}, {});
  const auto params = initialize_parameters(plan, 0);
  std::mt19937_64 rng(0);
  const auto e = random_epoch({2, 4, 9}, rng);
  EXPECT_THROW(forward(params, {&e}, Mode::infer), InputError);
}

TEST(Loss, Examples) {
  EXPECT_EQ(loss({{0.0, 1.0, 0.0}}, {EpochLabel::preictal}), 0.0);
  const Probabilities u{1.0 / 3, 1.0 / 3, 1.0 / 3};
  for (auto l : {EpochLabel::interictal, EpochLabel::preictal, EpochLabel::ictal})
    EXPECT_NEAR(loss({u}, {l}), std::log(3.0), 1e-12);
  EXPECT_NEAR(loss({{1.0, 0.0, 0.0}}, {EpochLabel::ictal}), -std::log(1e-12), 1e-9);
}

TEST(Gradient, ConvLayer3x3) { EXPECT_LT(gradient_check(tiny_plan({{3, 3, 3, 1, 1, 0.0}}, {}), Mode::infer, 1), 1e-4); }

TEST(Gradient, ConvLayer2x2) { EXPECT_LT(gradient_check(tiny_plan({{3, 2, 2, 1, 1, 0.0}}, {}), Mode::infer, 2), 1e-4); }

TEST(Gradient, MaxPool) { EXPECT_LT(gradient_check(tiny_plan({{2, 3, 3, 2, 4, 0.0}}, {}), Mode::infer, 3), 1e-4); }

TEST(Gradient, DenseLayer) { EXPECT_LT(gradient_check(tiny_plan({}, {{7, 0.0}}), Mode::infer, 4), 1e-4); }

TEST(Gradient, OutputLayer) { EXPECT_LT(gradient_check(tiny_plan({}, {}), Mode::infer, 5), 1e-4); }

TEST(Gradient, Dropout) {
  EXPECT_LT(gradient_check(tiny_plan({{3, 3, 3, 1, 2, 0.3}}, {{6, 0.5}}), Mode::train, 6), 1e-4);
}

TEST(Gradient, SmallComposedNetwork) {
  const auto plan = tiny_plan({{4, 3, 3, 1, 2, 0.0}, {3, 2, 2, 2, 2, 0.0}}, {{8, 0.0}});
  ASSERT_LE(ParamLayout(plan).total, 500u);
  EXPECT_LT(gradient_check(plan, Mode::infer, 7), 1e-4);
}

TEST(Gradient, ZeroInputLeavesFirstLayerWeightsAlone) {
  const auto plan = tiny_plan({{3, 3, 3, 1, 2, 0.0}, {2, 2, 2, 1, 1, 0.0}}, {{4, 0.0}});
  auto params = initialize_parameters(plan, 3);
  for (auto& v : params.values) v += 0.05;
  const EpochTensor zero{2, 4, 8, std::vector<float>(64, 0.0f)};
  const auto grad = gradients(params, {&zero}, {EpochLabel::ictal}, Mode::infer);
  const ParamLayout layout(plan);
  for (std::size_t i = layout.conv[0].weights; i < layout.conv[0].biases; ++i) EXPECT_EQ(grad[i], 0.0);
  double bias_mass = 0.0;
  for (std::size_t i = layout.conv[0].biases; i < layout.conv[0].biases + 3; ++i) bias_mass += std::abs(grad[i]);
  EXPECT_GT(bias_mass, 0.0);
}

TEST(Gradient, OutputBiasClosedForm) {
  const auto plan = tiny_plan({{2, 3, 3, 1, 1, 0.0}}, {{5, 0.0}});
  auto params = initialize_parameters(plan, 8);
  std::mt19937_64 rng(8);
  std::vector<EpochTensor> data;
  std::vector<EpochLabel> labels;
  for (int i = 0; i < 6; ++i) {
    data.push_back(random_epoch(plan.input, rng));
    labels.push_back(static_cast<EpochLabel>((i * 2) % 3));
  }
  Batch batch;
  for (const auto& e : data) batch.push_back(&e);
  const auto grad = gradients(params, batch, labels, Mode::infer);
  const auto probs = forward(params, batch, Mode::infer).probabilities;
  const ParamLayout layout(plan);
  for (std::size_t c = 0; c < 3; ++c) {
    double expected = 0.0;
    for (std::size_t i = 0; i < 6; ++i) expected += probs[i][c] - (static_cast<std::size_t>(labels[i]) == c ? 1.0 : 0.0);
    EXPECT_NEAR(grad[layout.output.biases + c], expected / 6.0, 1e-12);
  }
}

TEST(Adadelta, FreshScalarStep) {
  const auto plan = tiny_plan({}, {});
  auto params = initialize_parameters(plan, 0);
  std::vector<double> grad(params.size(), 0.0);
  grad[0] = 1.0;
  const auto before = params.values;
  adadelta_step(params, grad, {0.95, 1e-6});
  EXPECT_NEAR(params.values[0] - before[0], -std::sqrt(1e-6) / std::sqrt(0.05 + 1e-6), 1e-12);
  EXPECT_NEAR(params.values[0] - before[0], -4.47e-3, 1e-5);
  for (std::size_t i = 1; i < params.size(); ++i) EXPECT_EQ(params.values[i], before[i]);
}

TEST(Adadelta, ZeroGradientOnlyDecaysAccumulators) {
  const auto plan = tiny_plan({}, {});
  auto params = initialize_parameters(plan, 0);
  std::fill(params.mean_sq_grad.begin(), params.mean_sq_grad.end(), 2.0);
  std::fill(params.mean_sq_update.begin(), params.mean_sq_update.end(), 0.5);
  const auto before = params.values;
  adadelta_step(params, std::vector<double>(params.size(), 0.0), {0.9, 1e-6});
  EXPECT_EQ(params.values, before);
  for (double v : params.mean_sq_grad) EXPECT_NEAR(v, 1.8, 1e-15);
  for (double v : params.mean_sq_update) EXPECT_NEAR(v, 0.45, 1e-15);
}

TEST(Adadelta, ElementwisePermutation) {
  const auto plan = tiny_plan({}, {{4, 0.0}});
  auto a = initialize_parameters(plan, 1);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  std::vector<double> grad(a.size());
  for (auto& v : grad) v = g(rng);
  for (auto& v : a.mean_sq_grad) v = std::abs(g(rng));
  for (auto& v : a.mean_sq_update) v = std::abs(g(rng));
  auto b = a;
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto permute = [&](const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[perm[i]];
    return out;
  };
  b.values = permute(a.values);
  b.mean_sq_grad = permute(a.mean_sq_grad);
  b.mean_sq_update = permute(a.mean_sq_update);
  adadelta_step(a, grad);
  adadelta_step(b, permute(grad));
  EXPECT_EQ(b.values, permute(a.values));
}

TEST(EarlyStopping, BestPassRule) {
  const std::vector<double> v{1.0, 0.8, 0.9, 0.95};
  EXPECT_EQ(best_pass_index(v), 2u);
  EXPECT_TRUE(should_stop(v, 2));
  EXPECT_FALSE(should_stop({1.0, 0.8, 0.9}, 2));
  EXPECT_EQ(best_pass_index({}), 0u);
}

TEST(GridSearch, ArgminWithTies) {
  EXPECT_EQ(argmin_first({0.7}), 0u);
  EXPECT_EQ(argmin_first({0.7, 0.5}), 1u);
  EXPECT_EQ(argmin_first({0.5, 0.7, 0.5}), 0u);
  EXPECT_THROW(argmin_first({}), InputError);
}

namespace {

// Three well-separated synthetic regimes; 2 channels at 32 Hz with 4 scales.
std::vector<LabeledEpoch> separable_set(std::uint64_t seed, std::size_t per_class) {
  std::vector<LabeledEpoch> out;
  const double hz[3] = {1.5, 6.0, 12.0};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  for (std::size_t i = 0; i < per_class; ++i)
    for (int c = 0; c < 3; ++c) {
      EegRecording r;
      r.id = "s";
      r.sampling_rate = 32;
      r.channel_labels = {"A", "B"};
      for (int ch = 0; ch < 2; ++ch) {
        std::vector<double> x(64);
        const double ph = noise(rng) * 10.0;
        for (std::size_t k = 0; k < x.size(); ++k) x[k] = std::sin(2.0 * kPi * hz[c] * k / 32.0 + ph) + noise(rng);
        r.samples.push_back(std::move(x));
      }
      const auto w = build_wavelet_tensor(r, dyadic_scales(4));
      out.push_back({normalize_epoch(extract_epoch(w, 16, 32)), static_cast<EpochLabel>(c), 0.0, "s"});
    }
  return out;
}

LayerPlan separable_plan(double conv_dropout = 0.1, double dense_dropout = 0.2) {
  return tiny_plan({{6, 3, 3, 1, 2, conv_dropout}, {6, 3, 3, 2, 2, conv_dropout}}, {{16, dense_dropout}}, {2, 4, 32});
}

}  // namespace

TEST(Fit, SeparableSetLearned) {
  const auto train = separable_set(1, 30), val = separable_set(2, 10);
  FitOptions fo;
  fo.batch_size = 9;
  fo.max_passes = 20;
  fo.patience = 20;
  fo.seed = 4;
  const auto r = fit(separable_plan(), train, val, fo);
  EXPECT_GT(accuracy(r.best, train), 0.9);
  EXPECT_GT(accuracy(r.best, val), 0.9);
}

TEST(Fit, TrainingLossNonIncreasingAfterTransient) {
  // dropout off: its per-pass masks alone move the loss by more than the tolerance
  const auto train = separable_set(1, 30), val = separable_set(2, 10);
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    FitOptions fo;
    fo.batch_size = 9;
    fo.max_passes = 30;
    fo.patience = 30;
    fo.seed = seed;
    const auto r = fit(separable_plan(0.0, 0.0), train, val, fo);
    ASSERT_EQ(r.train_loss.size(), 30u);
    for (std::size_t i = 3; i < r.train_loss.size(); ++i)
      EXPECT_LE(r.train_loss[i], r.train_loss[i - 1] + 1e-3) << "seed " << seed << " pass " << i + 1;
  }
}

TEST(Fit, DeterministicHistory) {
  const auto train = separable_set(3, 6), val = separable_set(4, 3);
  FitOptions fo;
  fo.batch_size = 5;
  fo.max_passes = 3;
  fo.seed = 11;
  const auto a = fit(separable_plan(), train, val, fo), b = fit(separable_plan(), train, val, fo);
  EXPECT_EQ(a.train_loss, b.train_loss);
  EXPECT_EQ(a.validation_loss, b.validation_loss);
  EXPECT_EQ(a.best.values, b.best.values);
}

TEST(Features, ShapeDeterminismAndConstantInput) {
  const auto plan = separable_plan();
  const auto params = initialize_parameters(plan, 2);
  const auto set = separable_set(5, 2);
  const auto f1 = extract_features(params, batch_of(set)), f2 = extract_features(params, batch_of(set));
  ASSERT_EQ(f1.size(), set.size());
  for (const auto& row : f1) EXPECT_EQ(row.size(), 16u);
  EXPECT_EQ(f1, f2);
  const EpochTensor zero{2, 4, 32, std::vector<float>(256, 0.0f)};
  const auto z = extract_features(params, {&zero, &zero, &zero});
  EXPECT_EQ(z[0], z[1]);
  EXPECT_EQ(z[1], z[2]);
  const auto full = LayerPlan::standard({2, 4, 32});
  EXPECT_EQ(full.feature_size(), 100u);
}

TEST(Checkpoint, RoundTrip) {
  testutil::TempDir dir("ckpt");
  const auto plan = separable_plan();
  auto params = initialize_parameters(plan, 9);
  params.mean_sq_grad[3] = 0.25;
  save_checkpoint(dir / "m.ckpt", params, "seed = 9\n");
  const auto ck = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(ck.params.values, params.values);
  EXPECT_EQ(ck.params.mean_sq_grad, params.mean_sq_grad);
  EXPECT_EQ(ck.params.plan.describe(), plan.describe());
  EXPECT_EQ(ck.config_echo, "seed = 9\n");
}
