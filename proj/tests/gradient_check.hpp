#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "seizure/network.hpp"

namespace testutil {

using namespace seizure;

inline EpochTensor random_epoch(InputShape s, std::mt19937_64& rng) {
  std::normal_distribution<float> g;
  EpochTensor e{s.channels, s.scales, s.times, std::vector<float>(s.channels * s.scales * s.times)};
  for (auto& v : e.values) v = g(rng);
  return e;
}

inline LayerPlan tiny_plan(std::vector<ConvSpec> conv, std::vector<DenseSpec> dense, InputShape in = {2, 4, 8}) {
  LayerPlan p;
  p.input = in;
  p.conv = std::move(conv);
  p.dense = std::move(dense);
  p.validate();
  return p;
}

// Largest relative disagreement between the analytic gradient and central
// differences with step h, over every parameter.
inline double gradient_check(const LayerPlan& plan, Mode mode, std::uint64_t seed, std::size_t batch_size = 3) {
  std::mt19937_64 rng(seed);
  auto params = initialize_parameters(plan, seed);
  std::normal_distribution<double> g(0.0, 0.1);
  for (auto& v : params.values) v += g(rng);  // nonzero biases too
  std::vector<EpochTensor> data;
  std::vector<EpochLabel> labels;
  for (std::size_t i = 0; i < batch_size; ++i) {
    data.push_back(random_epoch(plan.input, rng));
    labels.push_back(static_cast<EpochLabel>(i % 3));
  }
  Batch batch;
  for (const auto& e : data) batch.push_back(&e);
  const std::uint64_t dropout_seed = 99;
  const auto grad = gradients(params, batch, labels, mode, dropout_seed);
  auto loss_at = [&](const NetworkParameters& p) {
    return loss(forward(p, batch, mode, dropout_seed).probabilities, labels);
  };
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto plus = params, minus = params;
    plus.values[i] += h;
    minus.values[i] -= h;
    const double numeric = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
    const double denom = std::max({std::abs(numeric), std::abs(grad[i]), 1e-7});
    worst = std::max(worst, std::abs(numeric - grad[i]) / denom);
  }
  return worst;
}


}  // namespace testutil
