#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <random>

#include "seizure/wavelet.hpp"
#include "test_util.hpp"

using namespace seizure;

namespace {

std::vector<double> random_signal(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> x(n);
  for (auto& v : x) v = g(rng);
  return x;
}

// Same-length zero-padded convolution, evaluated term by term.
std::vector<double> direct_convolution(const std::vector<double>& x, const std::vector<double>& k) {
  const auto half = static_cast<long>(k.size() / 2);
  const auto n = static_cast<long>(x.size());
  std::vector<double> y(x.size(), 0.0);
  for (long t = 0; t < n; ++t) {
    double acc = 0.0;
    for (long j = -half; j <= half; ++j) {
      const long i = t - j;
      if (i >= 0 && i < n) acc += x[static_cast<std::size_t>(i)] * k[static_cast<std::size_t>(j + half)];
    }
    y[static_cast<std::size_t>(t)] = acc;
  }
  return y;
}

EegRecording recording_of(std::vector<std::vector<double>> channels, int fs) {
  EegRecording r;
  r.id = "w";
  r.sampling_rate = fs;
  for (std::size_t c = 0; c < channels.size(); ++c) r.channel_labels.push_back("C" + std::to_string(c));
  r.samples = std::move(channels);
  return r;
}

}  // namespace

TEST(MexicanHat, PeakAtScaleOne) {
  const auto k = mexican_hat_kernel(1.0, 5);
  EXPECT_NEAR(k[5], 2.0 / (std::sqrt(3.0) * std::pow(kPi, 0.25)), 1e-12);
  EXPECT_NEAR(k[5], 0.8673, 1e-4);
}

TEST(MexicanHat, EvenAndZeroMean) {
  for (double a : {1.0, 3.0, 8.0, 64.0}) {
    const auto support = default_support(a);
    const auto k = mexican_hat_kernel(a, support);
    for (std::size_t n = 0; n <= support; ++n) EXPECT_DOUBLE_EQ(k[support + n], k[support - n]);
  }
  const auto k = mexican_hat_kernel(8.0, 80);
  double sum = 0.0, peak = 0.0;
  for (double v : k) {
    sum += v;
    peak = std::max(peak, std::abs(v));
  }
  EXPECT_LT(std::abs(sum), 1e-6 * peak);
}

TEST(MexicanHat, RejectsBadArguments) {
  EXPECT_THROW(mexican_hat_kernel(0.0, 10), InputError);
  EXPECT_THROW(mexican_hat_kernel(-1.0, 10), InputError);
  EXPECT_THROW(mexican_hat_kernel(4.0, 19), InputError);
}

TEST(Cwt, MatchesDirectConvolution) {
  const auto x = random_signal(700, 4);
  const auto scales = dyadic_scales(7);
  const auto m = cwt_channel(x, scales);
  for (std::size_t j = 0; j < scales.size(); ++j) {
    const auto ref = direct_convolution(x, mexican_hat_kernel(scales[j], default_support(scales[j])));
    for (std::size_t t = 0; t < x.size(); ++t) ASSERT_NEAR(m.at(t, j), ref[t], 1e-9) << "scale " << scales[j];
  }
}

TEST(Cwt, ZeroAndLinearity) {
  const auto scales = dyadic_scales(5);
  const auto zero = cwt_channel(std::vector<double>(200, 0.0), scales);
  for (double v : zero.values) EXPECT_EQ(v, 0.0);
  auto x = random_signal(300, 8);
  const auto base = cwt_channel(x, scales);
  for (auto& v : x) v *= -3.5;
  const auto scaled = cwt_channel(x, scales);
  for (std::size_t i = 0; i < base.values.size(); ++i) EXPECT_NEAR(scaled.values[i], -3.5 * base.values[i], 1e-9);
  EXPECT_THROW(cwt_channel(x, {}), InputError);
}

TEST(Cwt, ShiftMovesColumns) {
  const auto scales = dyadic_scales(4);
  const std::size_t n = 600, s = 17;
  const auto x = random_signal(n, 2);
  std::vector<double> shifted(n, 0.0);
  for (std::size_t i = 0; i + s < n; ++i) shifted[i + s] = x[i];
  const auto a = cwt_channel(x, scales), b = cwt_channel(shifted, scales);
  for (std::size_t j = 0; j < scales.size(); ++j)
    for (std::size_t t = 100; t < 450; ++t) EXPECT_NEAR(b.at(t + s, j), a.at(t, j), 1e-9);
}

TEST(Cwt, SinusoidPeaksAtMatchingScale) {
  const double fs = 256.0, f0 = 8.0;
  std::vector<double> x(4096);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2.0 * kPi * f0 * static_cast<double>(i) / fs);
  const auto scales = dyadic_scales(10);
  const auto m = cwt_channel(x, scales);

  std::size_t best_energy = 0, best_peak = 0;
  double best_mean = -1.0, best_dist = 1e300;
  for (std::size_t j = 0; j < scales.size(); ++j) {
    double mean = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) mean += std::abs(m.at(t, j));
    mean /= static_cast<double>(x.size());
    if (mean > best_mean) best_mean = mean, best_energy = j;
    // oracle: frequency of maximal kernel response on a fine grid
    const auto k = mexican_hat_kernel(scales[j], default_support(scales[j]));
    double peak_f = 0.0, peak_mag = -1.0;
    for (double f = 0.05; f < fs / 2; f += 0.05) {
      std::complex<double> h = 0.0;
      for (std::size_t n = 0; n < k.size(); ++n) h += k[n] * std::polar(1.0, -2.0 * kPi * f * static_cast<double>(n) / fs);
      if (std::abs(h) > peak_mag) peak_mag = std::abs(h), peak_f = f;
    }
    const double dist = std::abs(std::log(peak_f / f0));
    if (dist < best_dist) best_dist = dist, best_peak = j;
  }
  EXPECT_EQ(best_energy, best_peak);
}

TEST(Tensor, ShapeAndChannelSlices) {
  const int fs = 256;
  std::vector<std::vector<double>> ch;
  for (int c = 0; c < 22; ++c) ch.push_back(random_signal(60 * fs, 100 + c));
  const auto rec = recording_of(ch, fs);
  const auto w = build_wavelet_tensor(rec, dyadic_scales());
  EXPECT_EQ(w.times, 15360u);
  EXPECT_EQ(w.scale_count(), 10u);
  EXPECT_EQ(w.channels, 22u);
  EXPECT_EQ(w.coefficients.size(), 15360u * 10u * 22u);
  const auto m = cwt_channel(ch[5], dyadic_scales());
  for (std::size_t t = 0; t < w.times; t += 97)
    for (std::size_t s = 0; s < 10; ++s) EXPECT_FLOAT_EQ(w.at(t, s, 5), static_cast<float>(m.at(t, s)));
}

TEST(Tensor, ChannelPermutationCommutes) {
  const auto a = random_signal(500, 1), b = random_signal(500, 2), c = random_signal(500, 3);
  const auto w1 = build_wavelet_tensor(recording_of({a, b, c}, 100), dyadic_scales(5));
  const auto w2 = build_wavelet_tensor(recording_of({c, a, b}, 100), dyadic_scales(5));
  const std::size_t perm[3] = {1, 2, 0};  // channel i of w1 sits at perm[i] in w2
  for (std::size_t t = 0; t < 500; ++t)
    for (std::size_t s = 0; s < 5; ++s)
      for (std::size_t ch = 0; ch < 3; ++ch) ASSERT_EQ(w1.at(t, s, ch), w2.at(t, s, perm[ch]));
}

TEST(Tensor, ScalesMustIncrease) {
  const auto rec = recording_of({random_signal(100, 1)}, 50);
  EXPECT_THROW(build_wavelet_tensor(rec, {2.0, 1.0}), InputError);
  EXPECT_THROW(build_wavelet_tensor(rec, {}), InputError);
}

TEST(Tensor, CacheRoundTrip) {
  testutil::TempDir dir("wten");
  auto rec = recording_of({random_signal(300, 1), random_signal(300, 2)}, 100);
  rec.onset_time = 2.5;
  const auto w = build_wavelet_tensor(rec, dyadic_scales(4));
  write_tensor_cache(dir / "w.wten", w);
  const auto back = read_tensor_cache(dir / "w.wten");
  EXPECT_EQ(back.coefficients, w.coefficients);
  EXPECT_EQ(back.scales, w.scales);
  EXPECT_EQ(back.sampling_rate, 100);
  ASSERT_TRUE(back.onset_time.has_value());
  EXPECT_DOUBLE_EQ(*back.onset_time, 2.5);
}
