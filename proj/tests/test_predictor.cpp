#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "seizure/predictor.hpp"
#include "test_util.hpp"

using namespace seizure;

namespace {

std::vector<double> seconds(std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i);
  return t;
}

}  // namespace

TEST(Oncoming, Examples) {
  EXPECT_EQ(oncoming_probability(1, 0, 0), 0.0);
  EXPECT_EQ(oncoming_probability(0, 0.4, 0.6), 1.0);
  EXPECT_NEAR(oncoming_probability(0.2, 0.5, 0.3), 0.8, 1e-15);
  EXPECT_THROW(oncoming_probability(0.5, 0.5, 0.5), InputError);
  EXPECT_THROW(oncoming_probability(-0.1, 0.6, 0.5), InputError);
}

TEST(Smooth, Examples) {
  const std::vector<double> p{0.1, 0.9, 0.4, 0.3};
  EXPECT_EQ(smooth(p, 1.0), p);
  for (double v : smooth(std::vector<double>(10, 0.37), 0.3)) EXPECT_NEAR(v, 0.37, 1e-15);
  const auto s = smooth({1.0, 0.0}, 0.7);
  EXPECT_DOUBLE_EQ(s[0], 1.0);
  EXPECT_NEAR(s[1], 0.3, 1e-15);
  EXPECT_THROW(smooth(p, 0.0), InputError);
  EXPECT_THROW(smooth({}, 0.5), InputError);
}

TEST(Smooth, ClosedFormAndBounds) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double alpha = 0.05 + 0.95 * u(rng);
    std::vector<double> p(200);
    for (auto& v : p) v = u(rng);
    const auto s = smooth(p, alpha);
    double lo = p[0], hi = p[0];
    for (std::size_t t = 0; t < p.size(); ++t) {
      double closed = std::pow(1.0 - alpha, static_cast<double>(t)) * p[0];
      for (std::size_t i = 1; i <= t; ++i) closed += alpha * std::pow(1.0 - alpha, static_cast<double>(t - i)) * p[i];
      ASSERT_NEAR(s[t], closed, 1e-12);
      lo = std::min(lo, p[t]);
      hi = std::max(hi, p[t]);
      EXPECT_GE(s[t], lo - 1e-15);
      EXPECT_LE(s[t], hi + 1e-15);
    }
  }
}

TEST(Smooth, Monotone) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(100), q(100);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = u(rng);
    q[i] = std::min(1.0, p[i] + 0.3 * u(rng));
  }
  const auto sp = smooth(p, 0.7), sq = smooth(q, 0.7);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_LE(sp[i], sq[i]);
}

TEST(Alarms, Examples) {
  EXPECT_TRUE(detect_alarms(std::vector<double>(20, 0.5), seconds(20), 0.6, 1, 0).empty());
  const auto a = detect_alarms({0.2, 0.7, 0.7, 0.7}, {10, 11, 12, 13}, 0.6, 3, 600);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0], 11.0);
  EXPECT_TRUE(detect_alarms({0.7, 0.5, 0.7, 0.5, 0.7, 0.5}, seconds(6), 0.6, 2, 0).empty());
}

TEST(Alarms, RefractorySpacing) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(5000);
  for (auto& v : s) v = u(rng);
  const auto s2 = smooth(s, 0.3);
  const auto alarms = detect_alarms(s2, seconds(s2.size()), 0.55, 2, 120);
  ASSERT_FALSE(alarms.empty());
  for (std::size_t i = 1; i < alarms.size(); ++i) EXPECT_GE(alarms[i] - alarms[i - 1], 120.0);
}

TEST(Score, Examples) {
  auto r = score_recording({3300}, 3600.0, 10, 4000);
  EXPECT_TRUE(r.predicted);
  EXPECT_EQ(r.prediction_time, 300.0);
  EXPECT_TRUE(r.false_alarm_times.empty());

  r = score_recording({2700}, 3600.0, 10, 4000);
  EXPECT_FALSE(r.predicted);
  EXPECT_EQ(r.false_alarm_times, std::vector<double>{2700});

  r = score_recording({100, 200}, std::nullopt, 10, 3600);
  EXPECT_FALSE(r.has_onset);
  EXPECT_EQ(r.false_alarm_times.size(), 2u);
  EXPECT_DOUBLE_EQ(r.interictal_hours, 1.0);
}

TEST(Score, HorizonAndPostOnsetRules) {
  const auto r = score_recording({1000, 3000, 3100, 3700}, 3600.0, 10, 4000);
  EXPECT_TRUE(r.predicted);
  EXPECT_EQ(r.prediction_time, 600.0);  // horizon start is inclusive
  EXPECT_EQ(r.false_alarm_times, std::vector<double>{1000});
  EXPECT_DOUBLE_EQ(r.interictal_hours, 3000.0 / 3600.0);
  const auto late = score_recording({3600}, 3600.0, 10, 4000);
  EXPECT_FALSE(late.predicted);
  EXPECT_TRUE(late.false_alarm_times.empty());
}

TEST(Score, PredictedImpliesHorizonBound) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 5000.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> alarms{u(rng), u(rng), u(rng)};
    std::sort(alarms.begin(), alarms.end());
    const double l = 1.0 + static_cast<double>(trial % 20);
    const auto r = score_recording(alarms, 4000.0, l, 5000.0);
    if (r.predicted) {
      EXPECT_GT(r.prediction_time, 0.0);
      EXPECT_LE(r.prediction_time, 60.0 * l);
    }
  }
}

TEST(Trace, CsvColumns) {
  testutil::TempDir dir("trace");
  PredictionTrace tr;
  tr.recording_id = "r";
  tr.times = {0, 1, 2};
  tr.p = {0.1, 0.9, 0.8};
  tr.s = smooth(tr.p, 0.7);
  tr.alarms = {1};
  tr.labels = {EpochLabel::interictal, EpochLabel::preictal, EpochLabel::ictal};
  write_trace_csv(dir / "t.csv", tr);
  std::ifstream in(dir / "t.csv");
  std::string header, row0, row1;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  EXPECT_EQ(header, "time_s,p,s,alarm_flag,label");
  EXPECT_EQ(row0, "0,0.1,0.1,0,0");
  EXPECT_EQ(row1.substr(row1.size() - 4), ",1,1");
}
