#pragma once

// Aggregate metrics over scored recordings and the analytic baseline of a
// random predictor firing at a fixed false-prediction rate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "seizure/common.hpp"
#include "seizure/dataset.hpp"
#include "seizure/predictor.hpp"

namespace seizure {

inline double sensitivity(const std::vector<RecordingScore>& scores) {
  std::size_t seizures = 0, hits = 0;
  for (const auto& s : scores) {
    if (!s.has_onset) continue;
    ++seizures;
    hits += s.predicted ? 1 : 0;
  }
  if (seizures == 0) throw InputError("no seizure-bearing recordings to score");
  return static_cast<double>(hits) / static_cast<double>(seizures);
}

/// False alarms per interictal hour.
inline double false_prediction_rate(const std::vector<RecordingScore>& scores) {
  double hours = 0.0;
  std::size_t alarms = 0;
  for (const auto& s : scores) {
    hours += s.interictal_hours;
    alarms += s.false_alarm_times.size();
  }
  if (!(hours > 0.0)) throw InputError("total interictal duration must be positive");
  return static_cast<double>(alarms) / hours;
}

/// P(score of a random positive > score of a random negative), ties count 1/2.
inline double roc_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw InputError("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double n_pos = 0.0, n_neg = 0.0, wins = 0.0;
  double neg_below = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double pos_here = 0.0, neg_here = 0.0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (positive[order[j]] ? pos_here : neg_here) += 1.0;
      ++j;
    }
    wins += pos_here * (neg_below + 0.5 * neg_here);
    neg_below += neg_here;
    n_pos += pos_here;
    n_neg += neg_here;
    i = j;
  }
  if (n_pos == 0.0 || n_neg == 0.0) throw InputError("ROC-AUC needs both classes");
  return wins / (n_pos * n_neg);
}

/// Oncoming (preictal or ictal) epochs are positive.
inline std::vector<bool> oncoming_labels(const std::vector<EpochLabel>& labels) {
  std::vector<bool> pos;
  pos.reserve(labels.size());
  for (auto l : labels) pos.push_back(l != EpochLabel::interictal);
  return pos;
}

struct ConfusionCounts {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

inline double mcc(double tp, double tn, double fp, double fn) {
  if (tp < 0 || tn < 0 || fp < 0 || fn < 0) throw InputError("confusion counts must be non-negative");
  const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (den == 0.0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(den);
}

inline double mcc(const ConfusionCounts& c) {
  return mcc(static_cast<double>(c.tp), static_cast<double>(c.tn), static_cast<double>(c.fp),
             static_cast<double>(c.fn));
}

/// Epoch-level binary confusion: predicted positive iff s >= tau.
inline ConfusionCounts binary_confusion(const std::vector<double>& s, const std::vector<EpochLabel>& labels, double tau) {
  if (s.size() != labels.size()) throw InputError("scores and labels differ in length");
  ConfusionCounts c;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool truth = labels[i] != EpochLabel::interictal;
    const bool pred = s[i] >= tau;
    if (truth && pred) ++c.tp;
    else if (truth) ++c.fn;
    else if (pred) ++c.fp;
    else ++c.tn;
  }
  return c;
}

struct RandomPredictorParams {
  double sop_hours = 10.0 / 60.0;
  double fpr_per_hour = 0.0;
  int seizures = 33;  // K
  int independent_features = 100;  // d
  double alpha = 0.05;

  double p() const { return sop_hours * fpr_per_hour; }
};

struct RandomPredictorBounds {
  double sigma_low = 1.0;
  double sigma_up = 1.0;
  bool unbeatable = false;  // no k <= K met a condition
};

namespace detail {

// Q(k) = P(X >= k) for X ~ Binomial(K, P), for k = 0..K+1.
inline std::vector<long double> binomial_tail(int K, long double p) {
  std::vector<long double> pmf(static_cast<std::size_t>(K) + 1, 0.0L);
  if (p == 0.0L) {
    pmf[0] = 1.0L;
  } else {
    const long double lp = std::log(p), lq = std::log1p(-p);
    for (int j = 0; j <= K; ++j)
      pmf[static_cast<std::size_t>(j)] =
          std::exp(std::lgamma(K + 1.0L) - std::lgamma(j + 1.0L) - std::lgamma(K - j + 1.0L) + j * lp + (K - j) * lq);
  }
  std::vector<long double> tail(static_cast<std::size_t>(K) + 2, 0.0L);
  for (int k = K; k >= 0; --k) tail[static_cast<std::size_t>(k)] = tail[static_cast<std::size_t>(k) + 1] + pmf[static_cast<std::size_t>(k)];
  return tail;
}

}  // namespace detail

/// sigma_low = k*/K for the smallest k* with Q(k*) < alpha; sigma_up = k**/K
/// for the smallest k** with 1 - (1 - Q(k**))^d < alpha.
inline RandomPredictorBounds random_predictor_bounds(const RandomPredictorParams& rp) {
  if (rp.seizures < 1) throw InputError("seizure count must be at least 1");
  if (rp.independent_features < 1) throw InputError("feature count must be at least 1");
  if (!(rp.alpha > 0.0 && rp.alpha < 1.0)) throw InputError("significance level must lie in (0, 1)");
  const double p = rp.p();
  if (!(p >= 0.0 && p < 1.0)) throw InputError("SOP x FPr must lie in [0, 1)");
  const int K = rp.seizures;
  const auto tail = detail::binomial_tail(K, static_cast<long double>(p));
  RandomPredictorBounds b;
  int low = -1, up = -1;
  for (int k = 0; k <= K; ++k) {
    const long double q = std::min(1.0L, tail[static_cast<std::size_t>(k)]);
    if (low < 0 && q < rp.alpha) low = k;
    const long double family = q >= 1.0L ? 1.0L : -std::expm1(rp.independent_features * std::log1p(-q));
    if (up < 0 && family < rp.alpha) up = k;
  }
  if (low < 0 || up < 0) {
    b.unbeatable = true;
    return b;
  }
  b.sigma_low = static_cast<double>(low) / K;
  b.sigma_up = static_cast<double>(up) / K;
  return b;
}

struct RecordingEvaluation {
  RecordingScore score;
  std::optional<double> auc;  // absent when only one class is present
  ConfusionCounts confusion;
};

struct EvaluationReport {
  double sensitivity = 0.0;
  double fpr_per_hour = 0.0;
  std::map<std::string, std::optional<double>> auc_per_recording;
  double mcc = 0.0;
  RandomPredictorBounds baseline;
  std::vector<double> prediction_times_s;  // seizure recordings only; <= 0 when missed
};

inline RecordingEvaluation evaluate_trace(const PredictionTrace& tr, std::optional<double> onset,
                                          double duration_seconds, const PipelineConfig& config) {
  RecordingEvaluation e;
  e.score = score_recording(tr.alarms, onset, config.preictal_minutes, duration_seconds);
  e.score.recording_id = tr.recording_id;
  const auto pos = oncoming_labels(tr.labels);
  if (std::find(pos.begin(), pos.end(), true) != pos.end() && std::find(pos.begin(), pos.end(), false) != pos.end())
    e.auc = roc_auc(tr.s, pos);
  e.confusion = binary_confusion(tr.s, tr.labels, config.threshold);
  return e;
}

/// Combines per-recording results. The random baseline uses the observed FPr,
/// the number of seizure recordings as K, and the given SOP, d and alpha.
inline EvaluationReport build_report(const std::vector<RecordingEvaluation>& recs, RandomPredictorParams rp) {
  if (recs.empty()) throw InputError("nothing to evaluate");
  EvaluationReport r;
  std::vector<RecordingScore> scores;
  ConfusionCounts total;
  int seizures = 0;
  for (const auto& e : recs) {
    scores.push_back(e.score);
    total += e.confusion;
    r.auc_per_recording[e.score.recording_id] = e.auc;
    if (e.score.has_onset) {
      ++seizures;
      r.prediction_times_s.push_back(e.score.predicted ? e.score.prediction_time : 0.0);
    }
  }
  r.sensitivity = seizures > 0 ? sensitivity(scores) : 0.0;
  r.fpr_per_hour = false_prediction_rate(scores);
  r.mcc = mcc(total);
  rp.fpr_per_hour = r.fpr_per_hour;
  rp.seizures = std::max(1, seizures);
  if (rp.p() < 1.0)
    r.baseline = random_predictor_bounds(rp);
  else
    r.baseline.unbeatable = true;
  return r;
}

inline nlohmann::ordered_json to_json(const EvaluationReport& r) {
  nlohmann::ordered_json j;
  j["sensitivity"] = r.sensitivity;
  j["fpr_per_hour"] = r.fpr_per_hour;
  auto auc = nlohmann::ordered_json::object();
  for (const auto& [id, v] : r.auc_per_recording) auc[id] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json();
  j["auc_per_recording"] = auc;
  j["mcc"] = r.mcc;
  j["sigma_low"] = r.baseline.sigma_low;
  j["sigma_up"] = r.baseline.sigma_up;
  j["prediction_times_s"] = r.prediction_times_s;
  return j;
}

inline void write_report_json(const std::filesystem::path& path, const EvaluationReport& r) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write report " + path.string());
  out << to_json(r).dump(2) << '\n';
}

/// One row per recording: id, seizure flag, outcome, lead time, false alarms,
/// interictal hours and AUC.
inline void write_recording_csv(const std::filesystem::path& path, const std::vector<RecordingEvaluation>& recs) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "recording_id,has_onset,predicted,prediction_time_s,false_alarms,interictal_hours,roc_auc\n";
  out.precision(10);
  for (const auto& e : recs) {
    const auto& s = e.score;
    out << s.recording_id << ',' << (s.has_onset ? 1 : 0) << ',' << (s.predicted ? 1 : 0) << ','
        << (s.predicted ? s.prediction_time : 0.0) << ',' << s.false_alarm_times.size() << ',' << s.interictal_hours
        << ',';
    if (e.auc) out << *e.auc;
    out << '\n';
  }
}

}  // namespace seizure
