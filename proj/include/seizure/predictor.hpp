#pragma once

// Oncoming-seizure probability, exponential smoothing, threshold alarms and
// per-recording scoring against a known onset.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "seizure/common.hpp"
#include "seizure/dataset.hpp"
#include "seizure/network.hpp"

namespace seizure {

/// p = p1 + p2 = 1 - p0.
inline double oncoming_probability(double p0, double p1, double p2) {
  for (double v : {p0, p1, p2})
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("class probabilities must lie in [0, 1]");
  if (std::abs(p0 + p1 + p2 - 1.0) > 1e-6) throw InputError("class probabilities must sum to 1");
  return 1.0 - p0;
}

inline double oncoming_probability(const Probabilities& p) { return oncoming_probability(p[0], p[1], p[2]); }

/// s(0) = p(0); s(t) = alpha p(t) + (1 - alpha) s(t - 1).
inline std::vector<double> smooth(const std::vector<double>& p, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InputError("smoothing must lie in (0, 1]");
  if (p.empty()) throw InputError("probability series is empty");
  std::vector<double> s(p.size());
  s[0] = p[0];
  for (std::size_t t = 1; t < p.size(); ++t) s[t] = alpha * p[t] + (1.0 - alpha) * s[t - 1];
  return s;
}

/// Alarm at the first epoch of each run of >= `sustain` epochs with s >= tau,
/// suppressed within `refractory_seconds` of the previous alarm.
inline std::vector<double> detect_alarms(const std::vector<double>& s, const std::vector<double>& times, double tau,
                                         int sustain, double refractory_seconds) {
  if (!(tau > 0.0 && tau < 1.0)) throw InputError("threshold must lie in (0, 1)");
  if (sustain < 1) throw InputError("sustain must be at least one epoch");
  if (s.size() != times.size()) throw InputError("series and time axis differ in length");
  std::vector<double> alarms;
  std::size_t run = 0;
  for (std::size_t t = 0; t < s.size(); ++t) {
    run = s[t] >= tau ? run + 1 : 0;
    if (run != static_cast<std::size_t>(sustain)) continue;
    const double at = times[t + 1 - run];
    if (alarms.empty() || at - alarms.back() >= refractory_seconds) alarms.push_back(at);
  }
  return alarms;
}

struct PredictionTrace {
  std::string recording_id;
  std::vector<double> times;
  std::vector<double> p;
  std::vector<double> s;
  std::vector<double> alarms;
  std::vector<EpochLabel> labels;  // ground truth, empty when unknown
};

struct RecordingScore {
  std::string recording_id;
  bool has_onset = false;
  bool predicted = false;
  double prediction_time = 0.0;  // seconds before onset
  std::vector<double> false_alarm_times;
  double interictal_hours = 0.0;
};

/// Alarms in [onset - 60 l, onset) predict; earlier ones (or any alarm
/// without an onset) are false; alarms at or after onset are ignored.
/// Interictal time is everything before the horizon, since recordings carry
/// no seizure end.
inline RecordingScore score_recording(const std::vector<double>& alarms, std::optional<double> onset,
                                      double preictal_minutes, double duration_seconds) {
  RecordingScore r;
  r.has_onset = onset.has_value();
  if (!onset) {
    r.false_alarm_times = alarms;
    r.interictal_hours = duration_seconds / 3600.0;
    return r;
  }
  const double horizon_start = *onset - 60.0 * preictal_minutes;
  for (double a : alarms) {
    if (a < horizon_start) {
      r.false_alarm_times.push_back(a);
    } else if (a < *onset && !r.predicted) {
      r.predicted = true;
      r.prediction_time = *onset - a;
    }
  }
  r.interictal_hours = std::clamp(horizon_start, 0.0, duration_seconds) / 3600.0;
  return r;
}

/// Runs the classifier over a recording's epochs (time order) and applies
/// smoothing and alarm detection.
inline PredictionTrace predict_recording(const NetworkParameters& params, const std::vector<LabeledEpoch>& epochs,
                                         const PipelineConfig& config) {
  if (epochs.empty()) throw InputError("recording yields no epochs");
  PredictionTrace tr;
  tr.recording_id = epochs.front().recording_id;
  for (const auto& pr : predict_probabilities(params, batch_of(epochs))) tr.p.push_back(oncoming_probability(pr));
  for (const auto& e : epochs) {
    tr.times.push_back(e.start_time);
    tr.labels.push_back(e.label);
  }
  tr.s = smooth(tr.p, config.smoothing);
  tr.alarms = detect_alarms(tr.s, tr.times, config.threshold, config.sustain_epochs, config.refractory_seconds);
  return tr;
}

/// Columns: time_s, p, s, alarm_flag, label.
inline void write_trace_csv(const std::filesystem::path& path, const PredictionTrace& tr) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write trace " + path.string());
  out << "time_s,p,s,alarm_flag,label\n";
  out.precision(10);
  std::size_t next_alarm = 0;
  for (std::size_t t = 0; t < tr.times.size(); ++t) {
    bool alarm = false;
    if (next_alarm < tr.alarms.size() && tr.alarms[next_alarm] == tr.times[t]) {
      alarm = true;
      ++next_alarm;
    }
    out << tr.times[t] << ',' << tr.p[t] << ',' << tr.s[t] << ',' << (alarm ? 1 : 0) << ','
        << (tr.labels.empty() ? -1 : static_cast<int>(tr.labels[t])) << '\n';
  }
}

}  // namespace seizure
