#pragma once

// Recording -> tensor -> epochs -> model -> trace/features, as used by the
// command-line tool.

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "seizure/analysis.hpp"
#include "seizure/config.hpp"
#include "seizure/dataset.hpp"
#include "seizure/ingest.hpp"
#include "seizure/network.hpp"
#include "seizure/predictor.hpp"
#include "seizure/synth.hpp"
#include "seizure/wavelet.hpp"

namespace seizure {

inline EegRecording preprocess(EegRecording rec, const RunConfig& cfg) {
  if (cfg.montage != "none") {
    MontageSpec spec = MontageSpec::standard();
    if (cfg.montage != "standard") {
      const auto names = detail::list_of(cfg.montage);
      spec = MontageSpec::parse(names, names.size());
    }
    rec = apply_montage(rec, spec, {cfg.pad_channels});
  }
  return lowpass_filter(rec, cfg.lowpass_hz);
}

/// Reads an EDF file, taking the onset from a `<stem>.json` sidecar when the
/// file itself carries none.
inline EegRecording load_recording(const std::filesystem::path& path) {
  auto rec = read_edf(path);
  if (!rec.onset_time) rec.onset_time = read_metadata_sidecar(path).onset_time;
  rec.validate();
  return rec;
}

inline WaveletTensor make_tensor(const EegRecording& rec, const RunConfig& cfg) {
  return cfg.pipeline.mode == InputMode::raw ? raw_signal_tensor(rec) : build_wavelet_tensor(rec, dyadic_scales(cfg.scale_count));
}

/// EDF files go through preprocessing and the transform; `.wten` files are
/// read as precomputed tensors.
inline WaveletTensor load_tensor(const std::filesystem::path& path, const RunConfig& cfg) {
  if (path.extension() == ".wten") return read_tensor_cache(path);
  return make_tensor(preprocess(load_recording(path), cfg), cfg);
}

inline std::vector<EpochRef> recording_refs(const WaveletTensor& t, const PipelineConfig& p) {
  return label_epochs(segment(t, p.epoch_seconds, p.overlap), t.onset_time, p.preictal_minutes);
}

inline double epoch_step_seconds(const PipelineConfig& p) { return p.epoch_seconds * (1.0 - p.overlap); }

/// Trains on all but the first fold group, early-stopping on that group.
inline FitResult train_model(const std::vector<const WaveletTensor*>& tensors, const RunConfig& cfg,
                             const PipelineConfig& p) {
  if (tensors.empty()) throw InputError("no input recordings");
  p.validate();
  auto [train, validation] = fold_epochs(tensors, p, 0);
  if (train.empty() || validation.empty()) throw InputError("training split left one side empty");
  FitOptions fo = cfg.fit;
  fo.seed = p.seed;
  return fit(cfg.plan_for(shape_of(train.front().data)), train, validation, fo);
}

/// Classifies every epoch of a recording, extracting one window at a time.
inline PredictionTrace predict_tensor(const NetworkParameters& params, const WaveletTensor& t, const PipelineConfig& p) {
  const auto refs = recording_refs(t, p);
  if (refs.empty()) throw InputError("recording " + t.id + " is shorter than one epoch");
  const ParamLayout layout(params.plan);
  const std::size_t width = epoch_samples(p.epoch_seconds, t.sampling_rate);
  PredictionTrace tr;
  tr.recording_id = t.id;
  for (const auto& r : refs) {
    const auto e = normalize_epoch(extract_epoch(t, r.start_sample, width));
    tr.p.push_back(oncoming_probability(forward_example(params, layout, e, Mode::infer, 0).probabilities));
    tr.times.push_back(r.start_time);
    tr.labels.push_back(r.label);
  }
  tr.s = smooth(tr.p, p.smoothing);
  tr.alarms = detect_alarms(tr.s, tr.times, p.threshold, p.sustain_epochs, p.refractory_seconds);
  return tr;
}

struct FeatureStream {
  std::vector<double> times;
  MatrixXd features;  // epochs x last-hidden-layer width
};

inline FeatureStream feature_stream(const NetworkParameters& params, const WaveletTensor& t, const PipelineConfig& p) {
  const auto refs = recording_refs(t, p);
  if (refs.empty()) throw InputError("recording " + t.id + " is shorter than one epoch");
  const ParamLayout layout(params.plan);
  const std::size_t width = epoch_samples(p.epoch_seconds, t.sampling_rate);
  FeatureStream fs;
  fs.features.resize(static_cast<Eigen::Index>(refs.size()), static_cast<Eigen::Index>(params.plan.feature_size()));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto e = normalize_epoch(extract_epoch(t, refs[i].start_sample, width));
    const auto row = forward_example(params, layout, e, Mode::infer, 0).stage_input.back();
    for (std::size_t j = 0; j < row.size(); ++j) fs.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    fs.times.push_back(refs[i].start_time);
  }
  return fs;
}

struct KlAnalysis {
  std::vector<double> times;
  ChangePointResult result;
  std::optional<double> detection_time;
};

/// Decorrelated features, then the windowed divergence against the baseline.
inline KlAnalysis kl_analysis(const NetworkParameters& params, const WaveletTensor& t, const RunConfig& cfg,
                              const PipelineConfig& p) {
  const auto fs = feature_stream(params, t, p);
  const double step = epoch_step_seconds(p);
  ChangePointOptions opt;
  opt.baseline_epochs = static_cast<Eigen::Index>(std::llround(cfg.kl_baseline_seconds / step));
  opt.window = static_cast<Eigen::Index>(std::llround(cfg.kl_window_seconds / step));
  opt.epoch_step_seconds = step;
  opt.sustain_seconds = cfg.kl_sustain_seconds;
  const auto reduced = decorrelate(fs.features, opt.baseline_epochs, cfg.kl_components);
  KlAnalysis a;
  a.times = fs.times;
  a.result = change_point(reduced, opt);
  if (a.result.detection) a.detection_time = fs.times[static_cast<std::size_t>(*a.result.detection)];
  return a;
}

}  // namespace seizure
