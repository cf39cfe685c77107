#pragma once

// Windowing of coefficient tensors into labeled, normalized training epochs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "seizure/common.hpp"
#include "seizure/wavelet.hpp"

namespace seizure {

enum class InputMode { wavelet, raw };

inline const char* to_string(InputMode m) { return m == InputMode::wavelet ? "wavelet" : "raw"; }

struct PipelineConfig {
  double epoch_seconds = 1.0;      // e
  double overlap = 0.0;            // o, fraction of an epoch
  double preictal_minutes = 10.0;  // l
  double smoothing = 0.7;          // alpha
  double threshold = 0.6;          // tau
  int sustain_epochs = 5;          // m
  double refractory_seconds = 600.0;
  int folds = 10;  // k
  std::uint64_t seed = 0;
  InputMode mode = InputMode::wavelet;

  void validate() const {
    if (!(epoch_seconds > 0.0)) throw InputError("epoch length must be positive");
    if (!(overlap >= 0.0 && overlap < 1.0)) throw InputError("overlap must lie in [0, 1)");
    if (!(preictal_minutes > 0.0)) throw InputError("preictal length must be positive");
    if (!(smoothing > 0.0 && smoothing <= 1.0)) throw InputError("smoothing must lie in (0, 1]");
    if (!(threshold > 0.0 && threshold < 1.0)) throw InputError("threshold must lie in (0, 1)");
    if (sustain_epochs < 1) throw InputError("sustain must be at least one epoch");
    if (refractory_seconds < 0.0) throw InputError("refractory period must be non-negative");
    if (folds < 2) throw InputError("fold count must be at least 2");
  }
};

enum class EpochLabel : std::uint8_t { interictal = 0, preictal = 1, ictal = 2 };

inline const char* to_string(EpochLabel l) {
  switch (l) {
    case EpochLabel::interictal: return "interictal";
    case EpochLabel::preictal: return "preictal";
    case EpochLabel::ictal: return "ictal";
  }
  return "?";
}

/// Position of one window inside a tensor, without its data.
struct EpochRef {
  std::string recording_id;
  std::size_t start_sample = 0;
  double start_time = 0.0;
  EpochLabel label = EpochLabel::interictal;
};

/// Channel x scale x time block, the network's input layout.
struct EpochTensor {
  std::size_t channels = 0;
  std::size_t scales = 0;
  std::size_t times = 0;
  std::vector<float> values;

  std::size_t size() const { return values.size(); }
  float& at(std::size_t c, std::size_t s, std::size_t t) { return values[(c * scales + s) * times + t]; }
  float at(std::size_t c, std::size_t s, std::size_t t) const { return values[(c * scales + s) * times + t]; }
};

struct LabeledEpoch {
  EpochTensor data;
  EpochLabel label = EpochLabel::interictal;
  double start_time = 0.0;
  std::string recording_id;
};

inline std::size_t epoch_samples(double epoch_seconds, int sampling_rate) {
  const double n = epoch_seconds * sampling_rate;
  if (n < 1.0 || std::abs(n - std::round(n)) > 1e-9)
    throw InputError("epoch length must span a whole, positive number of samples");
  return static_cast<std::size_t>(std::llround(n));
}

/// Windows of length e starting every e(1-o) seconds; partial tail dropped.
inline std::vector<EpochRef> segment(const WaveletTensor& tensor, double epoch_seconds, double overlap) {
  if (!(overlap >= 0.0 && overlap < 1.0)) throw InputError("overlap must lie in [0, 1)");
  const std::size_t width = epoch_samples(epoch_seconds, tensor.sampling_rate);
  std::vector<EpochRef> refs;
  if (width > tensor.times) return refs;
  const double step = epoch_seconds * (1.0 - overlap) * tensor.sampling_rate;
  const auto count = static_cast<std::size_t>(
      std::floor((static_cast<double>(tensor.times - width)) / step + 1e-9)) + 1;
  refs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto start = static_cast<std::size_t>(std::floor(static_cast<double>(i) * step + 1e-9));
    refs.push_back({tensor.id, start, static_cast<double>(i) * epoch_seconds * (1.0 - overlap),
                    EpochLabel::interictal});
  }
  return refs;
}

inline EpochLabel label_for(double start_time, std::optional<double> onset, double preictal_minutes) {
  if (!onset) return EpochLabel::interictal;
  if (start_time >= *onset) return EpochLabel::ictal;
  if (start_time >= *onset - 60.0 * preictal_minutes) return EpochLabel::preictal;
  return EpochLabel::interictal;
}

/// Labels by window start time relative to the onset.
template <typename Epoch>
std::vector<Epoch> label_epochs(std::vector<Epoch> epochs, std::optional<double> onset,
                                double preictal_minutes) {
  if (!(preictal_minutes > 0.0)) throw InputError("preictal length must be positive");
  for (auto& e : epochs) e.label = label_for(e.start_time, onset, preictal_minutes);
  return epochs;
}

/// Copies one window out of the tensor into channel x scale x time layout.
inline EpochTensor extract_epoch(const WaveletTensor& tensor, std::size_t start_sample, std::size_t width) {
  if (start_sample + width > tensor.times) throw InputError("epoch extends past the end of the tensor");
  EpochTensor e{tensor.channels, tensor.scale_count(), width,
                std::vector<float>(tensor.channels * tensor.scale_count() * width)};
  for (std::size_t t = 0; t < width; ++t)
    for (std::size_t s = 0; s < e.scales; ++s) {
      const float* src = &tensor.coefficients[tensor.index(start_sample + t, s, 0)];
      for (std::size_t c = 0; c < e.channels; ++c) e.at(c, s, t) = src[c];
    }
  return e;
}

/// Per-channel z-score over all (scale, time) entries; population std with a
/// 1e-8 floor.
inline EpochTensor normalize_epoch(EpochTensor e) {
  const std::size_t block = e.scales * e.times;
  for (std::size_t c = 0; c < e.channels; ++c) {
    float* x = e.values.data() + c * block;
    double mean = 0.0;
    for (std::size_t i = 0; i < block; ++i) mean += x[i];
    mean /= static_cast<double>(block);
    double var = 0.0;
    for (std::size_t i = 0; i < block; ++i) var += (x[i] - mean) * (x[i] - mean);
    const double sd = std::max(std::sqrt(var / static_cast<double>(block)), 1e-8);
    for (std::size_t i = 0; i < block; ++i) x[i] = static_cast<float>((x[i] - mean) / sd);
  }
  return e;
}

inline LabeledEpoch normalize_epoch(LabeledEpoch e) {
  e.data = normalize_epoch(std::move(e.data));
  return e;
}

inline std::vector<LabeledEpoch> materialize(const WaveletTensor& tensor, const std::vector<EpochRef>& refs,
                                             double epoch_seconds) {
  const std::size_t width = epoch_samples(epoch_seconds, tensor.sampling_rate);
  std::vector<LabeledEpoch> out;
  out.reserve(refs.size());
  for (const auto& r : refs)
    out.push_back({normalize_epoch(extract_epoch(tensor, r.start_sample, width)), r.label, r.start_time,
                   r.recording_id});
  return out;
}

namespace detail {

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace detail

struct ClassCounts {
  std::size_t interictal = 0, preictal = 0, ictal = 0;
  bool operator==(const ClassCounts&) const = default;
};

template <typename Epoch>
ClassCounts class_counts(const std::vector<Epoch>& epochs) {
  ClassCounts c;
  for (const auto& e : epochs) {
    switch (e.label) {
      case EpochLabel::interictal: ++c.interictal; break;
      case EpochLabel::preictal: ++c.preictal; break;
      case EpochLabel::ictal: ++c.ictal; break;
    }
  }
  return c;
}

/// Undersamples interictal epochs to round((n_preictal + n_ictal) / 2), then
/// shuffles. Minority classes are never touched.
template <typename Epoch>
std::vector<Epoch> balance(std::vector<Epoch> epochs, std::uint64_t seed) {
  const auto counts = class_counts(epochs);
  if (counts.preictal == 0 || counts.ictal == 0)
    throw InputError("cannot balance: preictal and ictal classes must both be present");
  const auto target = static_cast<std::size_t>(
      std::llround(static_cast<double>(counts.preictal + counts.ictal) / 2.0));
  std::mt19937_64 rng(detail::mix_seed(seed, 0xba1a));

  std::vector<std::size_t> interictal;
  for (std::size_t i = 0; i < epochs.size(); ++i)
    if (epochs[i].label == EpochLabel::interictal) interictal.push_back(i);
  std::vector<bool> keep(epochs.size(), true);
  if (interictal.size() > target) {
    detail::seeded_shuffle(interictal, rng);
    for (std::size_t i = target; i < interictal.size(); ++i) keep[interictal[i]] = false;
  }
  std::vector<Epoch> out;
  for (std::size_t i = 0; i < epochs.size(); ++i)
    if (keep[i]) out.push_back(std::move(epochs[i]));
  detail::seeded_shuffle(out, rng);
  return out;
}

/// Recording ids in order of first appearance.
template <typename Epoch>
std::vector<std::string> recording_ids(const std::vector<Epoch>& epochs) {
  std::vector<std::string> ids;
  for (const auto& e : epochs)
    if (std::find(ids.begin(), ids.end(), e.recording_id) == ids.end()) ids.push_back(e.recording_id);
  return ids;
}

/// Seeded partition of recordings into k groups whose sizes differ by at most one.
inline std::vector<std::vector<std::string>> fold_groups(std::vector<std::string> ids, int k, std::uint64_t seed) {
  if (k < 2) throw InputError("fold count must be at least 2");
  if (ids.size() < static_cast<std::size_t>(k))
    throw InputError("fewer recordings (" + std::to_string(ids.size()) + ") than folds (" +
                     std::to_string(k) + ")");
  std::mt19937_64 rng(detail::mix_seed(seed, 0xf01d));
  detail::seeded_shuffle(ids, rng);
  std::vector<std::vector<std::string>> groups(static_cast<std::size_t>(k));
  const std::size_t base = ids.size() / static_cast<std::size_t>(k);
  const std::size_t extra = ids.size() % static_cast<std::size_t>(k);
  std::size_t pos = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::size_t n = base + (g < extra ? 1 : 0);
    groups[g].assign(ids.begin() + static_cast<long>(pos), ids.begin() + static_cast<long>(pos + n));
    pos += n;
  }
  return groups;
}

/// Grouped by recording: no recording contributes to both sides.
template <typename Epoch>
std::pair<std::vector<Epoch>, std::vector<Epoch>> kfold_split(const std::vector<Epoch>& epochs, int k,
                                                              int fold_index, std::uint64_t seed) {
  if (fold_index < 0 || fold_index >= k) throw InputError("fold index out of range");
  const auto groups = fold_groups(recording_ids(epochs), k, seed);
  const auto& held = groups[static_cast<std::size_t>(fold_index)];
  std::pair<std::vector<Epoch>, std::vector<Epoch>> split;
  for (const auto& e : epochs) {
    if (std::find(held.begin(), held.end(), e.recording_id) != held.end())
      split.second.push_back(e);
    else
      split.first.push_back(e);
  }
  return split;
}

// Label sidecar: recording_id,start_time,label

template <typename Epoch>
void write_label_sidecar(const std::filesystem::path& path, const std::vector<Epoch>& epochs) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write label sidecar " + path.string());
  out << "recording_id,start_time,label\n";
  out.precision(10);
  for (const auto& e : epochs)
    out << e.recording_id << ',' << e.start_time << ',' << static_cast<int>(e.label) << '\n';
}

inline std::vector<EpochRef> read_label_sidecar(const std::filesystem::path& path, int sampling_rate) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open label sidecar " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<EpochRef> refs;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 3) throw InputError("malformed label sidecar row: " + line);
    EpochRef r;
    r.recording_id = f[0];
    r.start_time = std::stod(f[1]);
    const int label = std::stoi(f[2]);
    if (label < 0 || label > 2) throw InputError("label out of range in sidecar");
    r.label = static_cast<EpochLabel>(label);
    r.start_sample = static_cast<std::size_t>(std::llround(r.start_time * sampling_rate));
    refs.push_back(r);
  }
  return refs;
}

}  // namespace seizure
