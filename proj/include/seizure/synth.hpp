#pragma once

// Seeded synthetic scalp EEG with known interictal, preictal and ictal regimes.

#include <fftw3.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "seizure/common.hpp"
#include "seizure/ingest.hpp"
#include "seizure/wavelet.hpp"

namespace seizure {

struct SynthSpec {
  std::string id = "synth";
  std::size_t channels = 22;
  int sampling_rate = 256;
  double duration = 3600.0;             // seconds
  std::optional<double> onset_time;     // absent: interictal-only recording
  std::optional<double> transition_time;  // defaults to onset - 600 s
  std::uint64_t seed = 0;

  // amplitudes in microvolts
  double background_uv = 50.0;    // RMS of the 1/f component
  double noise_low_hz = 0.5;      // 1/f noise carries no power below this
  double alpha_uv = 20.0;         // 10 Hz
  double theta_start_uv = 70.0;   // at the transition
  double theta_end_uv = 140.0;    // at onset
  double theta_hz = 6.0;
  double ictal_uv = 300.0;
  double ictal_hz = 3.0;

  double transition() const { return transition_time.value_or(onset_time.value_or(0.0) - 600.0); }

  void validate() const {
    if (channels == 0) throw InputError("synthetic recording needs at least one channel");
    if (sampling_rate <= 0) throw InputError("sampling rate must be positive");
    if (!(duration > 0.0)) throw InputError("duration must be positive");
    if (onset_time) {
      if (!(*onset_time > 0.0 && *onset_time < duration)) throw InputError("onset must lie inside the recording");
      if (!(transition() >= 0.0 && transition() < *onset_time))
        throw InputError("transition must precede the onset and start at or after 0");
    } else if (transition_time) {
      throw InputError("a transition needs an onset");
    }
  }
};

namespace detail {

// Unit-variance noise with power spectral density proportional to 1/f above
// `low_bin`, zero below it.
inline std::vector<double> pink_noise(std::size_t n, std::size_t low_bin, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  std::vector<double> x(n);
  for (auto& v : x) v = gauss(rng);
  const std::size_t bins = n / 2 + 1;
  fftw_complex* spec = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins));
  fftw_plan fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n), x.data(), spec, FFTW_ESTIMATE);
  fftw_plan inv = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, x.data(), FFTW_ESTIMATE);
  fftw_execute(fwd);
  for (std::size_t k = 0; k < bins; ++k) {
    const double g = k == 0 || k < low_bin ? 0.0 : 1.0 / std::sqrt(static_cast<double>(k));
    spec[k][0] *= g;
    spec[k][1] *= g;
  }
  fftw_execute(inv);
  fftw_destroy_plan(fwd);
  fftw_destroy_plan(inv);
  fftw_free(spec);
  double sq = 0.0;
  for (double v : x) sq += v * v;
  const double rms = std::sqrt(sq / static_cast<double>(n));
  if (rms > 0.0)
    for (auto& v : x) v /= rms;
  return x;
}

}  // namespace detail

/// Channel labels: bipolar derivation names while they last, then CHnn.
inline std::vector<std::string> synth_channel_labels(std::size_t channels) {
  const auto standard = MontageSpec::standard();
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < channels; ++c)
    labels.push_back(c < standard.derivations.size() ? MontageSpec::name(standard.derivations[c])
                                                     : "CH" + std::to_string(c + 1));
  return labels;
}

/// Interictal: 1/f noise plus a 10 Hz rhythm. From the transition a 4-8 Hz
/// component ramps linearly in amplitude up to the onset; from the onset to the
/// end the signal carries high-amplitude 3 Hz activity. Phases are drawn per
/// channel from the seed.
inline EegRecording generate(const SynthSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::size_t>(std::llround(spec.duration * spec.sampling_rate));
  if (n < 2) throw InputError("synthetic recording too short");
  EegRecording rec;
  rec.id = spec.id;
  rec.sampling_rate = spec.sampling_rate;
  rec.onset_time = spec.onset_time;
  rec.channel_labels = synth_channel_labels(spec.channels);
  const double fs = spec.sampling_rate;
  const double two_pi = 2.0 * kPi;
  const auto low_bin = static_cast<std::size_t>(std::ceil(spec.noise_low_hz * static_cast<double>(n) / fs));
  for (std::size_t c = 0; c < spec.channels; ++c) {
    std::mt19937_64 rng(detail::mix_seed(spec.seed, c + 1));
    std::uniform_real_distribution<double> phase(0.0, two_pi);
    const double ph_alpha = phase(rng), ph_theta = phase(rng), ph_ictal = phase(rng);
    auto x = detail::pink_noise(n, low_bin, rng);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / fs;
      double v = spec.background_uv * x[i] + spec.alpha_uv * std::sin(two_pi * 10.0 * t + ph_alpha);
      if (spec.onset_time) {
        const double onset = *spec.onset_time, start = spec.transition();
        if (t >= start && t < onset) {
          const double frac = (t - start) / (onset - start);
          const double amp = spec.theta_start_uv + frac * (spec.theta_end_uv - spec.theta_start_uv);
          v += amp * std::sin(two_pi * spec.theta_hz * t + ph_theta);
        } else if (t >= onset) {
          v += spec.ictal_uv * std::sin(two_pi * spec.ictal_hz * t + ph_ictal);
        }
      }
      x[i] = v;
    }
    rec.samples.push_back(std::move(x));
  }
  return rec;
}

/// JSON sidecar next to a recording: onset_time, transition_time, seed.
inline void write_synth_sidecar(const std::filesystem::path& path, const SynthSpec& spec) {
  nlohmann::ordered_json j;
  j["id"] = spec.id;
  j["onset_time"] = spec.onset_time ? nlohmann::ordered_json(*spec.onset_time) : nlohmann::ordered_json();
  j["transition_time"] = spec.onset_time ? nlohmann::ordered_json(spec.transition()) : nlohmann::ordered_json();
  j["seed"] = spec.seed;
  j["sampling_rate"] = spec.sampling_rate;
  j["channels"] = spec.channels;
  j["duration"] = spec.duration;
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

struct RecordingMetadata {
  std::optional<double> onset_time;
  std::optional<double> transition_time;
};

/// Reads `<stem>.json` beside an EDF file when present.
inline RecordingMetadata read_metadata_sidecar(const std::filesystem::path& recording) {
  RecordingMetadata m;
  auto path = recording;
  path.replace_extension(".json");
  if (!std::filesystem::exists(path)) return m;
  std::ifstream in(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed sidecar " + path.string() + ": " + e.what());
  }
  if (j.contains("onset_time") && j["onset_time"].is_number()) m.onset_time = j["onset_time"].get<double>();
  if (j.contains("transition_time") && j["transition_time"].is_number())
    m.transition_time = j["transition_time"].get<double>();
  return m;
}

/// Writes `<dir>/<id>.edf` and its sidecar; returns the EDF path.
inline std::filesystem::path write_synthetic(const std::filesystem::path& dir, const SynthSpec& spec) {
  std::filesystem::create_directories(dir);
  const auto edf = dir / (spec.id + ".edf");
  write_edf(edf, generate(spec));
  write_synth_sidecar(dir / (spec.id + ".json"), spec);
  return edf;
}

}  // namespace seizure
