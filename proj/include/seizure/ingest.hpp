#pragma once

// EDF reading/writing, bipolar montage and zero-phase low-pass filtering.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "seizure/common.hpp"

namespace seizure {

/// Multichannel scalp recording, channel-major, in microvolts.
struct EegRecording {
  std::string id;
  std::vector<std::vector<double>> samples;  // [channel][time]
  int sampling_rate = 0;
  std::vector<std::string> channel_labels;
  std::optional<double> onset_time;  // seconds from start

  std::size_t channel_count() const { return samples.size(); }
  std::size_t sample_count() const { return samples.empty() ? 0 : samples.front().size(); }
  double duration() const {
    return sampling_rate > 0 ? static_cast<double>(sample_count()) / sampling_rate : 0.0;
  }

  void validate() const {
    if (sampling_rate <= 0) throw InputError("sampling rate must be positive");
    if (samples.empty()) throw InputError("recording has no channels");
    if (channel_labels.size() != samples.size())
      throw InputError("channel label count does not match channel count");
    for (const auto& ch : samples)
      if (ch.size() != samples.front().size())
        throw InputError("channels have differing sample counts");
    if (onset_time && (*onset_time < 0.0 || *onset_time >= duration()))
      throw InputError("onset time outside recording");
  }
};

// ---------------------------------------------------------------------------
// EDF
// ---------------------------------------------------------------------------

struct EdfSignalHeader {
  std::string label;
  std::string transducer;
  std::string physical_dimension = "uV";
  double physical_min = -1.0;
  double physical_max = 1.0;
  int digital_min = -32768;
  int digital_max = 32767;
  std::string prefiltering;
  int samples_per_record = 0;
  std::string reserved;

  double gain() const {
    return (physical_max - physical_min) / static_cast<double>(digital_max - digital_min);
  }
  double to_physical(std::int16_t digital) const {
    return physical_min + (static_cast<double>(digital) - digital_min) * gain();
  }
  std::int16_t to_digital(double physical) const {
    const double d = std::round((physical - physical_min) / gain()) + digital_min;
    return static_cast<std::int16_t>(
        std::clamp(d, static_cast<double>(digital_min), static_cast<double>(digital_max)));
  }
};

struct EdfHeader {
  std::string version = "0";
  std::string patient_id;
  std::string recording_id;
  std::string start_date = "01.01.00";
  std::string start_time = "00.00.00";
  int header_bytes = 0;
  std::string reserved;
  long record_count = 0;
  double record_duration = 1.0;
  std::vector<EdfSignalHeader> signals;
};

/// Decoded EDF content before unit conversion; annotation signals removed.
struct EdfFile {
  EdfHeader header;
  std::vector<std::vector<std::int16_t>> digital;  // [signal][sample]
};

struct EdfReadOptions {
  /// Linearly interpolate signals to the highest per-signal rate instead of
  /// rejecting files with inconsistent rates.
  bool resample_to_common_rate = false;
};

namespace detail {

inline constexpr const char* kEdfAnnotationsLabel = "EDF Annotations";

inline std::string edf_field(const std::string& raw) { return trim(raw); }

inline long parse_edf_int(const std::string& raw, const char* name) {
  const std::string s = trim(raw);
  long value = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (s.empty() || ec != std::errc() || ptr != end)
    throw InputError(std::string("malformed header: field '") + name + "' is not an integer");
  return value;
}

inline double parse_edf_double(const std::string& raw, const char* name) {
  std::string s = trim(raw);
  if (!s.empty() && s.front() == '+') s.erase(0, 1);
  double value = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (s.empty() || ec != std::errc() || ptr != end)
    throw InputError(std::string("malformed header: field '") + name + "' is not numeric");
  return value;
}

inline std::string pad_field(std::string s, std::size_t width) {
  if (s.size() > width) s.resize(width);
  s.append(width - s.size(), ' ');
  return s;
}

// Shortest fixed-point text of at most 8 chars that bounds `v` from the
// requested side.
inline std::string edf_bound_text(double v, bool upper) {
  for (int decimals = 6; decimals >= 0; --decimals) {
    const double scale = std::pow(10.0, decimals);
    const double rounded = upper ? std::ceil(v * scale) / scale : std::floor(v * scale) / scale;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, rounded == 0.0 ? 0.0 : rounded);
    if (std::string s = buf; s.size() <= 8) return s;
  }
  throw InputError("physical range too large for an EDF header");
}

// Nearest 8-char text; exact for values produced by edf_bound_text.
inline std::string edf_number_text(double v) {
  for (int decimals = 6; decimals >= 0; --decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    if (std::string s = buf; s.size() <= 8) return s;
  }
  throw InputError("value too large for an EDF header field");
}

}  // namespace detail

/// Parses an EDF file. Annotation signals are dropped.
inline EdfFile read_edf_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open EDF file " + path.string());
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<long long>(in.tellg());
  in.seekg(0);

  auto take = [&](std::size_t n) {
    std::string s(n, ' ');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw InputError("malformed header: file too short");
    return s;
  };

  EdfFile file;
  EdfHeader& h = file.header;
  h.version = detail::edf_field(take(8));
  h.patient_id = detail::edf_field(take(80));
  h.recording_id = detail::edf_field(take(80));
  h.start_date = detail::edf_field(take(8));
  h.start_time = detail::edf_field(take(8));
  h.header_bytes = static_cast<int>(detail::parse_edf_int(take(8), "header bytes"));
  h.reserved = detail::edf_field(take(44));
  h.record_count = detail::parse_edf_int(take(8), "number of data records");
  h.record_duration = detail::parse_edf_double(take(8), "duration of a data record");
  const long ns = detail::parse_edf_int(take(4), "number of signals");
  if (ns < 1) throw InputError("malformed header: no signals declared");
  if (h.header_bytes != 256 * (ns + 1))
    throw InputError("malformed header: byte count " + std::to_string(h.header_bytes) +
                     " disagrees with " + std::to_string(ns) + " signals");
  if (h.record_duration <= 0.0)
    throw InputError("malformed header: non-positive record duration");

  std::vector<EdfSignalHeader> sig(static_cast<std::size_t>(ns));
  for (auto& s : sig) s.label = detail::edf_field(take(16));
  for (auto& s : sig) s.transducer = detail::edf_field(take(80));
  for (auto& s : sig) s.physical_dimension = detail::edf_field(take(8));
  for (auto& s : sig) s.physical_min = detail::parse_edf_double(take(8), "physical minimum");
  for (auto& s : sig) s.physical_max = detail::parse_edf_double(take(8), "physical maximum");
  for (auto& s : sig)
    s.digital_min = static_cast<int>(detail::parse_edf_int(take(8), "digital minimum"));
  for (auto& s : sig)
    s.digital_max = static_cast<int>(detail::parse_edf_int(take(8), "digital maximum"));
  for (auto& s : sig) s.prefiltering = detail::edf_field(take(80));
  for (auto& s : sig)
    s.samples_per_record = static_cast<int>(detail::parse_edf_int(take(8), "samples per record"));
  for (auto& s : sig) s.reserved = detail::edf_field(take(32));

  long long record_samples = 0;
  for (const auto& s : sig) {
    if (s.samples_per_record <= 0)
      throw InputError("malformed header: non-positive samples per record");
    if (s.digital_max <= s.digital_min)
      throw InputError("malformed header: digital maximum must exceed digital minimum for " +
                       s.label);
    record_samples += s.samples_per_record;
  }
  const long long record_bytes = 2 * record_samples;
  const long long data_bytes = file_size - h.header_bytes;
  if (h.record_count < 0) h.record_count = static_cast<long>(data_bytes / record_bytes);
  if (data_bytes < record_bytes * h.record_count)
    throw InputError("truncated data section: expected " +
                     std::to_string(record_bytes * h.record_count) + " bytes, found " +
                     std::to_string(data_bytes));

  std::vector<std::vector<std::int16_t>> data(sig.size());
  for (std::size_t i = 0; i < sig.size(); ++i)
    data[i].reserve(static_cast<std::size_t>(sig[i].samples_per_record) *
                    static_cast<std::size_t>(h.record_count));
  std::vector<unsigned char> buf(static_cast<std::size_t>(record_bytes));
  for (long r = 0; r < h.record_count; ++r) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw InputError("truncated data section");
    std::size_t pos = 0;
    for (std::size_t i = 0; i < sig.size(); ++i) {
      for (int k = 0; k < sig[i].samples_per_record; ++k, pos += 2) {
        const auto u = static_cast<std::uint16_t>(buf[pos] | (buf[pos + 1] << 8));
        data[i].push_back(static_cast<std::int16_t>(u));
      }
    }
  }

  for (std::size_t i = 0; i < sig.size(); ++i) {
    if (sig[i].label == detail::kEdfAnnotationsLabel) continue;
    h.signals.push_back(sig[i]);
    file.digital.push_back(std::move(data[i]));
  }
  if (h.signals.empty()) throw InputError("EDF file contains only annotation signals");
  return file;
}

/// Converts decoded EDF samples to physical units.
inline EegRecording to_recording(const EdfFile& file, const EdfReadOptions& options = {}) {
  const auto& h = file.header;
  std::vector<double> rates;
  for (const auto& s : h.signals) rates.push_back(s.samples_per_record / h.record_duration);
  const double max_rate = *std::max_element(rates.begin(), rates.end());
  for (double r : rates) {
    if (std::abs(r - max_rate) > 1e-9 && !options.resample_to_common_rate)
      throw InputError("inconsistent per-signal sampling rates");
  }
  if (std::abs(max_rate - std::round(max_rate)) > 1e-9)
    throw InputError("sampling rate is not an integer number of Hz");

  EegRecording rec;
  rec.sampling_rate = static_cast<int>(std::lround(max_rate));
  const std::size_t n_out =
      static_cast<std::size_t>(std::llround(max_rate * h.record_duration)) *
      static_cast<std::size_t>(h.record_count);
  for (std::size_t i = 0; i < h.signals.size(); ++i) {
    const auto& s = h.signals[i];
    const auto& d = file.digital[i];
    std::vector<double> phys(d.size());
    for (std::size_t k = 0; k < d.size(); ++k) phys[k] = s.to_physical(d[k]);
    if (d.size() != n_out) {
      std::vector<double> out(n_out);
      const double ratio = rates[i] / max_rate;
      for (std::size_t k = 0; k < n_out; ++k) {
        const double x = static_cast<double>(k) * ratio;
        const auto k0 = std::min(static_cast<std::size_t>(x), phys.size() - 1);
        const auto k1 = std::min(k0 + 1, phys.size() - 1);
        const double f = x - static_cast<double>(k0);
        out[k] = phys[k0] * (1.0 - f) + phys[k1] * f;
      }
      phys = std::move(out);
    }
    rec.samples.push_back(std::move(phys));
    rec.channel_labels.push_back(s.label);
  }
  rec.id = h.recording_id;
  return rec;
}

inline EegRecording read_edf(const std::filesystem::path& path, const EdfReadOptions& options = {}) {
  EegRecording rec = to_recording(read_edf_file(path), options);
  rec.id = path.stem().string();
  rec.validate();
  return rec;
}

/// Quantizes a recording into EDF digital samples with 1-second records.
/// Physical bounds are chosen so that their 8-character header text covers
/// the data.
inline EdfFile encode_edf(const EegRecording& rec) {
  rec.validate();
  if (rec.sample_count() % static_cast<std::size_t>(rec.sampling_rate) != 0)
    throw InputError("EDF export requires a whole number of seconds");
  EdfFile file;
  auto& h = file.header;
  h.patient_id = "X X X X";
  h.recording_id = rec.id;
  h.record_duration = 1.0;
  h.record_count = static_cast<long>(rec.sample_count() / static_cast<std::size_t>(rec.sampling_rate));
  h.header_bytes = 256 * static_cast<int>(rec.channel_count() + 1);
  for (std::size_t c = 0; c < rec.channel_count(); ++c) {
    const auto& x = rec.samples[c];
    auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    double pmin = *lo, pmax = *hi;
    if (pmax - pmin < 1e-3) {
      pmin -= 1.0;
      pmax += 1.0;
    }
    EdfSignalHeader s;
    s.label = rec.channel_labels[c];
    s.physical_min = detail::parse_edf_double(detail::edf_bound_text(pmin, false), "physical minimum");
    s.physical_max = detail::parse_edf_double(detail::edf_bound_text(pmax, true), "physical maximum");
    s.samples_per_record = rec.sampling_rate;
    std::vector<std::int16_t> d(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) d[k] = s.to_digital(x[k]);
    h.signals.push_back(s);
    file.digital.push_back(std::move(d));
  }
  return file;
}

inline void write_edf_file(const std::filesystem::path& path, const EdfFile& file) {
  using detail::pad_field;
  const auto& h = file.header;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write EDF file " + path.string());
  const std::size_t ns = h.signals.size();
  std::string head;
  head += pad_field(h.version, 8);
  head += pad_field(h.patient_id, 80);
  head += pad_field(h.recording_id, 80);
  head += pad_field(h.start_date, 8);
  head += pad_field(h.start_time, 8);
  head += pad_field(std::to_string(256 * (ns + 1)), 8);
  head += pad_field(h.reserved, 44);
  head += pad_field(std::to_string(h.record_count), 8);
  {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", h.record_duration);
    head += pad_field(buf, 8);
  }
  head += pad_field(std::to_string(ns), 4);
  for (const auto& s : h.signals) head += pad_field(s.label, 16);
  for (const auto& s : h.signals) head += pad_field(s.transducer, 80);
  for (const auto& s : h.signals) head += pad_field(s.physical_dimension, 8);
  for (const auto& s : h.signals) head += pad_field(detail::edf_number_text(s.physical_min), 8);
  for (const auto& s : h.signals) head += pad_field(detail::edf_number_text(s.physical_max), 8);
  for (const auto& s : h.signals) head += pad_field(std::to_string(s.digital_min), 8);
  for (const auto& s : h.signals) head += pad_field(std::to_string(s.digital_max), 8);
  for (const auto& s : h.signals) head += pad_field(s.prefiltering, 80);
  for (const auto& s : h.signals) head += pad_field(std::to_string(s.samples_per_record), 8);
  for (const auto& s : h.signals) head += pad_field(s.reserved, 32);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));

  std::vector<char> rec_buf;
  for (long r = 0; r < h.record_count; ++r) {
    rec_buf.clear();
    for (std::size_t i = 0; i < ns; ++i) {
      const auto n = static_cast<std::size_t>(h.signals[i].samples_per_record);
      for (std::size_t k = 0; k < n; ++k) {
        const auto u = static_cast<std::uint16_t>(file.digital[i][static_cast<std::size_t>(r) * n + k]);
        rec_buf.push_back(static_cast<char>(u & 0xff));
        rec_buf.push_back(static_cast<char>(u >> 8));
      }
    }
    out.write(rec_buf.data(), static_cast<std::streamsize>(rec_buf.size()));
  }
  if (!out) throw InputError("failed writing EDF file " + path.string());
}

inline void write_edf(const std::filesystem::path& path, const EegRecording& rec) {
  write_edf_file(path, encode_edf(rec));
}

// ---------------------------------------------------------------------------
// Montage
// ---------------------------------------------------------------------------

struct MontageSpec {
  std::vector<std::pair<std::string, std::string>> derivations;
  std::size_t expected_channels = 22;

  static std::string name(const std::pair<std::string, std::string>& d) {
    return d.first + "-" + d.second;
  }

  /// Longitudinal bipolar chain plus the midline and temporal derivations
  /// recorded in CHB-MIT files (22 unique pairs).
  static MontageSpec standard() {
    return parse({"FP1-F7", "F7-T7",   "T7-P7",     "P7-O1",    "FP1-F3", "F3-C3",
                  "C3-P3",  "P3-O1",   "FP2-F4",    "F4-C4",    "C4-P4",  "P4-O2",
                  "FP2-F8", "F8-T8",   "T8-P8",     "P8-O2",    "FZ-CZ",  "CZ-PZ",
                  "P7-T7",  "T7-FT9",  "FT9-FT10",  "FT10-T8"},
                 22);
  }

  static MontageSpec parse(const std::vector<std::string>& names, std::size_t expected) {
    MontageSpec m;
    m.expected_channels = expected;
    for (const auto& n : names) {
      const auto dash = n.find('-');
      if (dash == std::string::npos || dash == 0 || dash + 1 == n.size())
        throw InputError("montage derivation '" + n + "' is not of the form POS-NEG");
      m.derivations.emplace_back(detail::trim(n.substr(0, dash)), detail::trim(n.substr(dash + 1)));
    }
    return m;
  }
};

struct MontageOptions {
  /// Zero-pad (or drop) derived channels to reach the expected count.
  bool pad_to_expected = false;
};

namespace detail {

inline std::string normalize_label(std::string s) {
  s = trim(s);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  if (s.starts_with("EEG ")) s = trim(s.substr(4));
  for (const char* suffix : {"-REF", "-LE", "-AVG"}) {
    if (s.ends_with(suffix)) s.resize(s.size() - std::string_view(suffix).size());
  }
  return s;
}

// CHB-MIT duplicates a derivation as "T8-P8-0"/"T8-P8-1".
inline std::string strip_duplicate_suffix(const std::string& s) {
  const auto dash = s.rfind('-');
  if (dash == std::string::npos || dash + 1 == s.size()) return s;
  if (s.find('-') == dash) return s;
  if (!std::all_of(s.begin() + static_cast<long>(dash) + 1, s.end(),
                   [](unsigned char c) { return std::isdigit(c); }))
    return s;
  return s.substr(0, dash);
}

inline std::optional<std::size_t> find_channel(const std::vector<std::string>& labels,
                                               const std::string& wanted) {
  const auto key = normalize_label(wanted);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (normalize_label(labels[i]) == key) return i;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (strip_duplicate_suffix(normalize_label(labels[i])) == key) return i;
  return std::nullopt;
}

}  // namespace detail

/// Derives bipolar channels. Recordings already carrying every derivation as
/// a label are passed through (re-ordered to the montage order).
inline EegRecording apply_montage(const EegRecording& rec, const MontageSpec& montage,
                                  const MontageOptions& options = {}) {
  rec.validate();
  EegRecording out;
  out.id = rec.id;
  out.sampling_rate = rec.sampling_rate;
  out.onset_time = rec.onset_time;

  bool premontaged = true;
  std::vector<std::size_t> direct;
  for (const auto& d : montage.derivations) {
    auto idx = detail::find_channel(rec.channel_labels, MontageSpec::name(d));
    if (!idx) {
      premontaged = false;
      break;
    }
    direct.push_back(*idx);
  }

  if (premontaged) {
    for (std::size_t i = 0; i < direct.size(); ++i) {
      out.samples.push_back(rec.samples[direct[i]]);
      out.channel_labels.push_back(MontageSpec::name(montage.derivations[i]));
    }
  } else {
    for (const auto& d : montage.derivations) {
      const auto pos = detail::find_channel(rec.channel_labels, d.first);
      if (!pos) throw InputError("missing electrode " + d.first);
      const auto neg = detail::find_channel(rec.channel_labels, d.second);
      if (!neg) throw InputError("missing electrode " + d.second);
      const auto& a = rec.samples[*pos];
      const auto& b = rec.samples[*neg];
      std::vector<double> diff(a.size());
      for (std::size_t k = 0; k < a.size(); ++k) diff[k] = a[k] - b[k];
      out.samples.push_back(std::move(diff));
      out.channel_labels.push_back(MontageSpec::name(d));
    }
  }

  if (out.samples.size() != montage.expected_channels) {
    if (!options.pad_to_expected)
      throw InputError("montage yields " + std::to_string(out.samples.size()) +
                       " channels, expected " + std::to_string(montage.expected_channels));
    out.samples.resize(montage.expected_channels, std::vector<double>(rec.sample_count(), 0.0));
    while (out.channel_labels.size() < montage.expected_channels)
      out.channel_labels.push_back("PAD" + std::to_string(out.channel_labels.size()));
    out.channel_labels.resize(montage.expected_channels);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Low-pass filtering
// ---------------------------------------------------------------------------

/// Direct-form-II-transposed second-order section, a0 normalized to 1.
struct Biquad {
  double b0, b1, b2, a1, a2;

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }

  std::complex<double> response(double omega) const {
    const std::complex<double> z1 = std::polar(1.0, -omega);
    const std::complex<double> z2 = z1 * z1;
    return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
  }
};

struct ButterworthLowpass {
  std::vector<Biquad> sections;
  double sampling_rate = 0;

  /// Complex response of one (causal) pass at `freq_hz`.
  std::complex<double> response(double freq_hz) const {
    const double omega = 2.0 * kPi * freq_hz / sampling_rate;
    std::complex<double> h = 1.0;
    for (const auto& s : sections) h *= s.response(omega);
    return h;
  }
};

/// Bilinear-transform Butterworth design (even order), cutoff prewarped.
inline ButterworthLowpass design_butterworth_lowpass(int order, double cutoff_hz, double sampling_rate) {
  if (order <= 0 || order % 2 != 0) throw InputError("Butterworth order must be positive and even");
  if (cutoff_hz <= 0.0 || cutoff_hz >= sampling_rate / 2.0)
    throw InputError("cutoff must lie strictly between 0 and Nyquist");
  ButterworthLowpass f;
  f.sampling_rate = sampling_rate;
  const double k = std::tan(kPi * cutoff_hz / sampling_rate);
  for (int i = 0; i < order / 2; ++i) {
    const double theta = kPi * (2.0 * i + 1.0) / (2.0 * order);
    const double q = 1.0 / (2.0 * std::sin(theta));
    const double norm = 1.0 + k / q + k * k;
    Biquad s;
    s.b0 = k * k / norm;
    s.b1 = 2.0 * s.b0;
    s.b2 = s.b0;
    s.a1 = 2.0 * (k * k - 1.0) / norm;
    s.a2 = (1.0 - k / q + k * k) / norm;
    f.sections.push_back(s);
  }
  return f;
}

namespace detail {

// Runs the cascade in place, starting from the steady state for x[0].
inline void sos_filter(const std::vector<Biquad>& sections, std::vector<double>& x) {
  if (x.empty()) return;
  double level = x.front();
  for (const auto& s : sections) {
    const double g = s.dc_gain();
    double z2 = (s.b2 - s.a2 * g) * level;
    double z1 = (s.b1 - s.a1 * g) * level + z2;
    for (double& v : x) {
      const double in = v;
      const double y = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * y + z2;
      z2 = s.b2 * in - s.a2 * y;
      v = y;
    }
    level *= g;
  }
}

}  // namespace detail

/// Forward-backward filtering with odd-extension padding at both ends.
inline std::vector<double> filtfilt(const ButterworthLowpass& filter, const std::vector<double>& x) {
  if (x.size() < 2) return x;
  const std::size_t pad = std::min<std::size_t>(3 * (2 * filter.sections.size() + 1), x.size() - 1);
  std::vector<double> ext;
  ext.reserve(x.size() + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x.front() - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x.back() - x[x.size() - 1 - i]);

  detail::sos_filter(filter.sections, ext);
  std::reverse(ext.begin(), ext.end());
  detail::sos_filter(filter.sections, ext);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<long>(pad), ext.begin() + static_cast<long>(pad + x.size())};
}

/// Zero-phase 4th-order Butterworth low-pass. A cutoff at or above Nyquist
/// returns the recording untouched.
inline EegRecording lowpass_filter(const EegRecording& rec, double cutoff_hz) {
  if (!(cutoff_hz > 0.0)) throw InputError("low-pass cutoff must be positive");
  if (rec.sampling_rate <= 0) throw InputError("sampling rate must be positive");
  if (cutoff_hz >= rec.sampling_rate / 2.0) return rec;
  const auto filter = design_butterworth_lowpass(4, cutoff_hz, rec.sampling_rate);
  EegRecording out = rec;
  for (auto& ch : out.samples) ch = filtfilt(filter, ch);
  return out;
}

// ---------------------------------------------------------------------------
// CHB-MIT per-patient summary files
// ---------------------------------------------------------------------------

struct SummaryEntry {
  std::string file;
  std::vector<std::pair<double, double>> seizures;  // start, end in seconds
};

/// Parses `chbNN-summary.txt`: "File Name:" opens an entry, then
/// "Seizure [n ]Start Time: X seconds" / "... End Time: ..." pairs follow.
inline std::vector<SummaryEntry> parse_chbmit_summary(const std::string& text) {
  static const std::regex file_re(R"(^\s*File Name:\s*(\S+))");
  static const std::regex start_re(R"(^\s*Seizure(?:\s+\d+)?\s+Start Time:\s*([0-9.]+))");
  static const std::regex end_re(R"(^\s*Seizure(?:\s+\d+)?\s+End Time:\s*([0-9.]+))");
  std::vector<SummaryEntry> out;
  std::istringstream in(text);
  std::string line;
  std::smatch m;
  std::optional<double> pending;
  while (std::getline(in, line)) {
    if (std::regex_search(line, m, file_re)) {
      out.push_back({m[1].str(), {}});
      pending.reset();
    } else if (std::regex_search(line, m, start_re)) {
      if (out.empty()) throw InputError("summary lists a seizure before any file");
      pending = std::stod(m[1].str());
    } else if (std::regex_search(line, m, end_re)) {
      if (!pending) throw InputError("summary seizure end without a start");
      out.back().seizures.emplace_back(*pending, std::stod(m[1].str()));
      pending.reset();
    }
  }
  return out;
}

}  // namespace seizure
