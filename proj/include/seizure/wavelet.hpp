#pragma once

// Mexican-hat continuous wavelet transform and the time x scale x channel
// coefficient tensor.

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seizure/common.hpp"
#include "seizure/ingest.hpp"

namespace seizure {

/// Scales 1, 2, 4, ..., 2^(count-1) samples.
inline std::vector<double> dyadic_scales(std::size_t count = 10) {
  std::vector<double> s;
  for (std::size_t i = 0; i < count; ++i) s.push_back(std::ldexp(1.0, static_cast<int>(i)));
  return s;
}

/// Default kernel half-width: five scales, where the envelope has decayed
/// below 1e-5 of its peak.
inline std::size_t default_support(double scale) {
  return static_cast<std::size_t>(std::ceil(5.0 * scale));
}

/// Samples of the L2-normalized Mexican hat at scale `a`, n in [-support, support].
inline std::vector<double> mexican_hat_kernel(double scale, std::size_t support) {
  if (!(scale > 0.0)) throw InputError("wavelet scale must be positive");
  if (static_cast<double>(support) < 5.0 * scale)
    throw InputError("kernel support must be at least five scales");
  const double norm = 2.0 / (std::sqrt(3.0) * std::pow(kPi, 0.25)) / std::sqrt(scale);
  std::vector<double> k(2 * support + 1);
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double u = (static_cast<double>(i) - static_cast<double>(support)) / scale;
    k[i] = norm * (1.0 - u * u) * std::exp(-0.5 * u * u);
  }
  return k;
}

/// Row-major time x scale coefficients of one channel.
struct CwtMatrix {
  std::size_t times = 0;
  std::size_t scales = 0;
  std::vector<double> values;

  double at(std::size_t t, std::size_t s) const { return values[t * scales + s]; }
};

namespace detail {

struct FftwDeleter {
  void operator()(double* p) const { fftw_free(p); }
  void operator()(fftw_complex* p) const { fftw_free(p); }
};

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Same-length, zero-padded convolution of one signal against a fixed set of
// symmetric kernels through a shared FFT size.
class KernelBank {
 public:
  KernelBank(std::size_t signal_length, const std::vector<double>& scales) : length_(signal_length) {
    if (scales.empty()) throw InputError("scale list is empty");
    std::size_t max_support = 0;
    for (double a : scales) {
      supports_.push_back(default_support(a));
      max_support = std::max(max_support, supports_.back());
    }
    n_ = next_pow2(signal_length + 2 * max_support + 1);
    bins_ = n_ / 2 + 1;
    real_.reset(static_cast<double*>(fftw_malloc(sizeof(double) * n_)));
    spec_.reset(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins_)));
    signal_spec_.resize(bins_);
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n_), real_.get(), spec_.get(), FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n_), spec_.get(), real_.get(), FFTW_ESTIMATE);

    for (std::size_t j = 0; j < scales.size(); ++j) {
      const auto k = mexican_hat_kernel(scales[j], supports_[j]);
      std::fill(real_.get(), real_.get() + n_, 0.0);
      std::copy(k.begin(), k.end(), real_.get());
      fftw_execute(forward_);
      std::vector<std::complex<double>> ks(bins_);
      for (std::size_t b = 0; b < bins_; ++b) ks[b] = {spec_.get()[b][0], spec_.get()[b][1]};
      kernels_.push_back(std::move(ks));
    }
  }

  KernelBank(const KernelBank&) = delete;
  KernelBank& operator=(const KernelBank&) = delete;

  ~KernelBank() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
  }

  std::size_t scale_count() const { return kernels_.size(); }

  void load_signal(std::span<const double> x) {
    std::fill(real_.get(), real_.get() + n_, 0.0);
    std::copy(x.begin(), x.end(), real_.get());
    fftw_execute(forward_);
    for (std::size_t b = 0; b < bins_; ++b) signal_spec_[b] = {spec_.get()[b][0], spec_.get()[b][1]};
  }

  // Calls out(t, value) for each t of the loaded signal convolved with kernel j.
  template <typename Sink>
  void convolve(std::size_t j, Sink&& out) {
    const auto& ks = kernels_[j];
    for (std::size_t b = 0; b < bins_; ++b) {
      const auto v = signal_spec_[b] * ks[b];
      spec_.get()[b][0] = v.real();
      spec_.get()[b][1] = v.imag();
    }
    fftw_execute(inverse_);
    const double scale = 1.0 / static_cast<double>(n_);
    const std::size_t offset = supports_[j];
    for (std::size_t t = 0; t < length_; ++t) out(t, real_.get()[t + offset] * scale);
  }

 private:
  std::size_t length_;
  std::size_t n_ = 0;
  std::size_t bins_ = 0;
  std::vector<std::size_t> supports_;
  std::unique_ptr<double[], FftwDeleter> real_;
  std::unique_ptr<fftw_complex[], FftwDeleter> spec_;
  std::vector<std::complex<double>> signal_spec_;
  std::vector<std::vector<std::complex<double>>> kernels_;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

}  // namespace detail

inline CwtMatrix cwt_channel(std::span<const double> signal, const std::vector<double>& scales) {
  if (scales.empty()) throw InputError("scale list is empty");
  if (signal.empty()) throw InputError("signal is empty");
  detail::KernelBank bank(signal.size(), scales);
  bank.load_signal(signal);
  CwtMatrix m{signal.size(), scales.size(), std::vector<double>(signal.size() * scales.size())};
  for (std::size_t j = 0; j < scales.size(); ++j)
    bank.convolve(j, [&](std::size_t t, double v) { m.values[t * m.scales + j] = v; });
  return m;
}

/// Time x scale x channel coefficients, stored in single precision.
struct WaveletTensor {
  std::string id;
  std::size_t times = 0;
  std::size_t channels = 0;
  std::vector<double> scales;  // raw-signal tensors carry the single scale 0
  int sampling_rate = 0;
  std::optional<double> onset_time;
  std::vector<float> coefficients;  // index (t * scales + s) * channels + c

  std::size_t scale_count() const { return scales.size(); }
  std::size_t index(std::size_t t, std::size_t s, std::size_t c) const {
    return (t * scales.size() + s) * channels + c;
  }
  float at(std::size_t t, std::size_t s, std::size_t c) const { return coefficients[index(t, s, c)]; }
  double duration() const {
    return sampling_rate > 0 ? static_cast<double>(times) / sampling_rate : 0.0;
  }
};

inline void validate_scales(const std::vector<double>& scales) {
  if (scales.empty()) throw InputError("scale list is empty");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (!(scales[i] > 0.0)) throw InputError("wavelet scale must be positive");
    if (i > 0 && scales[i] <= scales[i - 1]) throw InputError("scales must be strictly increasing");
  }
}

/// CWT of every channel over the whole recording.
inline WaveletTensor build_wavelet_tensor(const EegRecording& rec, const std::vector<double>& scales) {
  rec.validate();
  validate_scales(scales);
  WaveletTensor w;
  w.id = rec.id;
  w.times = rec.sample_count();
  w.channels = rec.channel_count();
  w.scales = scales;
  w.sampling_rate = rec.sampling_rate;
  w.onset_time = rec.onset_time;
  w.coefficients.assign(w.times * scales.size() * w.channels, 0.0f);
  detail::KernelBank bank(w.times, scales);
  for (std::size_t c = 0; c < w.channels; ++c) {
    bank.load_signal(rec.samples[c]);
    for (std::size_t j = 0; j < scales.size(); ++j)
      bank.convolve(j, [&](std::size_t t, double v) { w.coefficients[w.index(t, j, c)] = static_cast<float>(v); });
  }
  return w;
}

/// Raw-signal variant: time x 1 x channel, used for the no-wavelet baseline.
inline WaveletTensor raw_signal_tensor(const EegRecording& rec) {
  rec.validate();
  WaveletTensor w;
  w.id = rec.id;
  w.times = rec.sample_count();
  w.channels = rec.channel_count();
  w.scales = {0.0};
  w.sampling_rate = rec.sampling_rate;
  w.onset_time = rec.onset_time;
  w.coefficients.resize(w.times * w.channels);
  for (std::size_t t = 0; t < w.times; ++t)
    for (std::size_t c = 0; c < w.channels; ++c)
      w.coefficients[w.index(t, 0, c)] = static_cast<float>(rec.samples[c][t]);
  return w;
}

// Cache layout (little-endian): "WTEN", u32 version, u64 times, u64 scales,
// u64 channels, f64 scales[], f64 sampling rate, u8 has_onset, f64 onset,
// then float32 coefficients in time-major order.
inline constexpr std::uint32_t kTensorCacheVersion = 1;

inline void write_tensor_cache(const std::filesystem::path& path, const WaveletTensor& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write tensor cache " + path.string());
  out.write("WTEN", 4);
  detail::write_le<std::uint32_t>(out, kTensorCacheVersion);
  detail::write_le<std::uint64_t>(out, w.times);
  detail::write_le<std::uint64_t>(out, w.scales.size());
  detail::write_le<std::uint64_t>(out, w.channels);
  for (double s : w.scales) detail::write_le<double>(out, s);
  detail::write_le<double>(out, static_cast<double>(w.sampling_rate));
  detail::write_le<std::uint8_t>(out, w.onset_time ? 1 : 0);
  detail::write_le<double>(out, w.onset_time.value_or(0.0));
  out.write(reinterpret_cast<const char*>(w.coefficients.data()),
            static_cast<std::streamsize>(w.coefficients.size() * sizeof(float)));
  if (!out) throw InputError("failed writing tensor cache " + path.string());
}

inline WaveletTensor read_tensor_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open tensor cache " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "WTEN") throw InputError("not a tensor cache: " + path.string());
  if (detail::read_le<std::uint32_t>(in) != kTensorCacheVersion)
    throw InputError("unsupported tensor cache version");
  WaveletTensor w;
  w.id = path.stem().string();
  w.times = detail::read_le<std::uint64_t>(in);
  const auto n_scales = detail::read_le<std::uint64_t>(in);
  w.channels = detail::read_le<std::uint64_t>(in);
  if (n_scales == 0 || n_scales > 4096 || w.channels == 0 || w.channels > 4096)
    throw InputError("implausible tensor cache dimensions");
  for (std::uint64_t i = 0; i < n_scales; ++i) w.scales.push_back(detail::read_le<double>(in));
  w.sampling_rate = static_cast<int>(detail::read_le<double>(in));
  const bool has_onset = detail::read_le<std::uint8_t>(in) != 0;
  const double onset = detail::read_le<double>(in);
  if (has_onset) w.onset_time = onset;
  w.coefficients.resize(w.times * n_scales * w.channels);
  in.read(reinterpret_cast<char*>(w.coefficients.data()),
          static_cast<std::streamsize>(w.coefficients.size() * sizeof(float)));
  if (!in) throw InputError("truncated tensor cache " + path.string());
  return w;
}

}  // namespace seizure
