#pragma once

// Plain-text run configuration: one `key = value` per line, `#` comments.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "seizure/common.hpp"
#include "seizure/dataset.hpp"
#include "seizure/network.hpp"

namespace seizure {

struct RunConfig {
  PipelineConfig pipeline;

  // preprocessing
  std::string montage = "standard";  // standard | none | comma-separated POS-NEG list
  bool pad_channels = false;
  double lowpass_hz = 128.0;
  std::size_t scale_count = 10;

  // network
  std::vector<std::size_t> conv_filters = {64, 64, 50, 40, 32, 20};
  std::vector<std::size_t> dense_units = {250, 100};
  double conv_dropout = 0.25;
  double dense_dropout = 0.5;
  FitOptions fit;

  // grid search candidates; empty lists keep the pipeline value
  std::vector<double> grid_epoch_seconds;
  std::vector<double> grid_overlap;
  std::vector<double> grid_preictal_minutes = {5.0, 10.0, 20.0};

  // evaluation
  double sop_minutes = 10.0;
  int baseline_features = 100;
  double baseline_alpha = 0.05;
  int baseline_seizures = 33;
  double baseline_fpr = 0.142;

  // analysis
  double kl_window_seconds = 60.0;
  double kl_baseline_seconds = 1200.0;
  int kl_components = 10;
  double kl_sustain_seconds = 30.0;

  // inputs
  std::vector<std::filesystem::path> train;
  std::vector<std::filesystem::path> test;
  std::vector<std::filesystem::path> interictal;
  std::filesystem::path model;

  /// Source text of the file, echoed into checkpoints and manifests.
  std::string echo;

  LayerPlan plan_for(InputShape input) const {
    LayerPlan p = LayerPlan::standard(input);
    if (conv_filters.size() != p.conv.size())
      throw InputError("conv_filters must list " + std::to_string(p.conv.size()) + " counts");
    for (std::size_t i = 0; i < p.conv.size(); ++i) {
      p.conv[i].filters = conv_filters[i];
      p.conv[i].dropout = conv_dropout;
    }
    p.dense.clear();
    for (auto u : dense_units) p.dense.push_back({u, dense_dropout});
    p.validate();
    return p;
  }

  std::vector<PipelineConfig> grid_candidates() const {
    auto or_self = [](const std::vector<double>& v, double self) { return v.empty() ? std::vector<double>{self} : v; };
    std::vector<PipelineConfig> out;
    for (double e : or_self(grid_epoch_seconds, pipeline.epoch_seconds))
      for (double o : or_self(grid_overlap, pipeline.overlap))
        for (double l : or_self(grid_preictal_minutes, pipeline.preictal_minutes)) {
          PipelineConfig c = pipeline;
          c.epoch_seconds = e;
          c.overlap = o;
          c.preictal_minutes = l;
          c.validate();
          out.push_back(c);
        }
    return out;
  }
};

namespace detail {

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw InputError("config key '" + key + "' expects a number, got '" + v + "'");
  }
}

inline long long to_integer(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw InputError("config key '" + key + "' expects an integer, got '" + v + "'");
  }
}

inline std::size_t to_count(const std::string& key, const std::string& v) {
  const auto n = to_integer(key, v);
  if (n < 0) throw InputError("config key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(n);
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InputError("config key '" + key + "' expects true/false, got '" + v + "'");
}

inline std::vector<std::string> list_of(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  for (auto& s : split(v, ','))
    if (!s.empty()) out.push_back(s);
  return out;
}

}  // namespace detail

/// Applies one key. Relative paths resolve against `base`.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value,
                             const std::filesystem::path& base = {}) {
  using namespace detail;
  auto paths = [&](const std::string& v) {
    std::vector<std::filesystem::path> out;
    for (const auto& s : list_of(v)) {
      std::filesystem::path p(s);
      out.push_back(p.is_absolute() || base.empty() ? p : base / p);
    }
    return out;
  };
  auto doubles = [&](const std::string& v) {
    std::vector<double> out;
    for (const auto& s : list_of(v)) out.push_back(to_double(key, s));
    return out;
  };
  auto counts = [&](const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& s : list_of(v)) out.push_back(to_count(key, s));
    return out;
  };
  auto& p = c.pipeline;
  if (key == "epoch_seconds") p.epoch_seconds = to_double(key, value);
  else if (key == "overlap") p.overlap = to_double(key, value);
  else if (key == "preictal_minutes") p.preictal_minutes = to_double(key, value);
  else if (key == "smoothing") p.smoothing = to_double(key, value);
  else if (key == "threshold") p.threshold = to_double(key, value);
  else if (key == "sustain_epochs") p.sustain_epochs = static_cast<int>(to_integer(key, value));
  else if (key == "refractory_seconds") p.refractory_seconds = to_double(key, value);
  else if (key == "folds") p.folds = static_cast<int>(to_integer(key, value));
  else if (key == "seed") p.seed = static_cast<std::uint64_t>(to_integer(key, value));
  else if (key == "mode") {
    if (value == "wavelet") p.mode = InputMode::wavelet;
    else if (value == "raw") p.mode = InputMode::raw;
    else throw InputError("mode must be wavelet or raw");
  } else if (key == "montage") c.montage = value;
  else if (key == "pad_channels") c.pad_channels = to_bool(key, value);
  else if (key == "lowpass_hz") c.lowpass_hz = to_double(key, value);
  else if (key == "scale_count") c.scale_count = to_count(key, value);
  else if (key == "conv_filters") c.conv_filters = counts(value);
  else if (key == "dense_units") c.dense_units = counts(value);
  else if (key == "conv_dropout") c.conv_dropout = to_double(key, value);
  else if (key == "dense_dropout") c.dense_dropout = to_double(key, value);
  else if (key == "batch_size") c.fit.batch_size = to_count(key, value);
  else if (key == "patience") c.fit.patience = to_count(key, value);
  else if (key == "max_passes") c.fit.max_passes = to_count(key, value);
  else if (key == "adadelta_rho") c.fit.adadelta.rho = to_double(key, value);
  else if (key == "adadelta_epsilon") c.fit.adadelta.epsilon = to_double(key, value);
  else if (key == "grid_epoch_seconds") c.grid_epoch_seconds = doubles(value);
  else if (key == "grid_overlap") c.grid_overlap = doubles(value);
  else if (key == "grid_preictal_minutes") c.grid_preictal_minutes = doubles(value);
  else if (key == "sop_minutes") c.sop_minutes = to_double(key, value);
  else if (key == "baseline_features") c.baseline_features = static_cast<int>(to_integer(key, value));
  else if (key == "baseline_alpha") c.baseline_alpha = to_double(key, value);
  else if (key == "baseline_seizures") c.baseline_seizures = static_cast<int>(to_integer(key, value));
  else if (key == "baseline_fpr") c.baseline_fpr = to_double(key, value);
  else if (key == "kl_window_seconds") c.kl_window_seconds = to_double(key, value);
  else if (key == "kl_baseline_seconds") c.kl_baseline_seconds = to_double(key, value);
  else if (key == "kl_components") c.kl_components = static_cast<int>(to_integer(key, value));
  else if (key == "kl_sustain_seconds") c.kl_sustain_seconds = to_double(key, value);
  else if (key == "train") c.train = paths(value);
  else if (key == "test") c.test = paths(value);
  else if (key == "interictal") c.interictal = paths(value);
  else if (key == "model") c.model = paths(value).empty() ? std::filesystem::path{} : paths(value).front();
  else throw InputError("unknown config key '" + key + "'");
}

inline RunConfig parse_config(const std::string& text, const std::filesystem::path& base = {}) {
  RunConfig c;
  c.echo = text;
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (detail::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InputError("config line " + std::to_string(lineno) + ": expected key = value");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw InputError("config key '" + key + "' given twice");
    set_config_value(c, key, value, base);
  }
  c.pipeline.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

}  // namespace seizure
