// seizure: command-line driver for the prediction pipeline.
//
// Exit codes: 0 success, 1 bad config or inputs, 2 runtime failure.

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "seizure/evaluation.hpp"
#include "seizure/pipeline.hpp"

namespace fs = std::filesystem;
using namespace seizure;

namespace {

struct Options {
  std::string command;
  std::vector<std::string> inputs;
  std::string config;
  std::string out = "seizure_out";
  bool out_given = false;
  std::optional<std::uint64_t> seed;
  std::string mode;

  // synth
  std::size_t count = 1;
  std::size_t channels = 22;
  int rate = 256;
  double duration = 3600.0;
  double onset = 3000.0;  // negative: no seizure
  std::optional<double> transition;
  // baseline
  std::optional<double> fpr;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

struct Input {
  fs::path path;
  std::string role;
};

class Run {
 public:
  Run(Options opt) : opt_(std::move(opt)), started_(utc_now()) {
    cfg_ = opt_.config.empty() ? parse_config("") : load_config(opt_.config);
    if (opt_.seed) {
      cfg_.pipeline.seed = *opt_.seed;
      cfg_.echo += "# override: seed = " + std::to_string(*opt_.seed) + "\n";
    }
    if (!opt_.mode.empty()) {
      set_config_value(cfg_, "mode", opt_.mode);
      cfg_.echo += "# override: mode = " + opt_.mode + "\n";
    }
    cfg_.fit.seed = cfg_.pipeline.seed;
    out_ = opt_.out;
  }

  int dispatch() {
    const auto& c = opt_.command;
    if (c == "baseline") return baseline();
    fs::create_directories(out_);
    if (c == "synth") synth();
    else if (c == "ingest") ingest();
    else if (c == "train") train();
    else if (c == "gridsearch") gridsearch();
    else if (c == "predict") predict(false);
    else if (c == "evaluate") predict(true);
    else if (c == "analyze-kl") analyze_kl();
    else if (c == "analyze-spectral") analyze_spectral();
    else throw InputError("unknown command '" + c + "'");
    write_manifest();
    return 0;
  }

 private:
  // Positional inputs win over the config lists.
  std::vector<fs::path> inputs_for(const std::vector<fs::path>& from_config, const std::string& role) {
    std::vector<fs::path> paths;
    if (!opt_.inputs.empty())
      for (const auto& s : opt_.inputs) paths.emplace_back(s);
    else
      paths = from_config;
    for (const auto& p : paths) {
      if (!fs::exists(p)) throw InputError("input not found: " + p.string());
      inputs_.push_back({p, role});
    }
    return paths;
  }

  std::vector<WaveletTensor> tensors_of(const std::vector<fs::path>& paths) {
    std::vector<WaveletTensor> out;
    for (const auto& p : paths) {
      std::cerr << "loading " << p.string() << '\n';
      out.push_back(load_tensor(p, cfg_));
    }
    return out;
  }

  static std::vector<const WaveletTensor*> pointers(const std::vector<WaveletTensor>& t) {
    std::vector<const WaveletTensor*> p;
    for (const auto& x : t) p.push_back(&x);
    return p;
  }

  NetworkParameters model() {
    if (cfg_.model.empty()) throw InputError("no model checkpoint given (set model = ... in the config)");
    if (!fs::exists(cfg_.model)) throw InputError("model checkpoint not found: " + cfg_.model.string());
    inputs_.push_back({cfg_.model, "model"});
    return load_checkpoint(cfg_.model).params;
  }

  int baseline() {
    RandomPredictorParams rp;
    rp.sop_hours = cfg_.sop_minutes / 60.0;
    rp.fpr_per_hour = opt_.fpr.value_or(cfg_.baseline_fpr);
    rp.seizures = cfg_.baseline_seizures;
    rp.independent_features = cfg_.baseline_features;
    rp.alpha = cfg_.baseline_alpha;
    const auto b = random_predictor_bounds(rp);
    if (b.unbeatable) {
      std::cout << "unbeatable\n";
    } else {
      std::cout << std::fixed << std::setprecision(3) << b.sigma_low << ' ' << b.sigma_up << '\n';
    }
    if (opt_.out_given) {
      fs::create_directories(out_);
      write_manifest();
    }
    return 0;
  }

  void synth() {
    for (std::size_t i = 0; i < opt_.count; ++i) {
      SynthSpec s;
      s.id = "synth_" + std::to_string(i);
      s.channels = opt_.channels;
      s.sampling_rate = opt_.rate;
      s.duration = opt_.duration;
      if (opt_.onset >= 0.0) s.onset_time = opt_.onset;
      s.transition_time = opt_.transition;
      s.seed = detail::mix_seed(cfg_.pipeline.seed, i);
      const auto path = write_synthetic(out_, s);
      std::cout << path.string() << '\n';
    }
  }

  void ingest() {
    const auto paths = inputs_for(cfg_.train, "train");
    if (paths.empty()) throw InputError("no input recordings");
    for (const auto& p : paths) {
      const auto t = load_tensor(p, cfg_);
      write_tensor_cache(out_ / (t.id + ".wten"), t);
      write_label_sidecar(out_ / (t.id + "_labels.csv"), recording_refs(t, cfg_.pipeline));
      std::cout << (out_ / (t.id + ".wten")).string() << '\n';
    }
  }

  void train() {
    const auto tensors = tensors_of(inputs_for(cfg_.train, "train"));
    const auto r = train_model(pointers(tensors), cfg_, cfg_.pipeline);
    save_checkpoint(out_ / "model.ckpt", r.best, cfg_.echo);
    std::cout << "best pass " << r.best_pass << " validation loss " << r.validation_loss[r.best_pass - 1] << '\n';
  }

  void gridsearch() {
    const auto tensors = tensors_of(inputs_for(cfg_.train, "train"));
    const auto candidates = cfg_.grid_candidates();
    const auto gs = grid_search(
        candidates, pointers(tensors), [&](InputShape s) { return cfg_.plan_for(s); }, cfg_.fit,
        [](std::size_t ci, int fold, double v) { std::cerr << "candidate " << ci << " fold " << fold << " loss " << v << '\n'; });
    std::ofstream csv(out_ / "gridsearch.csv");
    csv << "epoch_seconds,overlap,preictal_minutes,mean_validation_loss\n";
    csv.precision(10);
    for (std::size_t i = 0; i < candidates.size(); ++i)
      csv << candidates[i].epoch_seconds << ',' << candidates[i].overlap << ',' << candidates[i].preictal_minutes << ','
          << gs.mean_validation_loss[i] << '\n';
    const auto& best = candidates[gs.best_index];
    std::cout << "epoch_seconds " << best.epoch_seconds << " overlap " << best.overlap << " preictal_minutes "
              << best.preictal_minutes << '\n';
  }

  void predict(bool evaluate) {
    const auto params = model();
    auto tests = inputs_for(cfg_.test, "test");
    std::vector<fs::path> quiet;
    if (evaluate) {
      for (const auto& p : cfg_.interictal) {
        if (!fs::exists(p)) throw InputError("input not found: " + p.string());
        inputs_.push_back({p, "interictal"});
        quiet.push_back(p);
      }
    }
    if (tests.empty() && quiet.empty()) throw InputError("no input recordings");
    tests.insert(tests.end(), quiet.begin(), quiet.end());
    std::vector<RecordingEvaluation> evals;
    for (const auto& p : tests) {
      const auto t = load_tensor(p, cfg_);
      const auto tr = predict_tensor(params, t, cfg_.pipeline);
      write_trace_csv(out_ / ("trace_" + t.id + ".csv"), tr);
      if (evaluate) evals.push_back(evaluate_trace(tr, t.onset_time, static_cast<double>(t.times) / t.sampling_rate, cfg_.pipeline));
    }
    if (!evaluate) return;
    RandomPredictorParams rp;
    rp.sop_hours = cfg_.sop_minutes / 60.0;
    rp.independent_features = cfg_.baseline_features;
    rp.alpha = cfg_.baseline_alpha;
    const auto report = build_report(evals, rp);
    write_report_json(out_ / "report.json", report);
    write_recording_csv(out_ / "recordings.csv", evals);
    std::cout << "sensitivity " << report.sensitivity << " fpr_per_hour " << report.fpr_per_hour << " mcc " << report.mcc
              << '\n';
  }

  void analyze_kl() {
    const auto params = model();
    const auto paths = inputs_for(cfg_.test, "test");
    if (paths.empty()) throw InputError("no input recordings");
    for (const auto& p : paths) {
      const auto t = load_tensor(p, cfg_);
      const auto a = kl_analysis(params, t, cfg_, cfg_.pipeline);
      write_kl_csv(out_ / ("kl_" + t.id + ".csv"), a.times, a.result.divergence);
      std::cout << t.id << ' ';
      if (a.detection_time)
        std::cout << *a.detection_time << '\n';
      else
        std::cout << "none\n";
    }
  }

  void analyze_spectral() {
    const auto paths = inputs_for(cfg_.test, "test");
    if (paths.empty()) throw InputError("no input recordings");
    std::vector<SpectralRow> rows;
    for (const auto& p : paths) {
      auto c = cfg_;
      c.pipeline.mode = InputMode::wavelet;
      const auto t = load_tensor(p, c);
      for (std::size_t ch = 0; ch < t.channels; ++ch) rows.push_back({t.id, ch, spectral_metrics(channel_slice(t, ch))});
    }
    write_spectral_csv(out_ / "spectral.csv", rows);
  }

  void write_manifest() {
    nlohmann::ordered_json j;
    j["command"] = opt_.command;
    j["config"] = cfg_.echo;
    auto inputs = nlohmann::ordered_json::array();
    for (const auto& in : inputs_)
      inputs.push_back({{"path", fs::absolute(in.path).string()}, {"role", in.role}, {"sha256", sha256_file(in.path)}});
    j["inputs"] = inputs;
    j["output_dir"] = fs::absolute(out_).string();
    j["started"] = started_;
    j["finished"] = utc_now();
    j["seed"] = cfg_.pipeline.seed;
    std::ofstream out(out_ / "manifest.json");
    if (!out) throw InputError("cannot write manifest");
    out << j.dump(2) << '\n';
  }

  Options opt_;
  RunConfig cfg_;
  fs::path out_;
  std::vector<Input> inputs_;
  std::string started_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seizure prediction from scalp EEG"};
  app.require_subcommand(1, 1);
  Options opt;
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("inputs", opt.inputs, "EDF recordings or .wten tensors");
    sub->add_option("--config", opt.config, "run configuration (key = value lines)");
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_option("--mode", opt.mode, "input representation")->check(CLI::IsMember({"wavelet", "raw"}));
  };
  struct Entry {
    const char* name;
    const char* help;
  };
  const Entry commands[] = {
      {"synth", "write seeded synthetic EDF recordings with JSON sidecars"},
      {"ingest", "preprocess recordings into tensor caches and label sidecars"},
      {"train", "fit the network; writes model.ckpt"},
      {"gridsearch", "k-fold search over epoch, overlap and preictal length"},
      {"predict", "write trace_<recording>.csv per input"},
      {"evaluate", "predict, then write report.json"},
      {"analyze-kl", "feature-space divergence; writes kl_<recording>.csv"},
      {"analyze-spectral", "singular-value metrics per channel; writes spectral.csv"},
      {"baseline", "random-predictor sensitivity range"},
  };
  std::vector<CLI::App*> subs;
  for (const auto& e : commands) {
    auto* sub = app.add_subcommand(e.name, e.help);
    common(sub);
    subs.push_back(sub);
  }
  auto* synth = app.get_subcommand("synth");
  synth->add_option("--count", opt.count, "number of recordings");
  synth->add_option("--channels", opt.channels);
  synth->add_option("--rate", opt.rate, "sampling rate in Hz");
  synth->add_option("--duration", opt.duration, "seconds");
  synth->add_option("--onset", opt.onset, "seizure onset in seconds; negative for none");
  synth->add_option("--transition", opt.transition, "start of the preictal ramp; default onset - 600 s");
  app.get_subcommand("baseline")->add_option("--fpr", opt.fpr, "false predictions per hour");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  for (auto* sub : subs)
    if (sub->parsed()) {
      opt.command = sub->get_name();
      opt.out_given = sub->count("--out") > 0;
      if (sub->count("--seed") > 0) opt.seed = seed;
    }

  try {
    Run run(opt);
    return run.dispatch();
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
}
