#pragma once

// Gaussian KL-divergence change-point detection on extracted features and
// singular-value conditioning metrics of wavelet slices.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "seizure/common.hpp"
#include "seizure/wavelet.hpp"

namespace seizure {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd to_matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) throw InputError("ragged feature rows");
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

struct GaussianSummary {
  VectorXd mean;
  MatrixXd covariance;
  std::size_t count = 0;
};

/// Sample mean and unbiased covariance of the rows of `x`.
inline GaussianSummary summarize(const Eigen::Ref<const MatrixXd>& x) {
  if (x.rows() < 2) throw InputError("need at least two rows for a covariance");
  GaussianSummary g;
  g.count = static_cast<std::size_t>(x.rows());
  g.mean = x.colwise().mean().transpose();
  const MatrixXd centered = x.rowwise() - g.mean.transpose();
  g.covariance = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  return g;
}

struct Decorrelation {
  std::vector<Eigen::Index> kept_columns;
  VectorXd center;     // baseline mean of the kept columns
  MatrixXd transform;  // kept x k_keep: principal directions scaled to unit variance
  MatrixXd apply(const MatrixXd& features) const {
    MatrixXd sub(features.rows(), static_cast<Eigen::Index>(kept_columns.size()));
    for (std::size_t j = 0; j < kept_columns.size(); ++j)
      sub.col(static_cast<Eigen::Index>(j)) = features.col(kept_columns[j]);
    return (sub.rowwise() - center.transpose()) * transform;
  }
};

/// Drops near-constant baseline features, then whitens the top `k_keep`
/// principal components of the baseline covariance.
inline Decorrelation fit_decorrelation(const MatrixXd& features, Eigen::Index baseline_rows, Eigen::Index k_keep) {
  if (k_keep < 1) throw InputError("component count must be positive");
  if (baseline_rows < k_keep + 1 || baseline_rows > features.rows())
    throw InputError("baseline must hold more rows than kept components");
  const auto base = features.topRows(baseline_rows);
  const VectorXd mean = base.colwise().mean().transpose();
  Decorrelation d;
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    const double var = (base.col(j).array() - mean(j)).square().sum() / static_cast<double>(baseline_rows - 1);
    if (var >= 1e-6) d.kept_columns.push_back(j);
  }
  if (static_cast<Eigen::Index>(d.kept_columns.size()) < k_keep)
    throw InputError("fewer informative features (" + std::to_string(d.kept_columns.size()) + ") than components");
  MatrixXd sub(baseline_rows, static_cast<Eigen::Index>(d.kept_columns.size()));
  for (std::size_t j = 0; j < d.kept_columns.size(); ++j)
    sub.col(static_cast<Eigen::Index>(j)) = base.col(d.kept_columns[j]);
  const auto g = summarize(sub);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(g.covariance);
  const auto n = g.covariance.rows();
  const double top = eig.eigenvalues()(n - 1);
  d.center = g.mean;
  d.transform.resize(n, k_keep);
  for (Eigen::Index c = 0; c < k_keep; ++c) {
    const double lambda = eig.eigenvalues()(n - 1 - c);
    if (!(lambda > 1e-12 * top)) throw NumericError("baseline covariance has fewer independent directions than components");
    d.transform.col(c) = eig.eigenvectors().col(n - 1 - c) / std::sqrt(lambda);
  }
  return d;
}

inline MatrixXd decorrelate(const MatrixXd& features, Eigen::Index baseline_rows, Eigen::Index k_keep) {
  return fit_decorrelation(features, baseline_rows, k_keep).apply(features);
}

/// D = 1/2 (tr(S1^-1 S0) + (m1 - m0)' S1^-1 (m1 - m0) - k + ln(det S1 / det S0)),
/// with 1e-8 tr(S)/k added to each diagonal before Cholesky factorization.
inline double kl_divergence(const GaussianSummary& g0, const GaussianSummary& g1) {
  const auto k = g0.mean.size();
  if (k == 0 || g1.mean.size() != k || g0.covariance.rows() != k || g0.covariance.cols() != k ||
      g1.covariance.rows() != k || g1.covariance.cols() != k)
    throw InputError("Gaussian summaries differ in dimension");
  auto regularized = [k](const MatrixXd& s) {
    MatrixXd r = s;
    r.diagonal().array() += 1e-8 * s.trace() / static_cast<double>(k);
    return r;
  };
  const Eigen::LLT<MatrixXd> c1(regularized(g1.covariance));
  const Eigen::LLT<MatrixXd> c0(regularized(g0.covariance));
  if (c1.info() != Eigen::Success) throw NumericError("covariance is not positive definite");
  if (c0.info() != Eigen::Success) throw NumericError("reference covariance is not positive definite");
  const MatrixXd l0 = c0.matrixL();
  const MatrixXd w = c1.matrixL().solve(l0);
  const VectorXd z = c1.matrixL().solve(g1.mean - g0.mean);
  const double logdet1 = 2.0 * c1.matrixLLT().diagonal().array().log().sum();
  const double logdet0 = 2.0 * c0.matrixLLT().diagonal().array().log().sum();
  return 0.5 * (w.squaredNorm() + z.squaredNorm() - static_cast<double>(k) + logdet1 - logdet0);
}

struct ChangePointOptions {
  Eigen::Index baseline_epochs = 1200;  // first 20 minutes at 1 s epochs
  Eigen::Index window = 60;             // L
  double epoch_step_seconds = 1.0;
  double sustain_seconds = 30.0;
};

struct ChangePointResult {
  std::vector<double> divergence;  // per epoch; NaN until a full window is available
  double threshold = 0.0;
  std::optional<Eigen::Index> detection;  // first epoch of the sustained run
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw InputError("median of an empty set");
  const auto mid = v.begin() + static_cast<long>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

/// D(t) compares the window of L epochs ending at t against the baseline
/// Gaussian. The alarm band is median + 5 MAD of D over windows lying inside
/// the baseline (10x median when the MAD is zero); detection is the earliest
/// epoch after the baseline starting a run above the band that lasts the
/// sustain time.
inline ChangePointResult change_point(const MatrixXd& features, const ChangePointOptions& opt) {
  const Eigen::Index T = features.rows(), B = opt.baseline_epochs, L = opt.window;
  if (L < 2) throw InputError("window must span at least two epochs");
  if (B < L + 1) throw InputError("baseline must be longer than the window");
  if (T <= B + L) throw InputError("feature stream shorter than baseline plus window");
  if (!(opt.epoch_step_seconds > 0.0)) throw InputError("epoch step must be positive");
  const auto reference = summarize(features.topRows(B));
  ChangePointResult r;
  r.divergence.assign(static_cast<std::size_t>(T), std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index t = L - 1; t < T; ++t)
    r.divergence[static_cast<std::size_t>(t)] = kl_divergence(reference, summarize(features.middleRows(t - L + 1, L)));

  std::vector<double> base(r.divergence.begin() + (L - 1), r.divergence.begin() + B);
  const double med = median_of(base);
  for (auto& v : base) v = std::abs(v - med);
  const double mad = median_of(base);
  r.threshold = mad > 0.0 ? med + 5.0 * mad : 10.0 * med;

  const auto sustain = static_cast<Eigen::Index>(std::ceil(opt.sustain_seconds / opt.epoch_step_seconds - 1e-9));
  Eigen::Index run = 0;
  for (Eigen::Index t = B + L - 1; t < T; ++t) {
    run = r.divergence[static_cast<std::size_t>(t)] > r.threshold ? run + 1 : 0;
    if (run >= std::max<Eigen::Index>(sustain, 1)) {
      r.detection = t - run + 1;
      break;
    }
  }
  return r;
}

struct SpectralMetrics {
  double spectral_gap = 0.0;
  double numerical_rank = 0.0;
  double condition_number = 0.0;
};

/// Singular values above 1e-12 sigma_1 count toward the rank used for the
/// condition number.
inline SpectralMetrics spectral_metrics_from_singular_values(const VectorXd& sv) {
  if (sv.size() == 0 || !(sv(0) > 0.0)) throw InputError("matrix is zero");
  Eigen::Index r = 0;
  while (r < sv.size() && sv(r) > 1e-12 * sv(0)) ++r;
  SpectralMetrics m;
  m.spectral_gap = r > 1 ? sv(1) / sv(0) : 0.0;
  m.numerical_rank = sv.squaredNorm() / (sv(0) * sv(0));
  m.condition_number = sv(0) / sv(r - 1);
  return m;
}

inline SpectralMetrics spectral_metrics(const MatrixXd& a) {
  if (a.size() == 0) throw InputError("matrix is empty");
  return spectral_metrics_from_singular_values(Eigen::BDCSVD<MatrixXd>(a).singularValues());
}

/// Time x scale slice of one channel.
inline MatrixXd channel_slice(const WaveletTensor& w, std::size_t channel, std::size_t t0 = 0,
                              std::size_t count = std::numeric_limits<std::size_t>::max()) {
  if (channel >= w.channels) throw InputError("channel out of range");
  if (t0 >= w.times) throw InputError("slice starts past the end of the tensor");
  count = std::min(count, w.times - t0);
  MatrixXd m(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(w.scale_count()));
  for (std::size_t t = 0; t < count; ++t)
    for (std::size_t s = 0; s < w.scale_count(); ++s)
      m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s)) = w.at(t0 + t, s, channel);
  return m;
}

inline void write_kl_csv(const std::filesystem::path& path, const std::vector<double>& times,
                         const std::vector<double>& divergence) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "time_s,D\n";
  out.precision(10);
  for (std::size_t t = 0; t < times.size() && t < divergence.size(); ++t)
    if (!std::isnan(divergence[t])) out << times[t] << ',' << divergence[t] << '\n';
}

struct SpectralRow {
  std::string recording_id;
  std::size_t channel = 0;
  SpectralMetrics metrics;
};

inline void write_spectral_csv(const std::filesystem::path& path, const std::vector<SpectralRow>& rows) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "recording_id,channel,gap,nrank,cond\n";
  out.precision(10);
  for (const auto& r : rows)
    out << r.recording_id << ',' << r.channel << ',' << r.metrics.spectral_gap << ',' << r.metrics.numerical_rank
        << ',' << r.metrics.condition_number << '\n';
}

}  // namespace seizure
