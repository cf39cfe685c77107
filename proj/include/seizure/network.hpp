#pragma once

// Convolutional classifier over epoch tensors: 2-D "same" convolutions over
// the (scale, time) plane with channels as input feature maps, max-pooling,
// inverted dropout, ReLU dense layers and a 3-way softmax. Parameters live in
// one flat vector so the optimizer and checkpoints are layout-agnostic.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "seizure/common.hpp"
#include "seizure/dataset.hpp"

namespace seizure {

inline constexpr std::size_t kClassCount = 3;

using Probabilities = std::array<double, kClassCount>;

struct InputShape {
  std::size_t channels = 0;
  std::size_t scales = 0;
  std::size_t times = 0;
  bool operator==(const InputShape&) const = default;
};

inline InputShape shape_of(const EpochTensor& e) { return {e.channels, e.scales, e.times}; }

struct ConvSpec {
  std::size_t filters = 1;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t pool_h = 1;
  std::size_t pool_w = 1;
  double dropout = 0.0;
};

struct DenseSpec {
  std::size_t units = 1;
  double dropout = 0.0;
};

struct FeatureMapShape {
  std::size_t maps = 0, height = 0, width = 0;
  std::size_t size() const { return maps * height * width; }
};

struct LayerPlan {
  InputShape input;
  std::vector<ConvSpec> conv;
  std::vector<DenseSpec> dense;

  /// Six conv layers (pooling after 2, 4, 6), dense 250 -> 100 -> 3. With
  /// 10 scales x 256 samples the final map is 5 x 4 x 20 = 400 values. Raw
  /// input (one scale) keeps the same plan with scale pooling disabled.
  static LayerPlan standard(InputShape input = {22, 10, 256}) {
    LayerPlan p;
    p.input = input;
    const std::size_t ph = input.scales == 1 ? 1 : 2;
    p.conv = {{64, 3, 3, 1, 1, 0.25}, {64, 3, 3, 1, 4, 0.25}, {50, 3, 3, 1, 1, 0.25},
              {40, 3, 3, ph, 4, 0.25}, {32, 2, 2, 1, 1, 0.25}, {20, 2, 2, 1, 4, 0.25}};
    p.dense = {{250, 0.5}, {100, 0.5}};
    return p;
  }

  /// Conv output shapes after pooling, one per conv layer.
  std::vector<FeatureMapShape> conv_shapes() const {
    std::vector<FeatureMapShape> shapes;
    FeatureMapShape cur{input.channels, input.scales, input.times};
    for (const auto& c : conv) {
      if (c.filters == 0 || c.kernel_h == 0 || c.kernel_w == 0 || c.pool_h == 0 || c.pool_w == 0)
        throw InputError("conv layer sizes must be positive");
      if (cur.height % c.pool_h != 0 || cur.width % c.pool_w != 0)
        throw InputError("pooling factors must divide the feature map");
      cur = {c.filters, cur.height / c.pool_h, cur.width / c.pool_w};
      shapes.push_back(cur);
    }
    return shapes;
  }

  std::size_t flattened_size() const {
    const auto s = conv_shapes();
    return s.empty() ? input.channels * input.scales * input.times : s.back().size();
  }

  /// Width of the last hidden layer (the feature layer).
  std::size_t feature_size() const { return dense.empty() ? flattened_size() : dense.back().units; }

  void validate() const {
    if (input.channels == 0 || input.scales == 0 || input.times == 0)
      throw InputError("input shape must be non-empty");
    (void)conv_shapes();
    for (const auto& d : dense) {
      if (d.units == 0) throw InputError("dense layer needs at least one unit");
      if (d.dropout < 0.0 || d.dropout >= 1.0) throw InputError("dropout must lie in [0, 1)");
    }
    for (const auto& c : conv)
      if (c.dropout < 0.0 || c.dropout >= 1.0) throw InputError("dropout must lie in [0, 1)");
  }

  std::string describe() const {
    std::ostringstream os;
    os << "input " << input.channels << "x" << input.scales << "x" << input.times;
    for (const auto& c : conv)
      os << "; conv " << c.filters << "@" << c.kernel_h << "x" << c.kernel_w << " pool " << c.pool_h << "x"
         << c.pool_w << " drop " << c.dropout;
    for (const auto& d : dense) os << "; dense " << d.units << " drop " << d.dropout;
    os << "; softmax " << kClassCount;
    return os.str();
  }
};

/// Offsets of every weight/bias block inside the flat parameter vector.
struct ParamLayout {
  struct Block {
    std::size_t weights = 0, biases = 0;  // offsets
    std::size_t in = 0, out = 0;          // fan-in (per output) and output count
  };
  std::vector<Block> conv, dense;
  Block output;
  std::size_t total = 0;

  explicit ParamLayout(const LayerPlan& plan) {
    plan.validate();
    std::size_t pos = 0;
    std::size_t maps = plan.input.channels;
    for (const auto& c : plan.conv) {
      Block b{pos, pos + c.filters * maps * c.kernel_h * c.kernel_w, maps * c.kernel_h * c.kernel_w, c.filters};
      pos = b.biases + c.filters;
      conv.push_back(b);
      maps = c.filters;
    }
    std::size_t width = plan.flattened_size();
    for (const auto& d : plan.dense) {
      Block b{pos, pos + d.units * width, width, d.units};
      pos = b.biases + d.units;
      dense.push_back(b);
      width = d.units;
    }
    output = {pos, pos + kClassCount * width, width, kClassCount};
    total = output.biases + kClassCount;
  }
};

struct NetworkParameters {
  LayerPlan plan;
  std::uint64_t seed = 0;
  std::vector<double> values;
  // Adadelta running averages of squared gradients and squared updates.
  std::vector<double> mean_sq_grad;
  std::vector<double> mean_sq_update;

  std::size_t size() const { return values.size(); }
};

/// Glorot-uniform weights, zero biases, fresh optimizer state.
inline NetworkParameters initialize_parameters(const LayerPlan& plan, std::uint64_t seed) {
  const ParamLayout layout(plan);
  NetworkParameters p{plan, seed, std::vector<double>(layout.total, 0.0),
                      std::vector<double>(layout.total, 0.0), std::vector<double>(layout.total, 0.0)};
  std::mt19937_64 rng(detail::mix_seed(seed, 0x1417));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto fill = [&](std::size_t offset, std::size_t count, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = 0; i < count; ++i) p.values[offset + i] = limit * unit(rng);
  };
  for (std::size_t l = 0; l < plan.conv.size(); ++l) {
    const auto& b = layout.conv[l];
    const auto& c = plan.conv[l];
    fill(b.weights, b.biases - b.weights, static_cast<double>(b.in),
         static_cast<double>(c.filters * c.kernel_h * c.kernel_w));
  }
  for (const auto& b : layout.dense) fill(b.weights, b.biases - b.weights, double(b.in), double(b.out));
  fill(layout.output.weights, layout.output.biases - layout.output.weights, double(layout.output.in),
       double(kClassCount));
  return p;
}

enum class Mode { train, infer };

/// Activations of one example kept for backpropagation.
struct ExampleCache {
  std::vector<std::vector<double>> stage_input;  // input of each layer, then the logits' input
  std::vector<std::vector<double>> activation;   // post-ReLU, pre-pool (conv) / pre-dropout (dense)
  std::vector<std::vector<std::uint32_t>> pool_argmax;
  std::vector<std::vector<double>> dropout_scale;  // empty when no dropout was applied
  Probabilities probabilities{};
};

struct ForwardResult {
  std::vector<Probabilities> probabilities;
  std::vector<ExampleCache> caches;
};

using Batch = std::vector<const EpochTensor*>;

inline Batch batch_of(const std::vector<LabeledEpoch>& epochs) {
  Batch b;
  b.reserve(epochs.size());
  for (const auto& e : epochs) b.push_back(&e.data);
  return b;
}

inline std::vector<EpochLabel> labels_of(const std::vector<LabeledEpoch>& epochs) {
  std::vector<EpochLabel> l;
  l.reserve(epochs.size());
  for (const auto& e : epochs) l.push_back(e.label);
  return l;
}

namespace detail {

inline std::size_t pad_before(std::size_t k) { return (k - 1) / 2; }

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Patch matrix of a zero-padded "same" convolution: row (c*kh + i)*kw + j,
// column y*w + x holds in[c][y + i - pt][x + j - pl].
inline RowMatrix im2col(const double* in, std::size_t maps, std::size_t h, std::size_t w, std::size_t kh,
                        std::size_t kw) {
  RowMatrix col = RowMatrix::Zero(static_cast<Eigen::Index>(maps * kh * kw), static_cast<Eigen::Index>(h * w));
  const auto pt = static_cast<long>(pad_before(kh));
  const auto pl = static_cast<long>(pad_before(kw));
  for (std::size_t c = 0; c < maps; ++c)
    for (std::size_t i = 0; i < kh; ++i)
      for (std::size_t j = 0; j < kw; ++j) {
        double* row = col.row(static_cast<Eigen::Index>((c * kh + i) * kw + j)).data();
        const long dy = static_cast<long>(i) - pt, dx = static_cast<long>(j) - pl;
        const long x0 = std::max(0L, -dx), x1 = std::min(static_cast<long>(w), static_cast<long>(w) - dx);
        for (long y = std::max(0L, -dy); y < std::min(static_cast<long>(h), static_cast<long>(h) - dy); ++y) {
          const double* src = in + (c * h + static_cast<std::size_t>(y + dy)) * w;
          for (long x = x0; x < x1; ++x) row[y * static_cast<long>(w) + x] = src[x + dx];
        }
      }
  return col;
}

// Adjoint of im2col: scatters patch gradients back onto the input maps.
inline void col2im(const RowMatrix& col, double* din, std::size_t maps, std::size_t h, std::size_t w,
                   std::size_t kh, std::size_t kw) {
  const auto pt = static_cast<long>(pad_before(kh));
  const auto pl = static_cast<long>(pad_before(kw));
  for (std::size_t c = 0; c < maps; ++c)
    for (std::size_t i = 0; i < kh; ++i)
      for (std::size_t j = 0; j < kw; ++j) {
        const double* row = col.row(static_cast<Eigen::Index>((c * kh + i) * kw + j)).data();
        const long dy = static_cast<long>(i) - pt, dx = static_cast<long>(j) - pl;
        const long x0 = std::max(0L, -dx), x1 = std::min(static_cast<long>(w), static_cast<long>(w) - dx);
        for (long y = std::max(0L, -dy); y < std::min(static_cast<long>(h), static_cast<long>(h) - dy); ++y) {
          double* dst = din + (c * h + static_cast<std::size_t>(y + dy)) * w;
          for (long x = x0; x < x1; ++x) dst[x + dx] += row[y * static_cast<long>(w) + x];
        }
      }
}

// out[f] = bias[f] + sum_c w[f][c] (*) in[c], "same" size.
inline void conv_forward(const double* w, const double* bias, const double* in, double* out, std::size_t maps_in,
                         std::size_t maps_out, std::size_t h, std::size_t wd, std::size_t kh, std::size_t kw) {
  const auto k = static_cast<Eigen::Index>(maps_in * kh * kw);
  const auto f = static_cast<Eigen::Index>(maps_out);
  const auto n = static_cast<Eigen::Index>(h * wd);
  const RowMatrix col = im2col(in, maps_in, h, wd, kh, kw);
  Eigen::Map<const RowMatrix> weights(w, f, k);
  Eigen::Map<RowMatrix> result(out, f, n);
  result.noalias() = weights * col;
  result.colwise() += Eigen::Map<const Eigen::VectorXd>(bias, f);
}

// Accumulates dW, db and (when din != nullptr) din from dout.
inline void conv_backward(const double* w, const double* in, const double* dout, double* dw, double* db, double* din,
                          std::size_t maps_in, std::size_t maps_out, std::size_t h, std::size_t wd, std::size_t kh,
                          std::size_t kw) {
  const auto k = static_cast<Eigen::Index>(maps_in * kh * kw);
  const auto f = static_cast<Eigen::Index>(maps_out);
  const auto n = static_cast<Eigen::Index>(h * wd);
  Eigen::Map<const RowMatrix> g(dout, f, n);
  Eigen::Map<Eigen::VectorXd>(db, f) += g.rowwise().sum();
  const RowMatrix col = im2col(in, maps_in, h, wd, kh, kw);
  Eigen::Map<RowMatrix>(dw, f, k).noalias() += g * col.transpose();
  if (din) {
    const RowMatrix dcol = Eigen::Map<const RowMatrix>(w, f, k).transpose() * g;
    col2im(dcol, din, maps_in, h, wd, kh, kw);
  }
}

// Uniform in [0, 1) from the top 53 bits.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::vector<double> dropout_mask(std::size_t n, double rate, std::mt19937_64& rng) {
  std::vector<double> m(n);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (auto& v : m) v = unit_uniform(rng) < rate ? 0.0 : keep_scale;
  return m;
}

inline Probabilities softmax(const double* logits) {
  double mx = logits[0];
  for (std::size_t k = 1; k < kClassCount; ++k) mx = std::max(mx, logits[k]);
  Probabilities p{};
  double sum = 0.0;
  for (std::size_t k = 0; k < kClassCount; ++k) sum += (p[k] = std::exp(logits[k] - mx));
  for (auto& v : p) v /= sum;
  return p;
}

inline std::uint64_t example_stream(std::uint64_t dropout_seed, std::size_t index) {
  return mix_seed(dropout_seed, static_cast<std::uint64_t>(index));
}

}  // namespace detail

/// Runs one example. Train mode draws dropout masks from `stream_seed`.
inline ExampleCache forward_example(const NetworkParameters& params, const ParamLayout& layout,
                                    const EpochTensor& input, Mode mode, std::uint64_t stream_seed) {
  const auto& plan = params.plan;
  if (shape_of(input) != plan.input) throw InputError("epoch shape does not match the layer plan");
  std::mt19937_64 rng(stream_seed);
  const double* theta = params.values.data();
  ExampleCache cache;
  const std::size_t layers = plan.conv.size() + plan.dense.size();
  cache.stage_input.reserve(layers + 1);
  cache.activation.resize(layers);
  cache.pool_argmax.resize(plan.conv.size());
  cache.dropout_scale.resize(layers);
  cache.stage_input.emplace_back(input.values.begin(), input.values.end());

  std::size_t maps = plan.input.channels, h = plan.input.scales, w = plan.input.times;
  for (std::size_t l = 0; l < plan.conv.size(); ++l) {
    const auto& spec = plan.conv[l];
    const auto& blk = layout.conv[l];
    auto& act = cache.activation[l];
    act.resize(spec.filters * h * w);
    detail::conv_forward(theta + blk.weights, theta + blk.biases, cache.stage_input.back().data(), act.data(), maps,
                         spec.filters, h, w, spec.kernel_h, spec.kernel_w);
    for (auto& v : act) v = v > 0.0 ? v : 0.0;

    const std::size_t oh = h / spec.pool_h, ow = w / spec.pool_w;
    std::vector<double> out(spec.filters * oh * ow);
    if (spec.pool_h == 1 && spec.pool_w == 1) {
      out = act;
    } else {
      auto& arg = cache.pool_argmax[l];
      arg.resize(out.size());
      for (std::size_t f = 0; f < spec.filters; ++f)
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t x = 0; x < ow; ++x) {
            std::size_t best = (f * h + y * spec.pool_h) * w + x * spec.pool_w;
            for (std::size_t i = 0; i < spec.pool_h; ++i)
              for (std::size_t j = 0; j < spec.pool_w; ++j) {
                const std::size_t idx = (f * h + y * spec.pool_h + i) * w + x * spec.pool_w + j;
                if (act[idx] > act[best]) best = idx;
              }
            const std::size_t o = (f * oh + y) * ow + x;
            arg[o] = static_cast<std::uint32_t>(best);
            out[o] = act[best];
          }
    }
    if (mode == Mode::train && spec.dropout > 0.0) {
      auto& m = cache.dropout_scale[l];
      m = detail::dropout_mask(out.size(), spec.dropout, rng);
      for (std::size_t k = 0; k < out.size(); ++k) out[k] *= m[k];
    }
    cache.stage_input.push_back(std::move(out));
    maps = spec.filters;
    h = oh;
    w = ow;
  }

  for (std::size_t d = 0; d < plan.dense.size(); ++d) {
    const auto& spec = plan.dense[d];
    const auto& blk = layout.dense[d];
    const std::size_t li = plan.conv.size() + d;
    const auto& in = cache.stage_input.back();
    auto& act = cache.activation[li];
    act.resize(spec.units);
    for (std::size_t u = 0; u < spec.units; ++u) {
      const double* row = theta + blk.weights + u * blk.in;
      double s = theta[blk.biases + u];
      for (std::size_t k = 0; k < blk.in; ++k) s += row[k] * in[k];
      act[u] = s > 0.0 ? s : 0.0;
    }
    std::vector<double> out = act;
    if (mode == Mode::train && spec.dropout > 0.0) {
      auto& m = cache.dropout_scale[li];
      m = detail::dropout_mask(out.size(), spec.dropout, rng);
      for (std::size_t k = 0; k < out.size(); ++k) out[k] *= m[k];
    }
    cache.stage_input.push_back(std::move(out));
  }

  const auto& in = cache.stage_input.back();
  const auto& ob = layout.output;
  std::array<double, kClassCount> logits{};
  for (std::size_t k = 0; k < kClassCount; ++k) {
    const double* row = theta + ob.weights + k * ob.in;
    double s = theta[ob.biases + k];
    for (std::size_t i = 0; i < ob.in; ++i) s += row[i] * in[i];
    logits[k] = s;
  }
  cache.probabilities = detail::softmax(logits.data());
  return cache;
}

/// Batch forward pass. Example i in train mode uses the dropout stream
/// derived from (dropout_seed, i).
inline ForwardResult forward(const NetworkParameters& params, const Batch& batch, Mode mode,
                             std::uint64_t dropout_seed = 0) {
  if (batch.empty()) throw InputError("empty batch");
  const ParamLayout layout(params.plan);
  ForwardResult r;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto cache = forward_example(params, layout, *batch[i], mode, detail::example_stream(dropout_seed, i));
    r.probabilities.push_back(cache.probabilities);
    r.caches.push_back(std::move(cache));
  }
  return r;
}

/// Inference-mode class probabilities without retaining activations.
inline std::vector<Probabilities> predict_probabilities(const NetworkParameters& params, const Batch& batch) {
  const ParamLayout layout(params.plan);
  std::vector<Probabilities> out;
  out.reserve(batch.size());
  for (const auto* e : batch) out.push_back(forward_example(params, layout, *e, Mode::infer, 0).probabilities);
  return out;
}

/// Mean categorical cross-entropy; probabilities clamped at 1e-12.
inline double loss(const std::vector<Probabilities>& probabilities, const std::vector<EpochLabel>& labels) {
  if (probabilities.size() != labels.size()) throw InputError("probability and label counts differ");
  if (probabilities.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    total -= std::log(std::max(probabilities[i][static_cast<std::size_t>(labels[i])], 1e-12));
  return total / static_cast<double>(labels.size());
}

/// Backpropagates one cached example, accumulating scale * dLoss/dtheta.
inline void backward_example(const NetworkParameters& params, const ParamLayout& layout, const ExampleCache& cache,
                             EpochLabel label, double scale, std::vector<double>& grad) {
  const auto& plan = params.plan;
  const double* theta = params.values.data();
  double* g = grad.data();

  const auto& ob = layout.output;
  std::array<double, kClassCount> dlogits{};
  for (std::size_t k = 0; k < kClassCount; ++k)
    dlogits[k] = scale * (cache.probabilities[k] - (k == static_cast<std::size_t>(label) ? 1.0 : 0.0));
  const auto& top_in = cache.stage_input.back();
  std::vector<double> dcur(ob.in, 0.0);
  for (std::size_t k = 0; k < kClassCount; ++k) {
    g[ob.biases + k] += dlogits[k];
    double* grow = g + ob.weights + k * ob.in;
    const double* row = theta + ob.weights + k * ob.in;
    for (std::size_t i = 0; i < ob.in; ++i) {
      grow[i] += dlogits[k] * top_in[i];
      dcur[i] += dlogits[k] * row[i];
    }
  }

  for (std::size_t d = plan.dense.size(); d-- > 0;) {
    const std::size_t li = plan.conv.size() + d;
    const auto& blk = layout.dense[d];
    const auto& act = cache.activation[li];
    const auto& mask = cache.dropout_scale[li];
    const auto& in = cache.stage_input[li];
    std::vector<double> dprev(blk.in, 0.0);
    for (std::size_t u = 0; u < blk.out; ++u) {
      double du = dcur[u];
      if (!mask.empty()) du *= mask[u];
      if (act[u] <= 0.0) du = 0.0;
      if (du == 0.0) continue;
      g[blk.biases + u] += du;
      double* grow = g + blk.weights + u * blk.in;
      const double* row = theta + blk.weights + u * blk.in;
      for (std::size_t k = 0; k < blk.in; ++k) {
        grow[k] += du * in[k];
        dprev[k] += du * row[k];
      }
    }
    dcur = std::move(dprev);
  }

  const auto shapes = plan.conv_shapes();
  for (std::size_t l = plan.conv.size(); l-- > 0;) {
    const auto& spec = plan.conv[l];
    const auto& blk = layout.conv[l];
    const auto& act = cache.activation[l];
    const auto& mask = cache.dropout_scale[l];
    if (!mask.empty())
      for (std::size_t k = 0; k < dcur.size(); ++k) dcur[k] *= mask[k];
    std::vector<double> dact;
    if (spec.pool_h == 1 && spec.pool_w == 1) {
      dact = std::move(dcur);
    } else {
      dact.assign(act.size(), 0.0);
      const auto& arg = cache.pool_argmax[l];
      for (std::size_t k = 0; k < arg.size(); ++k) dact[arg[k]] += dcur[k];
    }
    for (std::size_t k = 0; k < dact.size(); ++k)
      if (act[k] <= 0.0) dact[k] = 0.0;

    const std::size_t maps_in = l == 0 ? plan.input.channels : plan.conv[l - 1].filters;
    const std::size_t h = l == 0 ? plan.input.scales : shapes[l - 1].height;
    const std::size_t w = l == 0 ? plan.input.times : shapes[l - 1].width;
    std::vector<double> din(l == 0 ? 0 : maps_in * h * w, 0.0);
    detail::conv_backward(theta + blk.weights, cache.stage_input[l].data(), dact.data(), g + blk.weights,
                          g + blk.biases, l == 0 ? nullptr : din.data(), maps_in, spec.filters, h, w, spec.kernel_h,
                          spec.kernel_w);
    dcur = std::move(din);
  }
}

/// Gradient of the mean batch loss. Dropout masks follow the same
/// (dropout_seed, index) streams as forward(), so a forward/backward pair
/// with equal seeds sees identical masks.
inline std::vector<double> gradients(const NetworkParameters& params, const Batch& batch,
                                     const std::vector<EpochLabel>& labels, Mode mode = Mode::train,
                                     std::uint64_t dropout_seed = 0, double* batch_loss = nullptr) {
  if (batch.empty() || batch.size() != labels.size()) throw InputError("batch and labels must be non-empty and aligned");
  const ParamLayout layout(params.plan);
  std::vector<double> grad(layout.total, 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto cache = forward_example(params, layout, *batch[i], mode, detail::example_stream(dropout_seed, i));
    total -= std::log(std::max(cache.probabilities[static_cast<std::size_t>(labels[i])], 1e-12));
    backward_example(params, layout, cache, labels[i], scale, grad);
  }
  if (batch_loss) *batch_loss = total * scale;
  return grad;
}

struct AdadeltaSettings {
  double rho = 0.95;
  double epsilon = 1e-6;
};

/// Element-wise Adadelta update of parameters and accumulators.
inline void adadelta_step(NetworkParameters& params, const std::vector<double>& grad,
                          const AdadeltaSettings& settings = {}) {
  const std::size_t n = params.values.size();
  if (grad.size() != n || params.mean_sq_grad.size() != n || params.mean_sq_update.size() != n)
    throw InputError("gradient and accumulator shapes must match the parameters");
  const double rho = settings.rho, eps = settings.epsilon;
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = grad[i];
    double& eg = params.mean_sq_grad[i];
    double& ed = params.mean_sq_update[i];
    eg = rho * eg + (1.0 - rho) * gi * gi;
    const double delta = -std::sqrt(ed + eps) / std::sqrt(eg + eps) * gi;
    ed = rho * ed + (1.0 - rho) * delta * delta;
    params.values[i] += delta;
  }
}

/// Mean inference-mode loss over a labeled set.
inline double evaluate_loss(const NetworkParameters& params, const std::vector<LabeledEpoch>& epochs) {
  if (epochs.empty()) return 0.0;
  return loss(predict_probabilities(params, batch_of(epochs)), labels_of(epochs));
}

inline double accuracy(const NetworkParameters& params, const std::vector<LabeledEpoch>& epochs) {
  if (epochs.empty()) return 0.0;
  const auto p = predict_probabilities(params, batch_of(epochs));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto k = static_cast<std::size_t>(std::max_element(p[i].begin(), p[i].end()) - p[i].begin());
    hits += k == static_cast<std::size_t>(epochs[i].label);
  }
  return static_cast<double>(hits) / static_cast<double>(p.size());
}

struct FitOptions {
  std::size_t batch_size = 64;
  std::size_t patience = 3;
  std::size_t max_passes = 100;
  AdadeltaSettings adadelta;
  std::uint64_t seed = 0;
};

struct FitResult {
  NetworkParameters best;
  std::vector<double> train_loss;       // mean mini-batch loss per pass
  std::vector<double> validation_loss;  // inference-mode loss per pass
  std::size_t best_pass = 0;            // 1-based
};

/// 1-based index of the first minimum, or 0 for an empty history.
inline std::size_t best_pass_index(const std::vector<double>& validation_losses) {
  if (validation_losses.empty()) return 0;
  return static_cast<std::size_t>(std::min_element(validation_losses.begin(), validation_losses.end()) -
                                  validation_losses.begin()) + 1;
}

/// True once `patience` passes have gone by without a new best.
inline bool should_stop(const std::vector<double>& validation_losses, std::size_t patience) {
  return !validation_losses.empty() && validation_losses.size() - best_pass_index(validation_losses) >= patience;
}

/// Mini-batch Adadelta training from `initial`, early-stopped on validation loss.
inline FitResult fit(NetworkParameters initial, const std::vector<LabeledEpoch>& train,
                     const std::vector<LabeledEpoch>& validation, const FitOptions& options) {
  if (train.empty() || validation.empty()) throw InputError("training and validation sets must be non-empty");
  if (options.batch_size == 0) throw InputError("batch size must be positive");
  FitResult result;
  result.best = initial;
  NetworkParameters current = std::move(initial);
  const ParamLayout layout(current.plan);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(detail::mix_seed(options.seed, 0xf17));
  double best_loss = std::numeric_limits<double>::infinity();

  for (std::size_t pass = 1; pass <= options.max_passes; ++pass) {
    detail::seeded_shuffle(order, rng);
    double pass_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      Batch batch;
      std::vector<EpochLabel> labels;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&train[order[i]].data);
        labels.push_back(train[order[i]].label);
      }
      double batch_loss = 0.0;
      const auto grad = gradients(current, batch, labels, Mode::train, rng(), &batch_loss);
      adadelta_step(current, grad, options.adadelta);
      pass_loss += batch_loss;
      ++batches;
    }
    result.train_loss.push_back(pass_loss / static_cast<double>(batches));
    const double vloss = evaluate_loss(current, validation);
    result.validation_loss.push_back(vloss);
    if (vloss < best_loss) {
      best_loss = vloss;
      result.best = current;
    }
    if (should_stop(result.validation_loss, options.patience)) break;
  }
  result.best_pass = best_pass_index(result.validation_loss);
  return result;
}

inline FitResult fit(const LayerPlan& plan, const std::vector<LabeledEpoch>& train,
                     const std::vector<LabeledEpoch>& validation, const FitOptions& options) {
  return fit(initialize_parameters(plan, options.seed), train, validation, options);
}

/// Last-hidden-layer activations (inference mode), one row per epoch.
inline std::vector<std::vector<double>> extract_features(const NetworkParameters& params, const Batch& epochs) {
  const ParamLayout layout(params.plan);
  std::vector<std::vector<double>> rows;
  rows.reserve(epochs.size());
  for (const auto* e : epochs) rows.push_back(forward_example(params, layout, *e, Mode::infer, 0).stage_input.back());
  return rows;
}

// ---------------------------------------------------------------------------
// Grid search over labeling/windowing parameters
// ---------------------------------------------------------------------------

struct GridSearchResult {
  std::size_t best_index = 0;
  std::vector<double> mean_validation_loss;  // one per candidate
};

/// Picks the candidate with the lowest mean validation loss (first on ties).
inline std::size_t argmin_first(const std::vector<double>& losses) {
  if (losses.empty()) throw InputError("grid search needs at least one candidate");
  std::size_t best = 0;
  for (std::size_t i = 1; i < losses.size(); ++i)
    if (losses[i] < losses[best]) best = i;
  return best;
}

using PlanFactory = std::function<LayerPlan(InputShape)>;

/// Labeled training/validation epochs for one fold of one candidate. Only the
/// training side is balanced.
inline std::pair<std::vector<LabeledEpoch>, std::vector<LabeledEpoch>> fold_epochs(
    const std::vector<const WaveletTensor*>& tensors, const PipelineConfig& config, int fold) {
  std::vector<std::string> ids;
  for (const auto* t : tensors) ids.push_back(t->id);
  const auto groups = fold_groups(ids, config.folds, config.seed);
  const auto& held = groups[static_cast<std::size_t>(fold)];
  std::vector<EpochRef> train_refs;
  std::vector<LabeledEpoch> validation;
  for (const auto* t : tensors) {
    auto refs = label_epochs(segment(*t, config.epoch_seconds, config.overlap), t->onset_time, config.preictal_minutes);
    const bool is_validation = std::find(held.begin(), held.end(), t->id) != held.end();
    if (is_validation) {
      auto v = materialize(*t, refs, config.epoch_seconds);
      std::move(v.begin(), v.end(), std::back_inserter(validation));
    } else {
      train_refs.insert(train_refs.end(), refs.begin(), refs.end());
    }
  }
  train_refs = balance(std::move(train_refs), detail::mix_seed(config.seed, static_cast<std::uint64_t>(fold)));
  std::map<std::string, const WaveletTensor*> by_id;
  for (const auto* t : tensors) by_id[t->id] = t;
  std::vector<LabeledEpoch> train;
  train.reserve(train_refs.size());
  for (const auto& r : train_refs) {
    const auto* t = by_id.at(r.recording_id);
    const std::size_t width = epoch_samples(config.epoch_seconds, t->sampling_rate);
    train.push_back({normalize_epoch(extract_epoch(*t, r.start_sample, width)), r.label, r.start_time, r.recording_id});
  }
  return {std::move(train), std::move(validation)};
}

/// Mean k-fold validation loss of each candidate; returns the argmin.
inline GridSearchResult grid_search(const std::vector<PipelineConfig>& candidates,
                                    const std::vector<const WaveletTensor*>& tensors, const PlanFactory& make_plan,
                                    const FitOptions& options,
                                    const std::function<void(std::size_t, int, double)>& progress = {}) {
  if (candidates.empty()) throw InputError("grid search needs at least one candidate");
  if (tensors.empty()) throw InputError("no input recordings");
  GridSearchResult r;
  for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
    const auto& cfg = candidates[ci];
    cfg.validate();
    double sum = 0.0;
    for (int fold = 0; fold < cfg.folds; ++fold) {
      auto [train, validation] = fold_epochs(tensors, cfg, fold);
      FitOptions fo = options;
      fo.seed = detail::mix_seed(options.seed, static_cast<std::uint64_t>(fold));
      const auto fitted = fit(make_plan(shape_of(train.front().data)), train, validation, fo);
      const double v = fitted.validation_loss[fitted.best_pass - 1];
      if (progress) progress(ci, fold, v);
      sum += v;
    }
    r.mean_validation_loss.push_back(sum / cfg.folds);
  }
  r.best_index = argmin_first(r.mean_validation_loss);
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------
// "SZCK", u32 version, plan (input dims, conv specs, dense specs), u64 seed,
// config echo string, u64 parameter count, then f64 blocks: values,
// mean_sq_grad, mean_sq_update.

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::filesystem::path& path, const NetworkParameters& params,
                            const std::string& config_echo = {}) {
  using detail::write_le;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  const auto& p = params.plan;
  out.write("SZCK", 4);
  write_le<std::uint32_t>(out, kCheckpointVersion);
  write_le<std::uint64_t>(out, p.input.channels);
  write_le<std::uint64_t>(out, p.input.scales);
  write_le<std::uint64_t>(out, p.input.times);
  write_le<std::uint64_t>(out, p.conv.size());
  for (const auto& c : p.conv) {
    for (auto v : {c.filters, c.kernel_h, c.kernel_w, c.pool_h, c.pool_w}) write_le<std::uint64_t>(out, v);
    write_le<double>(out, c.dropout);
  }
  write_le<std::uint64_t>(out, p.dense.size());
  for (const auto& d : p.dense) {
    write_le<std::uint64_t>(out, d.units);
    write_le<double>(out, d.dropout);
  }
  write_le<std::uint64_t>(out, params.seed);
  detail::write_string(out, config_echo);
  write_le<std::uint64_t>(out, params.values.size());
  for (const auto* block : {&params.values, &params.mean_sq_grad, &params.mean_sq_update})
    out.write(reinterpret_cast<const char*>(block->data()), static_cast<std::streamsize>(block->size() * sizeof(double)));
  if (!out) throw InputError("failed writing checkpoint " + path.string());
}

struct Checkpoint {
  NetworkParameters params;
  std::string config_echo;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  using detail::read_le;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "SZCK") throw InputError("not a checkpoint: " + path.string());
  if (read_le<std::uint32_t>(in) != kCheckpointVersion) throw InputError("unsupported checkpoint version");
  Checkpoint ck;
  auto& p = ck.params.plan;
  p.input.channels = read_le<std::uint64_t>(in);
  p.input.scales = read_le<std::uint64_t>(in);
  p.input.times = read_le<std::uint64_t>(in);
  const auto n_conv = read_le<std::uint64_t>(in);
  if (n_conv > 64) throw InputError("implausible layer count in checkpoint");
  for (std::uint64_t i = 0; i < n_conv; ++i) {
    ConvSpec c;
    c.filters = read_le<std::uint64_t>(in);
    c.kernel_h = read_le<std::uint64_t>(in);
    c.kernel_w = read_le<std::uint64_t>(in);
    c.pool_h = read_le<std::uint64_t>(in);
    c.pool_w = read_le<std::uint64_t>(in);
    c.dropout = read_le<double>(in);
    p.conv.push_back(c);
  }
  const auto n_dense = read_le<std::uint64_t>(in);
  if (n_dense > 64) throw InputError("implausible layer count in checkpoint");
  for (std::uint64_t i = 0; i < n_dense; ++i) {
    DenseSpec d;
    d.units = read_le<std::uint64_t>(in);
    d.dropout = read_le<double>(in);
    p.dense.push_back(d);
  }
  ck.params.seed = read_le<std::uint64_t>(in);
  ck.config_echo = detail::read_string(in);
  const auto n = read_le<std::uint64_t>(in);
  if (n != ParamLayout(p).total) throw InputError("checkpoint parameter count does not match its layer plan");
  for (auto* block : {&ck.params.values, &ck.params.mean_sq_grad, &ck.params.mean_sq_update}) {
    block->resize(n);
    in.read(reinterpret_cast<char*>(block->data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw InputError("truncated checkpoint " + path.string());
  }
  return ck;
}

}  // namespace seizure
