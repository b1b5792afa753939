// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors

#include "dlhb/network.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "dlhb/binary_io.hpp"

namespace dlhb {

namespace {

constexpr double kNormEps = 1e-5;
constexpr std::uint64_t kTrainStream = 0x5452414eULL;  // "TRAN"
constexpr std::uint64_t kSplitStream = 0x53504c54ULL;  // "SPLT"
constexpr char kModelMagic[] = "DLHM";

// Tensor slots, in parameter order.
enum Slot : std::size_t {
  kConv1W, kConv1B, kNorm1Scale, kNorm1Shift,
  kConv2W, kConv2B, kNorm2Scale, kNorm2Shift,
  kDense1W, kDense1B, kDense2W, kDense2B,
  kOutW, kOutB, kSlotCount
};

template <typename T>
double dot(const T* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += static_cast<double>(a[i]) * b[i];
    s1 += static_cast<double>(a[i + 1]) * b[i + 1];
    s2 += static_cast<double>(a[i + 2]) * b[i + 2];
    s3 += static_cast<double>(a[i + 3]) * b[i + 3];
  }
  for (; i < n; ++i) s0 += static_cast<double>(a[i]) * b[i];
  return (s0 + s1) + (s2 + s3);
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

struct Geometry {
  std::size_t c, k, h, w, u, o;
  std::size_t plane() const { return h * w; }
};

Geometry geometry(const CnnConfig& c) {
  return {c.input_channels, c.conv_filters, c.input_rows, c.input_cols, c.fc_units, c.output_len};
}

// Patch matrix of one sample: row (ci * 9 + tap) holds input channel ci
// shifted by the tap offset, zero outside the image. cols: [cin * 9][h * w].
void im2col(const double* in, std::size_t cin, std::size_t h, std::size_t w, double* cols) {
  const std::size_t plane = h * w;
  for (std::size_t ci = 0; ci < cin; ++ci) {
    const double* src = in + ci * plane;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        double* dst = cols + (ci * 9 + static_cast<std::size_t>((dy + 1) * 3 + (dx + 1))) * plane;
        const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? w - 1 : w;
        for (std::size_t y = 0; y < h; ++y) {
          double* row = dst + y * w;
          const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h) || x1 <= x0) {
            std::fill(row, row + w, 0.0);
            continue;
          }
          std::fill(row, row + x0, 0.0);
          std::copy(src + static_cast<std::size_t>(sy) * w + x0 + dx, src + static_cast<std::size_t>(sy) * w + x1 + dx,
                    row + x0);
          std::fill(row + x1, row + w, 0.0);
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates patch gradients into an image gradient.
void col2im(const double* cols, std::size_t cin, std::size_t h, std::size_t w, double* out) {
  const std::size_t plane = h * w;
  for (std::size_t ci = 0; ci < cin; ++ci) {
    double* dst = out + ci * plane;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const double* src = cols + (ci * 9 + static_cast<std::size_t>((dy + 1) * 3 + (dx + 1))) * plane;
        const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? h - 1 : h;
        const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? w - 1 : w;
        if (x1 <= x0) continue;
        for (std::size_t y = y0; y < y1; ++y) {
          const double* s = src + y * w;
          double* d = dst + (y + dy) * w + dx;
          for (std::size_t x = x0; x < x1; ++x) d[x] += s[x];
        }
      }
    }
  }
}

// Per-thread patch buffer, reused across calls to avoid repeated large
// allocations.
std::vector<double>& scratch(std::size_t slot, std::size_t n) {
  thread_local std::vector<double> buffers[2];
  auto& v = buffers[slot];
  if (v.size() < n) v.resize(n);
  return v;
}

// 3x3 "same" convolution, stride 1, zero padding. in: B x cin x H x W.
void conv_forward(const double* in, std::size_t batch, std::size_t cin, std::size_t cout, std::size_t h,
                  std::size_t w, const double* weight, const double* bias, double* out) {
  const std::size_t plane = h * w;
  const std::size_t taps = cin * 9;
  std::vector<double>& cols = scratch(0, taps * plane);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(in + b * cin * plane, cin, h, w, cols.data());
    double* ob = out + b * cout * plane;
    for (std::size_t k = 0; k < cout; ++k) std::fill(ob + k * plane, ob + (k + 1) * plane, bias[k]);
    std::size_t k = 0;
    // Four filters per pass share each load of the patch row.
    for (; k + 4 <= cout; k += 4) {
      double* __restrict y0 = ob + k * plane;
      double* __restrict y1 = y0 + plane;
      double* __restrict y2 = y1 + plane;
      double* __restrict y3 = y2 + plane;
      for (std::size_t j = 0; j < taps; ++j) {
        const double a0 = weight[k * taps + j], a1 = weight[(k + 1) * taps + j];
        const double a2 = weight[(k + 2) * taps + j], a3 = weight[(k + 3) * taps + j];
        const double* __restrict x = cols.data() + j * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double v = x[i];
          y0[i] += a0 * v;
          y1[i] += a1 * v;
          y2[i] += a2 * v;
          y3[i] += a3 * v;
        }
      }
    }
    for (; k < cout; ++k)
      for (std::size_t j = 0; j < taps; ++j) axpy(weight[k * taps + j], cols.data() + j * plane, ob + k * plane, plane);
  }
}

// Accumulates weight/bias gradients; writes the input gradient when din != nullptr.
void conv_backward(const double* in, const double* dout, std::size_t batch, std::size_t cin, std::size_t cout,
                   std::size_t h, std::size_t w, const double* weight, double* dweight, double* dbias, double* din) {
  const std::size_t plane = h * w;
  const std::size_t taps = cin * 9;
  std::vector<double>& cols = scratch(0, taps * plane);
  std::vector<double>& dcols = scratch(1, din ? taps * plane : 0);
  if (din) std::fill(din, din + batch * cin * plane, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    if (dweight) im2col(in + b * cin * plane, cin, h, w, cols.data());
    if (din) std::fill_n(dcols.begin(), taps * plane, 0.0);
    for (std::size_t k = 0; k < cout; ++k) {
      const double* g = dout + (b * cout + k) * plane;
      if (dbias) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += g[i];
        dbias[k] += s;
      }
      const double* wk = weight + k * taps;
      for (std::size_t j = 0; j < taps; ++j) {
        if (dweight) dweight[k * taps + j] += dot(g, cols.data() + j * plane, plane);
        if (din) axpy(wk[j], g, dcols.data() + j * plane, plane);
      }
    }
    if (din) col2im(dcols.data(), cin, h, w, din + b * cin * plane);
  }
}

// Per-channel normalization over batch and spatial positions, then
// scale/shift and ReLU.
void norm_forward(const double* z, std::size_t batch, std::size_t k, std::size_t plane, Mode mode,
                  const double* scale, const double* shift, const double* run_mean, const double* run_var,
                  std::vector<double>& mean, std::vector<double>& var, double* xhat, double* act) {
  mean.assign(k, 0.0);
  var.assign(k, 0.0);
  const double n = static_cast<double>(batch * plane);
  for (std::size_t c = 0; c < k; ++c) {
    if (mode == Mode::kTrain) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = z + (b * k + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double mu = s / n;
      double v = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = z + (b * k + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) v += (p[i] - mu) * (p[i] - mu);
      }
      mean[c] = mu;
      var[c] = v / n;
    } else {
      mean[c] = run_mean[c];
      var[c] = run_var[c];
    }
    const double inv = 1.0 / std::sqrt(var[c] + kNormEps);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t at = (b * k + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double xh = (z[at + i] - mean[c]) * inv;
        xhat[at + i] = xh;
        act[at + i] = std::max(0.0, scale[c] * xh + shift[c]);
      }
    }
  }
}

// Train-mode backward of norm_forward. dact is the gradient after ReLU.
void norm_backward(const double* dact, const double* act, const double* xhat, std::size_t batch, std::size_t k,
                   std::size_t plane, const double* scale, const std::vector<double>& var, double* dscale,
                   double* dshift, double* dz) {
  const double n = static_cast<double>(batch * plane);
  for (std::size_t c = 0; c < k; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t at = (b * k + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double dy = act[at + i] > 0.0 ? dact[at + i] : 0.0;
        sum_dy += dy;
        sum_dy_xhat += dy * xhat[at + i];
      }
    }
    if (dscale) dscale[c] += sum_dy_xhat;
    if (dshift) dshift[c] += sum_dy;
    const double inv = 1.0 / std::sqrt(var[c] + kNormEps);
    const double g = scale[c];
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t at = (b * k + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double dy = act[at + i] > 0.0 ? dact[at + i] : 0.0;
        dz[at + i] = g * inv / n * (n * dy - sum_dy - xhat[at + i] * sum_dy_xhat);
      }
    }
  }
}

template <typename T>
void dense_forward(const double* in, std::size_t batch, std::size_t n_in, std::size_t n_out, const T* weight,
                   const T* bias, double* out) {
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t u = 0; u < n_out; ++u) out[b * n_out + u] = static_cast<double>(bias[u]) + dot(weight + u * n_in, in + b * n_in, n_in);
}

void dense_backward(const double* in, const double* dout, std::size_t batch, std::size_t n_in, std::size_t n_out,
                    const double* weight, double* dweight, double* dbias, double* din) {
  if (din) std::fill(din, din + batch * n_in, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t u = 0; u < n_out; ++u) {
      const double g = dout[b * n_out + u];
      if (g == 0.0) continue;
      if (dbias) dbias[u] += g;
      if (dweight) axpy(g, in + b * n_in, dweight + u * n_in, n_in);
      if (din) axpy(g, weight + u * n_in, din + b * n_in, n_in);
    }
  }
}

// ReLU then inverted dropout, in place on `pre` copied to `act`.
void relu_dropout(const std::vector<double>& pre, double p, Mode mode, Rng* rng, std::vector<double>& mask,
                  std::vector<double>& act) {
  act.resize(pre.size());
  mask.assign(pre.size(), 1.0);
  if (mode == Mode::kTrain && p > 0.0) {
    if (!rng) throw std::invalid_argument("forward: train mode with dropout needs a generator");
    std::bernoulli_distribution keep(1.0 - p);
    const double gain = 1.0 / (1.0 - p);
    for (auto& m : mask) m = keep(*rng) ? gain : 0.0;
  }
  for (std::size_t i = 0; i < pre.size(); ++i) act[i] = std::max(0.0, pre[i]) * mask[i];
}

}  // namespace

CnnConfig CnnConfig::for_dims(const Dims& dims, std::size_t conv_filters, std::size_t fc_units, double dropout_p) {
  CnnConfig c;
  c.input_rows = dims.feature_rows();
  c.input_cols = dims.feature_cols();
  c.input_channels = 3;
  c.conv_filters = conv_filters;
  c.fc_units = fc_units;
  c.dropout_p = dropout_p;
  c.output_len = dims.label_len();
  return c;
}

void CnnConfig::validate() const {
  if (input_rows == 0 || input_cols == 0 || input_channels == 0 || conv_filters == 0 || fc_units == 0 ||
      output_len == 0)
    throw std::invalid_argument("cnn: all sizes must be >= 1");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw std::invalid_argument("cnn: dropout_p must be in [0, 1)");
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw std::invalid_argument("train: lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train: momentum must be in [0, 1)");
  if (batch == 0 || epochs == 0) throw std::invalid_argument("train: batch and epochs must be >= 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw std::invalid_argument("train: val_fraction must be in [0, 1)");
}

CnnModel::CnnModel(const CnnConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const Geometry g = geometry(config_);
  const std::size_t flat = config_.flat_len();
  struct Spec {
    const char* name;
    std::vector<std::size_t> shape;
    Layer layer;
  };
  const std::vector<Spec> specs = {
      {"conv1.weight", {g.k, g.c, 3, 3}, Layer::kConv1}, {"conv1.bias", {g.k}, Layer::kConv1},
      {"norm1.scale", {g.k}, Layer::kNorm1},             {"norm1.shift", {g.k}, Layer::kNorm1},
      {"conv2.weight", {g.k, g.k, 3, 3}, Layer::kConv2}, {"conv2.bias", {g.k}, Layer::kConv2},
      {"norm2.scale", {g.k}, Layer::kNorm2},             {"norm2.shift", {g.k}, Layer::kNorm2},
      {"dense1.weight", {g.u, flat}, Layer::kDense1},    {"dense1.bias", {g.u}, Layer::kDense1},
      {"dense2.weight", {g.u, g.u}, Layer::kDense2},     {"dense2.bias", {g.u}, Layer::kDense2},
      {"output.weight", {g.o, g.u}, Layer::kOutput},     {"output.bias", {g.o}, Layer::kOutput},
  };
  std::size_t offset = 0;
  for (const auto& s : specs) {
    const std::size_t n = std::accumulate(s.shape.begin(), s.shape.end(), std::size_t{1}, std::multiplies<>());
    tensors_.push_back(Tensor{s.name, s.shape, offset, n, s.layer});
    offset += n;
  }
  params_.assign(offset, 0.0);

  Rng rng = make_rng(seed, {0x494e4954ULL});  // "INIT"
  auto glorot = [&](Slot slot, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    const Tensor& t = tensors_[slot];
    for (std::size_t i = 0; i < t.size; ++i) params_[t.offset + i] = u(rng);
  };
  glorot(kConv1W, 9.0 * g.c, 9.0 * g.k);
  glorot(kConv2W, 9.0 * g.k, 9.0 * g.k);
  glorot(kDense1W, static_cast<double>(flat), static_cast<double>(g.u));
  glorot(kDense2W, static_cast<double>(g.u), static_cast<double>(g.u));
  glorot(kOutW, static_cast<double>(g.u), static_cast<double>(g.o));
  for (Slot s : {kNorm1Scale, kNorm2Scale}) {
    const Tensor& t = tensors_[s];
    std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(t.offset), t.size, 1.0);
  }
  stats_.assign(4 * g.k, 0.0);
  std::fill_n(stats_.begin() + static_cast<std::ptrdiff_t>(g.k), g.k, 1.0);
  std::fill_n(stats_.begin() + static_cast<std::ptrdiff_t>(3 * g.k), g.k, 1.0);
  round_to_float();
}

const CnnModel::Tensor& CnnModel::tensor(std::string_view name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t;
  throw std::out_of_range("no tensor named " + std::string(name));
}

void CnnModel::round_to_float() {
  ++revision_;
  for (auto& v : params_) v = static_cast<double>(static_cast<float>(v));
  for (auto& v : stats_) v = static_cast<double>(static_cast<float>(v));
  mirror_.assign(params_.begin(), params_.end());
  mirror_revision_ = revision_;
}

std::uint64_t CnnModel::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* vec : {&params_, &stats_}) {
    for (double v : *vec) {
      const float f = static_cast<float>(v);
      h = fnv1a(&f, sizeof f, h);
    }
  }
  return h;
}

std::vector<double> to_network_input(const FeatureTensor& x) {
  const std::size_t plane = x.rows * x.cols;
  std::vector<double> out(3 * plane);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t ch = 0; ch < 3; ++ch) out[ch * plane + i] = x.data[i * 3 + ch];
  return out;
}

ForwardCache forward_batch(const CnnModel& model, std::span<const FeatureTensor* const> xs, Mode mode, Rng* rng) {
  const CnnConfig& cfg = model.config();
  const Geometry g = geometry(cfg);
  const std::size_t B = xs.size();
  if (B == 0) throw std::invalid_argument("forward: empty batch");
  const std::size_t plane = g.plane();

  ForwardCache c;
  c.model = &model;
  c.revision = model.revision();
  c.mode = mode;
  c.batch = B;

  c.input.resize(B * g.c * plane);
  for (std::size_t b = 0; b < B; ++b) {
    const FeatureTensor& x = *xs[b];
    if (x.rows != g.h || x.cols != g.w || x.data.size() != g.h * g.w * 3 || g.c != 3) {
      std::ostringstream msg;
      msg << "forward: input is " << x.rows << "x" << x.cols << "x3, network expects " << g.h << "x" << g.w << "x"
          << g.c;
      throw std::invalid_argument(msg.str());
    }
    const auto chw = to_network_input(x);
    std::copy(chw.begin(), chw.end(), c.input.begin() + static_cast<std::ptrdiff_t>(b * g.c * plane));
  }

  const auto p = model.params();
  const auto& t = model.tensors();
  auto at = [&](Slot s) { return p.data() + t[s].offset; };
  const auto pf = model.float_params();
  auto dense = [&](const std::vector<double>& in, std::size_t n_in, std::size_t n_out, Slot w, Slot b,
                   std::vector<double>& out) {
    out.resize(B * n_out);
    if (mode == Mode::kInfer && !pf.empty())
      dense_forward(in.data(), B, n_in, n_out, pf.data() + t[w].offset, pf.data() + t[b].offset, out.data());
    else
      dense_forward(in.data(), B, n_in, n_out, at(w), at(b), out.data());
  };
  const auto stats = model.running_stats();

  const std::size_t fmap = B * g.k * plane;
  c.conv1.resize(fmap);
  c.xhat1.resize(fmap);
  c.act1.resize(fmap);
  conv_forward(c.input.data(), B, g.c, g.k, g.h, g.w, at(kConv1W), at(kConv1B), c.conv1.data());
  norm_forward(c.conv1.data(), B, g.k, plane, mode, at(kNorm1Scale), at(kNorm1Shift), stats.data(),
               stats.data() + g.k, c.mean1, c.var1, c.xhat1.data(), c.act1.data());

  c.conv2.resize(fmap);
  c.xhat2.resize(fmap);
  c.act2.resize(fmap);
  conv_forward(c.act1.data(), B, g.k, g.k, g.h, g.w, at(kConv2W), at(kConv2B), c.conv2.data());
  norm_forward(c.conv2.data(), B, g.k, plane, mode, at(kNorm2Scale), at(kNorm2Shift), stats.data() + 2 * g.k,
               stats.data() + 3 * g.k, c.mean2, c.var2, c.xhat2.data(), c.act2.data());

  const std::size_t flat = cfg.flat_len();
  dense(c.act2, flat, g.u, kDense1W, kDense1B, c.dense1);
  relu_dropout(c.dense1, cfg.dropout_p, mode, rng, c.mask1, c.act3);

  dense(c.act3, g.u, g.u, kDense2W, kDense2B, c.dense2);
  relu_dropout(c.dense2, cfg.dropout_p, mode, rng, c.mask2, c.act4);

  dense(c.act4, g.u, g.o, kOutW, kOutB, c.output);
  return c;
}

std::vector<double> forward(const CnnModel& model, const FeatureTensor& x, Mode mode, Rng* rng) {
  const FeatureTensor* one[] = {&x};
  return forward_batch(model, one, mode, rng).output;
}

double loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty())
    throw std::invalid_argument("loss: prediction and target lengths differ");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

double batch_loss(const ForwardCache& cache, std::span<const double> targets) {
  if (targets.size() != cache.output.size()) throw std::invalid_argument("batch_loss: target size mismatch");
  const std::size_t o = cache.output.size() / cache.batch;
  double s = 0.0;
  for (std::size_t b = 0; b < cache.batch; ++b)
    s += loss(std::span(cache.output).subspan(b * o, o), targets.subspan(b * o, o));
  return s / static_cast<double>(cache.batch);
}

std::vector<double> backward(const CnnModel& model, const ForwardCache& c, std::span<const double> targets) {
  if (c.model != &model || c.revision != model.revision())
    throw std::logic_error("backward: forward artifacts are stale (model changed since the forward pass)");
  if (c.mode != Mode::kTrain) throw std::logic_error("backward: needs a train-mode forward pass");
  if (targets.size() != c.output.size()) throw std::invalid_argument("backward: target size mismatch");

  const CnnConfig& cfg = model.config();
  const Geometry g = geometry(cfg);
  const std::size_t B = c.batch;
  const std::size_t plane = g.plane();
  const std::size_t flat = cfg.flat_len();
  const auto p = model.params();
  const auto& t = model.tensors();
  auto w = [&](Slot s) { return p.data() + t[s].offset; };

  std::vector<double> grad(p.size(), 0.0);
  auto dw = [&](Slot s) -> double* { return model.frozen(t[s].layer) ? nullptr : grad.data() + t[s].offset; };

  std::vector<double> dout(B * g.o);
  const double norm = 2.0 / static_cast<double>(g.o * B);
  for (std::size_t i = 0; i < dout.size(); ++i) dout[i] = norm * (c.output[i] - targets[i]);

  std::vector<double> d4(B * g.u);
  dense_backward(c.act4.data(), dout.data(), B, g.u, g.o, w(kOutW), dw(kOutW), dw(kOutB), d4.data());
  for (std::size_t i = 0; i < d4.size(); ++i) d4[i] *= c.dense2[i] > 0.0 ? c.mask2[i] : 0.0;

  std::vector<double> d3(B * g.u);
  dense_backward(c.act3.data(), d4.data(), B, g.u, g.u, w(kDense2W), dw(kDense2W), dw(kDense2B), d3.data());
  for (std::size_t i = 0; i < d3.size(); ++i) d3[i] *= c.dense1[i] > 0.0 ? c.mask1[i] : 0.0;

  std::vector<double> d2(B * flat);
  dense_backward(c.act2.data(), d3.data(), B, flat, g.u, w(kDense1W), dw(kDense1W), dw(kDense1B), d2.data());

  std::vector<double> dz2(B * g.k * plane);
  norm_backward(d2.data(), c.act2.data(), c.xhat2.data(), B, g.k, plane, w(kNorm2Scale), c.var2, dw(kNorm2Scale),
                dw(kNorm2Shift), dz2.data());

  std::vector<double> d1(B * g.k * plane);
  conv_backward(c.act1.data(), dz2.data(), B, g.k, g.k, g.h, g.w, w(kConv2W), dw(kConv2W), dw(kConv2B), d1.data());

  std::vector<double> dz1(B * g.k * plane);
  norm_backward(d1.data(), c.act1.data(), c.xhat1.data(), B, g.k, plane, w(kNorm1Scale), c.var1, dw(kNorm1Scale),
                dw(kNorm1Shift), dz1.data());

  conv_backward(c.input.data(), dz1.data(), B, g.c, g.k, g.h, g.w, w(kConv1W), dw(kConv1W), dw(kConv1B), nullptr);
  return grad;
}

void update_running_stats(CnnModel& model, const ForwardCache& cache, double momentum) {
  if (cache.mode != Mode::kTrain) throw std::logic_error("update_running_stats: needs a train-mode pass");
  const std::size_t k = model.config().conv_filters;
  auto s = model.mutable_running_stats();
  for (std::size_t i = 0; i < k; ++i) {
    s[i] = momentum * s[i] + (1.0 - momentum) * cache.mean1[i];
    s[k + i] = momentum * s[k + i] + (1.0 - momentum) * cache.var1[i];
    s[2 * k + i] = momentum * s[2 * k + i] + (1.0 - momentum) * cache.mean2[i];
    s[3 * k + i] = momentum * s[3 * k + i] + (1.0 - momentum) * cache.var2[i];
  }
}

Split split_indices(std::size_t n_samples, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n_samples);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = make_rng(seed, {kSplitStream});
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::ceil((1.0 - val_fraction) * static_cast<double>(n_samples)));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(n_train, n_samples)));
  s.validation.assign(idx.begin() + static_cast<std::ptrdiff_t>(std::min(n_train, n_samples)), idx.end());
  return s;
}

namespace {

std::vector<double> gather_targets(const Dataset& ds, std::span<const std::size_t> idx) {
  std::vector<double> out;
  out.reserve(idx.size() * ds.dims.label_len());
  for (std::size_t i : idx) out.insert(out.end(), ds.samples[i].labels.begin(), ds.samples[i].labels.end());
  return out;
}

std::vector<const FeatureTensor*> gather_inputs(const Dataset& ds, std::span<const std::size_t> idx) {
  std::vector<const FeatureTensor*> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(&ds.samples[i].features);
  return out;
}

}  // namespace

double evaluate_loss(const CnnModel& model, const Dataset& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) return std::numeric_limits<double>::quiet_NaN();
  constexpr std::size_t kChunk = 64;
  double total = 0.0;
  for (std::size_t start = 0; start < indices.size(); start += kChunk) {
    const auto idx = indices.subspan(start, std::min(kChunk, indices.size() - start));
    const auto cache = forward_batch(model, gather_inputs(ds, idx), Mode::kInfer);
    total += batch_loss(cache, gather_targets(ds, idx)) * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(indices.size());
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg, const CnnConfig& net_cfg) {
  cfg.validate();
  net_cfg.validate();
  if (ds.samples.empty()) throw std::invalid_argument("train: empty dataset");
  if (net_cfg.input_rows != ds.dims.feature_rows() || net_cfg.input_cols != ds.dims.feature_cols() ||
      net_cfg.output_len != ds.dims.label_len())
    throw std::invalid_argument("train: dataset dimensions do not match the network config");

  const auto start = std::chrono::steady_clock::now();
  TrainResult res{CnnModel(net_cfg, cfg.seed), {}};
  CnnModel& model = res.model;
  TrainReport& rep = res.report;

  Split split = split_indices(ds.samples.size(), cfg.val_fraction, cfg.seed);
  Rng rng = make_rng(cfg.seed, {kTrainStream});
  const std::size_t batch = std::min(cfg.batch, split.train.size());
  std::vector<double> velocity(model.params().size(), 0.0);
  std::vector<double> best_params(model.params().begin(), model.params().end());
  std::vector<double> best_stats(model.running_stats().begin(), model.running_stats().end());
  double best_val = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(split.train.begin(), split.train.end(), rng);
    double epoch_loss = 0.0;
    std::size_t b_index = 0;
    for (std::size_t first = 0; first < split.train.size(); first += batch, ++b_index) {
      const auto idx = std::span(split.train).subspan(first, std::min(batch, split.train.size() - first));
      const auto targets = gather_targets(ds, idx);
      const ForwardCache cache = forward_batch(model, gather_inputs(ds, idx), Mode::kTrain, &rng);
      const double l = batch_loss(cache, targets);
      if (!std::isfinite(l)) {
        std::ostringstream msg;
        msg << "train: non-finite loss at epoch " << epoch + 1 << ", batch " << b_index + 1;
        throw TrainingError(msg.str());
      }
      epoch_loss += l * static_cast<double>(idx.size());
      const std::vector<double> grad = backward(model, cache, targets);
      update_running_stats(model, cache);
      auto w = model.mutable_params();
      for (std::size_t i = 0; i < w.size(); ++i) {
        velocity[i] = cfg.momentum * velocity[i] - cfg.lr * grad[i];
        w[i] += velocity[i];
      }
    }
    rep.train_loss.push_back(epoch_loss / static_cast<double>(split.train.size()));
    const double val = evaluate_loss(model, ds, split.validation);
    rep.val_loss.push_back(val);
    if (split.validation.empty() || val < best_val) {
      best_val = val;
      rep.best_epoch = epoch;
      best_params.assign(model.params().begin(), model.params().end());
      best_stats.assign(model.running_stats().begin(), model.running_stats().end());
    }
  }
  std::copy(best_params.begin(), best_params.end(), model.mutable_params().begin());
  std::copy(best_stats.begin(), best_stats.end(), model.mutable_running_stats().begin());
  model.round_to_float();
  rep.checksum = model.checksum();
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

HybridBeamformer predict_beamformers(const CnnModel& model, const FrequencyChannel& fc, const Dims& dims) {
  if (fc.n_tx() != dims.n_tx || fc.n_rx() != dims.n_rx || fc.n_subcarriers() != dims.n_subcarriers)
    throw std::invalid_argument("predict_beamformers: channel dimensions do not match the model");
  if (model.config().output_len != dims.label_len())
    throw std::invalid_argument("predict_beamformers: model output does not match beamformer dimensions");
  const std::vector<double> z = forward(model, build_features(fc), Mode::kInfer);
  return reconstruct_beamformers(z, dims);
}

// Model file layer table. Each layer: u32 kind, u32 n_attrs, attrs,
// u32 n_tensors, per tensor u32 rank + dims. Float32 payload follows the
// table in the same order.
namespace {

enum LayerKind : std::uint32_t { kInput = 1, kConv = 2, kNorm = 3, kDense = 4, kDropout = 5, kRegression = 6 };

struct LayerRecord {
  std::uint32_t kind;
  std::vector<std::uint32_t> attrs;
  std::vector<std::vector<std::size_t>> shapes;
};

std::vector<LayerRecord> layer_table(const CnnModel& model) {
  const CnnConfig& c = model.config();
  const auto& t = model.tensors();
  const std::uint32_t p_bits = std::bit_cast<std::uint32_t>(static_cast<float>(c.dropout_p));
  const std::size_t k = c.conv_filters;
  auto u32 = [](std::size_t v) { return static_cast<std::uint32_t>(v); };
  return {
      {kInput, {u32(c.input_rows), u32(c.input_cols), u32(c.input_channels)}, {}},
      {kConv, {3}, {t[kConv1W].shape, t[kConv1B].shape}},
      {kNorm, {1}, {t[kNorm1Scale].shape, t[kNorm1Shift].shape, {k}, {k}}},
      {kConv, {3}, {t[kConv2W].shape, t[kConv2B].shape}},
      {kNorm, {1}, {t[kNorm2Scale].shape, t[kNorm2Shift].shape, {k}, {k}}},
      {kDense, {1}, {t[kDense1W].shape, t[kDense1B].shape}},
      {kDropout, {p_bits}, {}},
      {kDense, {1}, {t[kDense2W].shape, t[kDense2B].shape}},
      {kDropout, {p_bits}, {}},
      {kRegression, {}, {t[kOutW].shape, t[kOutB].shape}},
  };
}

// Parameter payload in table order: norm layers carry scale, shift,
// running mean, running variance.
std::vector<double> payload(const CnnModel& model) {
  const auto p = model.params();
  const auto s = model.running_stats();
  const auto& t = model.tensors();
  const std::size_t k = model.config().conv_filters;
  std::vector<double> out;
  out.reserve(p.size() + s.size());
  auto put = [&](Slot slot) { out.insert(out.end(), p.begin() + t[slot].offset, p.begin() + t[slot].offset + t[slot].size); };
  auto put_stats = [&](std::size_t which) { out.insert(out.end(), s.begin() + which * k, s.begin() + (which + 1) * k); };
  put(kConv1W); put(kConv1B);
  put(kNorm1Scale); put(kNorm1Shift); put_stats(0); put_stats(1);
  put(kConv2W); put(kConv2B);
  put(kNorm2Scale); put(kNorm2Shift); put_stats(2); put_stats(3);
  put(kDense1W); put(kDense1B);
  put(kDense2W); put(kDense2B);
  put(kOutW); put(kOutB);
  return out;
}

}  // namespace

void save_model(const CnnModel& model, const std::filesystem::path& path) {
  ByteWriter w;
  w.bytes(std::string_view(kModelMagic, 4));
  w.u16(kModelFormatVersion);
  const auto table = layer_table(model);
  w.u32(static_cast<std::uint32_t>(table.size()));
  for (const auto& l : table) {
    w.u32(l.kind);
    w.u32(static_cast<std::uint32_t>(l.attrs.size()));
    for (auto a : l.attrs) w.u32(a);
    w.u32(static_cast<std::uint32_t>(l.shapes.size()));
    for (const auto& s : l.shapes) {
      w.u32(static_cast<std::uint32_t>(s.size()));
      for (auto d : s) w.u32(static_cast<std::uint32_t>(d));
    }
  }
  for (double v : payload(model)) w.f32(static_cast<float>(v));
  write_file_atomic(path, w.buffer());
}

CnnModel load_model(const std::filesystem::path& path) {
  ByteReader r(read_file(path));
  if (r.bytes(4) != std::string_view(kModelMagic, 4)) throw FormatError("model: bad magic at offset 0");
  const std::uint16_t version = r.u16();
  if (version != kModelFormatVersion)
    throw FormatError("model: unsupported version " + std::to_string(version) + " at offset 4");
  const std::uint32_t n_layers = r.u32();
  if (n_layers != 10) throw FormatError("model: expected 10 layers, file has " + std::to_string(n_layers));

  std::vector<LayerRecord> table(n_layers);
  for (auto& l : table) {
    l.kind = r.u32();
    l.attrs.resize(r.u32());
    if (l.attrs.size() > 16) throw FormatError("model: implausible attribute count at offset " + std::to_string(r.offset()));
    for (auto& a : l.attrs) a = r.u32();
    l.shapes.resize(r.u32());
    if (l.shapes.size() > 8) throw FormatError("model: implausible tensor count at offset " + std::to_string(r.offset()));
    for (auto& s : l.shapes) {
      s.resize(r.u32());
      if (s.size() > 8) throw FormatError("model: implausible tensor rank at offset " + std::to_string(r.offset()));
      for (auto& d : s) d = r.u32();
    }
  }
  const std::uint32_t expected_kinds[] = {kInput, kConv, kNorm, kConv, kNorm, kDense, kDropout, kDense, kDropout,
                                          kRegression};
  for (std::size_t i = 0; i < n_layers; ++i)
    if (table[i].kind != expected_kinds[i]) throw FormatError("model: unexpected layer kind at layer " + std::to_string(i));
  if (table[0].attrs.size() != 3 || table[1].shapes.size() != 2 || table[5].shapes.size() != 2 ||
      table[6].attrs.size() != 1 || table[9].shapes.size() != 2 || table[1].shapes[0].size() != 4 ||
      table[5].shapes[0].size() != 2 || table[9].shapes[0].size() != 2)
    throw FormatError("model: malformed layer table");

  CnnConfig cfg;
  cfg.input_rows = table[0].attrs[0];
  cfg.input_cols = table[0].attrs[1];
  cfg.input_channels = table[0].attrs[2];
  cfg.conv_filters = table[1].shapes[0][0];
  cfg.fc_units = table[5].shapes[0][0];
  cfg.dropout_p = std::bit_cast<float>(table[6].attrs[0]);
  cfg.output_len = table[9].shapes[0][0];
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("model: invalid configuration: ") + e.what());
  }
  CnnModel model(cfg, 0);
  const auto expected = layer_table(model);
  for (std::size_t i = 0; i < n_layers; ++i)
    if (expected[i].attrs != table[i].attrs || expected[i].shapes != table[i].shapes)
      throw FormatError("model: shape table mismatch at layer " + std::to_string(i));

  const std::size_t n_values = payload(model).size();
  if (r.remaining() != 4 * n_values) {
    std::ostringstream msg;
    msg << "model: payload at offset " << r.offset() << " is " << r.remaining() << " bytes, expected " << 4 * n_values
        << (r.remaining() < 4 * n_values ? " (truncated)" : " (trailing data)");
    throw FormatError(msg.str());
  }
  auto p = model.mutable_params();
  auto s = model.mutable_running_stats();
  const auto& t = model.tensors();
  const std::size_t k = cfg.conv_filters;
  auto get = [&](Slot slot) {
    for (std::size_t i = 0; i < t[slot].size; ++i) p[t[slot].offset + i] = r.f32();
  };
  auto get_stats = [&](std::size_t which) {
    for (std::size_t i = 0; i < k; ++i) s[which * k + i] = r.f32();
  };
  get(kConv1W); get(kConv1B);
  get(kNorm1Scale); get(kNorm1Shift); get_stats(0); get_stats(1);
  get(kConv2W); get(kConv2B);
  get(kNorm2Scale); get(kNorm2Shift); get_stats(2); get_stats(3);
  get(kDense1W); get(kDense1B);
  get(kDense2W); get(kDense2B);
  get(kOutW); get(kOutB);
  model.round_to_float();
  return model;
}

}  // namespace dlhb
