// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors

#include "dlhb/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace dlhb {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::uint64_t kChannelStream = 0x43484e4cULL;  // "CHNL"

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(kPi * x) / (kPi * x); }

double clamp_angle(double a) {
  return std::clamp(a, -kPi / 2.0, std::nextafter(kPi / 2.0, 0.0));
}

// Shift whose effective angle mean - shift stays inside [-pi/2, pi/2).
double shift_to(double mean, double angle) {
  double shift = mean - angle;
  while (mean - shift >= kPi / 2.0) shift = std::nextafter(shift, kPi);
  while (mean - shift < -kPi / 2.0) shift = std::nextafter(shift, -kPi);
  return shift;
}

}  // namespace

std::size_t ChannelConfig::delay_taps() const {
  return cp_len != 0 ? cp_len : std::max<std::size_t>(1, n_subcarriers / 4);
}

void ChannelConfig::validate() const {
  const std::pair<const char*, std::size_t> counts[] = {
      {"n_tx", n_tx}, {"n_rx", n_rx}, {"n_subcarriers", n_subcarriers}, {"n_clusters", n_clusters}, {"n_rays", n_rays}};
  for (const auto& [name, value] : counts)
    if (value == 0) throw std::invalid_argument(std::string("channel: ") + name + " must be >= 1");
  if (!(symbol_period > 0.0)) throw std::invalid_argument("channel: symbol_period must be > 0");
  if (!(angle_spread_deg >= 0.0)) throw std::invalid_argument("channel: angle_spread_deg must be >= 0");
  if (!(ray_delay_span >= 0.0)) throw std::invalid_argument("channel: ray_delay_span must be >= 0");
}

double FrequencyChannel::energy() const {
  double e = 0.0;
  for (const auto& h : per_subcarrier) e += h.frob_norm2();
  return e;
}

std::vector<cplx> steering_ula(std::size_t n, double angle) {
  std::vector<cplx> a(n);
  const double step = kPi * std::sin(angle);
  for (std::size_t k = 0; k < n; ++k) a[k] = std::polar(1.0, step * static_cast<double>(k));
  return a;
}

double pulse(double t, double symbol_period) {
  const double x = t / symbol_period;
  if (std::abs(x) > 4.0) return 0.0;
  const double denom = 1.0 - 4.0 * x * x;
  // Removable singularity at |t| = T_s / 2.
  if (std::abs(denom) < 1e-10) return 0.25 * kPi * sinc(0.5);
  return sinc(x) * std::cos(kPi * x) / denom;
}

ClusterRealization draw_clusters(const ChannelConfig& config, Rng& rng) {
  config.validate();
  const std::size_t L = config.n_clusters;
  const std::size_t R = config.n_rays;
  const double max_delay = static_cast<double>(config.delay_taps() - 1) * config.symbol_period;
  const double spread = config.angle_spread_deg * kPi / 180.0;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> shift(0.0, 1.0);

  ClusterRealization out;
  out.cluster_delays.resize(L);
  out.ray_delays.resize(R);
  out.mean_aoa.resize(L);
  out.mean_aod.resize(L);
  out.aoa_shifts.resize(L * R);
  out.aod_shifts.resize(L * R);
  out.gains.resize(L * R);

  for (auto& d : out.cluster_delays) d = max_delay * unit(rng);
  for (auto& d : out.ray_delays) d = config.ray_delay_span * config.symbol_period * unit(rng);
  for (std::size_t l = 0; l < L; ++l) {
    out.mean_aoa[l] = -kPi / 2.0 + kPi * unit(rng);
    out.mean_aod[l] = -kPi / 2.0 + kPi * unit(rng);
  }
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t r = 0; r < R; ++r) {
      const std::size_t i = l * R + r;
      // Shifts are stored so that the effective ray angle mean - shift stays in [-pi/2, pi/2).
      const double aoa = clamp_angle(out.mean_aoa[l] - spread * shift(rng));
      const double aod = clamp_angle(out.mean_aod[l] - spread * shift(rng));
      out.aoa_shifts[i] = shift_to(out.mean_aoa[l], aoa);
      out.aod_shifts[i] = shift_to(out.mean_aod[l], aod);
      out.gains[i] = complex_normal(rng, 1.0);
    }
  }
  return out;
}

DelayChannel delay_channel(const ClusterRealization& real, const ChannelConfig& config) {
  const std::size_t L = config.n_clusters;
  const std::size_t R = config.n_rays;
  if (real.cluster_delays.size() != L || real.ray_delays.size() != R || real.gains.size() != L * R ||
      real.aoa_shifts.size() != L * R || real.aod_shifts.size() != L * R || real.mean_aoa.size() != L ||
      real.mean_aod.size() != L)
    throw std::invalid_argument("delay_channel: realization does not match config");

  const std::size_t D = config.delay_taps();
  const double beta = std::sqrt(static_cast<double>(config.n_tx * config.n_rx) / static_cast<double>(L));

  DelayChannel dc;
  dc.taps.assign(D, CMat(config.n_rx, config.n_tx));
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t r = 0; r < R; ++r) {
      const std::size_t i = l * R + r;
      const auto ar = steering_ula(config.n_rx, real.mean_aoa[l] - real.aoa_shifts[i]);
      const auto at = steering_ula(config.n_tx, real.mean_aod[l] - real.aod_shifts[i]);
      for (std::size_t d = 0; d < D; ++d) {
        const double p = pulse(static_cast<double>(d) * config.symbol_period - real.cluster_delays[l] -
                                   real.ray_delays[r],
                               config.symbol_period);
        if (p == 0.0) continue;
        const cplx w = beta * real.gains[i] * p;
        CMat& h = dc.taps[d];
        for (std::size_t a = 0; a < config.n_rx; ++a) {
          const cplx wa = w * ar[a];
          for (std::size_t b = 0; b < config.n_tx; ++b) h(a, b) += wa * std::conj(at[b]);
        }
      }
    }
  }
  return dc;
}

FrequencyChannel freq_channel(const DelayChannel& dc, std::size_t m_subcarriers) {
  if (m_subcarriers == 0) throw std::invalid_argument("freq_channel: need at least one subcarrier");
  if (dc.taps.empty()) throw std::invalid_argument("freq_channel: no delay taps");
  const std::size_t rows = dc.taps.front().rows();
  const std::size_t cols = dc.taps.front().cols();
  FrequencyChannel fc;
  fc.per_subcarrier.reserve(m_subcarriers);
  for (std::size_t m = 1; m <= m_subcarriers; ++m) {
    CMat h(rows, cols);
    for (std::size_t d = 0; d < dc.taps.size(); ++d) {
      // Reduce m*d modulo M before forming the angle to keep the phase exact.
      const std::size_t k = (m * d) % m_subcarriers;
      const cplx w = std::polar(1.0, -2.0 * kPi * static_cast<double>(k) / static_cast<double>(m_subcarriers));
      const auto src = dc.taps[d].values();
      auto dst = h.values();
      for (std::size_t e = 0; e < src.size(); ++e) dst[e] += src[e] * w;
    }
    fc.per_subcarrier.push_back(std::move(h));
  }
  return fc;
}

FrequencyChannel realize_channel(const ChannelConfig& config, std::uint64_t index) {
  Rng rng = make_rng(config.seed, {kChannelStream, index});
  const auto real = draw_clusters(config, rng);
  return freq_channel(delay_channel(real, config), config.n_subcarriers);
}

}  // namespace dlhb
