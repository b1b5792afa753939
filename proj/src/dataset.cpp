// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors

#include "dlhb/dataset.hpp"

#include <cmath>
#include <iostream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace dlhb {

namespace {

constexpr std::uint64_t kCorruptStream = 0x4e4f4953ULL;  // "NOIS"
constexpr char kMagic[] = "DLHB";
constexpr std::size_t kHeaderBytes = 4 + 2 + 6 * 4;

double principal_phase(cplx v) {
  const double a = std::arg(v);
  return a >= std::numbers::pi ? a - 2.0 * std::numbers::pi : a;
}

// Column-major walk over a matrix.
template <typename F>
void for_each_colmajor(const CMat& a, F f) {
  for (std::size_t c = 0; c < a.cols(); ++c)
    for (std::size_t r = 0; r < a.rows(); ++r) f(a(r, c));
}

template <typename F>
void fill_colmajor(CMat& a, F next) {
  for (std::size_t c = 0; c < a.cols(); ++c)
    for (std::size_t r = 0; r < a.rows(); ++r) a(r, c) = next();
}

}  // namespace

Dims DatasetConfig::dims() const {
  return Dims{channel.n_tx, channel.n_rx, n_rf, link.n_streams, channel.n_subcarriers};
}

void DatasetConfig::validate() const {
  if (n_realizations == 0 || g_copies == 0) throw std::invalid_argument("dataset: N and G must be >= 1");
  if (snr_train_db.empty()) throw std::invalid_argument("dataset: snr_train_db must be nonempty");
  channel.validate();
  link.validate();
  mo.validate();
  if (n_rf == 0 || n_rf > channel.n_tx || n_rf > channel.n_rx)
    throw std::invalid_argument("dataset: need 1 <= N_RF <= min(N_T, N_R)");
  if (link.n_streams > n_rf) throw std::invalid_argument("dataset: need N_S <= N_RF");
}

double corruption_noise_var(const FrequencyChannel& fc, double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  std::size_t count = 0;
  for (const auto& h : fc.per_subcarrier) count += h.size();
  if (count == 0) throw std::invalid_argument("corrupt_channel: empty channel");
  const double mean_power = fc.energy() / static_cast<double>(count);
  return mean_power * std::pow(10.0, -snr_db / 20.0);
}

FrequencyChannel corrupt_channel(const FrequencyChannel& fc, double snr_db, Rng& rng) {
  const double var = corruption_noise_var(fc, snr_db);
  FrequencyChannel out = fc;
  if (var == 0.0) return out;
  for (auto& h : out.per_subcarrier)
    for (auto& e : h.values()) e += complex_normal(rng, var);
  return out;
}

FeatureTensor build_features(const FrequencyChannel& fc) {
  const std::size_t M = fc.n_subcarriers();
  const std::size_t nr = fc.n_rx();
  const std::size_t nt = fc.n_tx();
  FeatureTensor x{M * nr, nt, std::vector<float>(M * nr * nt * 3)};
  for (std::size_t m = 0; m < M; ++m) {
    const CMat& h = fc.per_subcarrier[m];
    if (h.rows() != nr || h.cols() != nt) throw std::invalid_argument("build_features: ragged channel");
    for (std::size_t i = 0; i < nr; ++i) {
      for (std::size_t j = 0; j < nt; ++j) {
        const std::size_t at = ((m * nr + i) * nt + j) * 3;
        x.data[at + 0] = static_cast<float>(std::abs(h(i, j)));
        x.data[at + 1] = static_cast<float>(h(i, j).real());
        x.data[at + 2] = static_cast<float>(h(i, j).imag());
      }
    }
  }
  return x;
}

LabelVector build_labels(const HybridBeamformer& bf) {
  LabelVector z;
  const std::size_t M = bf.f_bb.size();
  z.reserve(bf.f_rf.size() + bf.w_rf.size() + 2 * M * (bf.f_bb.front().size() + bf.w_bb.front().size()));
  for_each_colmajor(bf.f_rf, [&](cplx v) { z.push_back(principal_phase(v)); });
  for_each_colmajor(bf.w_rf, [&](cplx v) { z.push_back(principal_phase(v)); });
  for (std::size_t m = 0; m < M; ++m) {
    for_each_colmajor(bf.f_bb[m], [&](cplx v) { z.push_back(v.real()); });
    for_each_colmajor(bf.f_bb[m], [&](cplx v) { z.push_back(v.imag()); });
    for_each_colmajor(bf.w_bb[m], [&](cplx v) { z.push_back(v.real()); });
    for_each_colmajor(bf.w_bb[m], [&](cplx v) { z.push_back(v.imag()); });
  }
  return z;
}

HybridBeamformer reconstruct_beamformers(std::span<const double> z, const Dims& dims) {
  if (z.size() != dims.label_len()) {
    std::ostringstream msg;
    msg << "reconstruct_beamformers: label length " << z.size() << " does not match expected " << dims.label_len();
    throw std::invalid_argument(msg.str());
  }
  std::size_t at = 0;
  auto next_phase = [&] { return std::polar(1.0, z[at++]); };
  HybridBeamformer bf;
  bf.f_rf = CMat(dims.n_tx, dims.n_rf);
  bf.w_rf = CMat(dims.n_rx, dims.n_rf);
  fill_colmajor(bf.f_rf, next_phase);
  fill_colmajor(bf.w_rf, next_phase);

  const std::size_t block = dims.n_rf * dims.n_streams;
  auto read_complex = [&](CMat& out) {
    const std::size_t re = at;
    const std::size_t im = at + block;
    std::size_t k = 0;
    fill_colmajor(out, [&] {
      const cplx v{z[re + k], z[im + k]};
      ++k;
      return v;
    });
    at += 2 * block;
  };
  bf.f_bb.assign(dims.n_subcarriers, CMat(dims.n_rf, dims.n_streams));
  bf.w_bb.assign(dims.n_subcarriers, CMat(dims.n_rf, dims.n_streams));
  for (std::size_t m = 0; m < dims.n_subcarriers; ++m) {
    read_complex(bf.f_bb[m]);
    read_complex(bf.w_bb[m]);
  }
  bf.f_bb = normalize_power(bf.f_rf, bf.f_bb);
  return bf;
}

Rng corruption_rng(std::uint64_t seed, std::uint64_t n, std::uint64_t g) {
  return make_rng(seed, {kCorruptStream, n, g});
}

double train_snr_for_copy(const DatasetConfig& config, std::size_t g) {
  return config.snr_train_db[g % config.snr_train_db.size()];
}

Dataset generate(const DatasetConfig& config, GenerateStats* stats) {
  config.validate();
  Dataset ds;
  ds.dims = config.dims();
  const std::size_t total = config.n_realizations * config.g_copies;
  ds.samples.reserve(total);
  std::size_t skipped = 0;

  for (std::size_t n = 0; n < config.n_realizations; ++n) {
    const FrequencyChannel clean = realize_channel(config.channel, n);
    for (std::size_t g = 0; g < config.g_copies; ++g) {
      Rng rng = corruption_rng(config.seed, n, g);
      const FrequencyChannel noisy = corrupt_channel(clean, train_snr_for_copy(config, g), rng);
      try {
        const HybridDesign design =
            design_hybrid(config.clean_labels ? clean : noisy, config.link, config.n_rf, config.mo);
        const LabelVector z = build_labels(design.bf);
        ds.samples.push_back(Sample{build_features(noisy), std::vector<float>(z.begin(), z.end())});
      } catch (const NumericError& e) {
        ++skipped;
        std::cerr << "dlhb: skipping sample (n=" << n << ", g=" << g << "): " << e.what() << "\n";
        if (static_cast<double>(skipped) > 0.01 * static_cast<double>(total))
          throw NumericError("dataset generation aborted: more than 1% of samples failed");
      }
    }
  }
  if (stats) stats->skipped = skipped;
  return ds;
}

std::uint64_t dataset_file_size(const Dims& dims, std::uint64_t n_samples) {
  return kHeaderBytes + n_samples * 4ULL * (dims.feature_size() + dims.label_len());
}

void save(const Dataset& ds, const std::filesystem::path& path) {
  const Dims& d = ds.dims;
  ByteWriter w;
  w.bytes(std::string_view(kMagic, 4));
  w.u16(kDatasetFormatVersion);
  for (std::size_t v : {d.n_tx, d.n_rx, d.n_rf, d.n_streams, d.n_subcarriers, ds.samples.size()})
    w.u32(static_cast<std::uint32_t>(v));
  for (const auto& s : ds.samples) {
    if (s.features.data.size() != d.feature_size() || s.labels.size() != d.label_len())
      throw std::invalid_argument("save: sample does not match dataset dimensions");
    for (float v : s.features.data) w.f32(v);
    for (float v : s.labels) w.f32(v);
  }
  write_file_atomic(path, w.buffer());
}

Dataset load(const std::filesystem::path& path) {
  ByteReader r(read_file(path));
  if (r.bytes(4) != std::string_view(kMagic, 4)) throw FormatError("dataset: bad magic at offset 0");
  const std::uint16_t version = r.u16();
  if (version != kDatasetFormatVersion)
    throw FormatError("dataset: unsupported version " + std::to_string(version) + " at offset 4");
  Dataset ds;
  std::uint32_t fields[6];
  for (int i = 0; i < 6; ++i) {
    const std::size_t at = r.offset();
    fields[i] = r.u32();
    if (fields[i] == 0 && i < 5) throw FormatError("dataset: zero dimension at offset " + std::to_string(at));
  }
  ds.dims = Dims{fields[0], fields[1], fields[2], fields[3], fields[4]};
  const std::uint32_t n_samples = fields[5];
  const std::uint64_t expected = dataset_file_size(ds.dims, n_samples) - kHeaderBytes;
  if (r.remaining() != expected) {
    std::ostringstream msg;
    msg << "dataset: payload at offset " << r.offset() << " is " << r.remaining() << " bytes, expected " << expected
        << (r.remaining() < expected ? " (truncated)" : " (trailing data)");
    throw FormatError(msg.str());
  }
  ds.samples.resize(n_samples);
  for (auto& s : ds.samples) {
    s.features.rows = ds.dims.feature_rows();
    s.features.cols = ds.dims.feature_cols();
    s.features.data.resize(ds.dims.feature_size());
    for (auto& v : s.features.data) v = r.f32();
    s.labels.resize(ds.dims.label_len());
    for (auto& v : s.labels) v = r.f32();
  }
  return ds;
}

}  // namespace dlhb
