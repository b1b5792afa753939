// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors

#ifndef DLHB_RNG_HPP
#define DLHB_RNG_HPP

#include <complex>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace dlhb {

using Rng = std::mt19937_64;

/// Independent generator for the stream identified by (seed, tags...).
/// Streams with different tags never share state, so work items may be
/// generated in any order.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * (tags.size() + 1) + 1);
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  words.push_back(static_cast<std::uint32_t>(tags.size()));
  for (auto t : tags) push(t);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

/// Circularly-symmetric complex Gaussian sample with E|z|² = variance.
inline std::complex<double> complex_normal(Rng& rng, double variance) {
  std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
  const double re = n(rng);
  const double im = n(rng);
  return {re, im};
}

}  // namespace dlhb

#endif  // DLHB_RNG_HPP
