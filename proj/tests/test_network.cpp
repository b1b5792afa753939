// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors

#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "dlhb/network.hpp"
#include "test_util.hpp"

using namespace dlhb;

namespace {

namespace fs = std::filesystem;

// 4x4x3 input, 2 filters, 8 units, 14 outputs.
const Dims kTinyDims{4, 2, 1, 1, 2};

CnnConfig tiny_net(double dropout = 0.0) {
  CnnConfig c = CnnConfig::for_dims(kTinyDims, 2, 8, dropout);
  REQUIRE(c.input_rows == 4);
  REQUIRE(c.input_cols == 4);
  return c;
}

FeatureTensor random_features(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureTensor x{rows, cols, std::vector<float>(rows * cols * 3)};
  for (auto& v : x.data) v = static_cast<float>(n(rng));
  return x;
}

Dataset random_dataset(std::size_t n_samples, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Dataset ds;
  ds.dims = kTinyDims;
  for (std::size_t i = 0; i < n_samples; ++i) {
    Sample s{random_features(4, 4, rng), std::vector<float>(kTinyDims.label_len())};
    for (auto& v : s.labels) v = static_cast<float>(n(rng));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void randomize(CnnModel& m, std::uint64_t seed, double scale = 0.5) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& v : m.mutable_params()) v = u(rng);
  for (const char* name : {"norm1.scale", "norm2.scale"}) {
    const auto& t = m.tensor(name);
    for (std::size_t i = 0; i < t.size; ++i) m.mutable_params()[t.offset + i] = 1.0 + u(rng);
  }
}

// Straightforward reference forward pass in infer mode, written with
// direct loops over the network definition.
std::vector<double> reference_forward(const CnnModel& m, const FeatureTensor& x) {
  const CnnConfig& c = m.config();
  const std::size_t H = c.input_rows, W = c.input_cols, K = c.conv_filters, U = c.fc_units;
  const auto p = m.params();
  const auto s = m.running_stats();
  auto T = [&](const char* name) { return p.data() + m.tensor(name).offset; };

  auto conv = [&](const std::vector<double>& in, std::size_t cin, const double* w, const double* b) {
    std::vector<double> out(K * H * W);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx) {
          double acc = b[k];
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                const long sy = long(y) + dy, sx = long(xx) + dx;
                if (sy < 0 || sx < 0 || sy >= long(H) || sx >= long(W)) continue;
                acc += w[((k * cin + ci) * 3 + std::size_t(dy + 1)) * 3 + std::size_t(dx + 1)] *
                       in[(ci * H + std::size_t(sy)) * W + std::size_t(sx)];
              }
          out[(k * H + y) * W + xx] = acc;
        }
    return out;
  };
  auto norm = [&](std::vector<double> z, const double* scale, const double* shift, const double* mean,
                  const double* var) {
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t i = 0; i < H * W; ++i) {
        double& v = z[k * H * W + i];
        v = std::max(0.0, scale[k] * (v - mean[k]) / std::sqrt(var[k] + 1e-5) + shift[k]);
      }
    return z;
  };
  auto dense = [&](const std::vector<double>& in, std::size_t n_out, const double* w, const double* b, bool relu) {
    std::vector<double> out(n_out);
    for (std::size_t o = 0; o < n_out; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < in.size(); ++i) acc += w[o * in.size() + i] * in[i];
      out[o] = relu ? std::max(0.0, acc) : acc;
    }
    return out;
  };

  std::vector<double> in(3 * H * W);
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx) in[(ch * H + y) * W + xx] = x.at(y, xx, ch);
  auto a1 = norm(conv(in, 3, T("conv1.weight"), T("conv1.bias")), T("norm1.scale"), T("norm1.shift"), s.data(),
                 s.data() + K);
  auto a2 = norm(conv(a1, K, T("conv2.weight"), T("conv2.bias")), T("norm2.scale"), T("norm2.shift"),
                 s.data() + 2 * K, s.data() + 3 * K);
  auto d1 = dense(a2, U, T("dense1.weight"), T("dense1.bias"), true);
  auto d2 = dense(d1, U, T("dense2.weight"), T("dense2.bias"), true);
  return dense(d2, c.output_len, T("output.weight"), T("output.bias"), false);
}

fs::path temp_file(const char* name) { return fs::temp_directory_path() / (std::string("dlhb_net_") + name); }

}  // namespace

TEST_CASE("infer-mode forward matches the reference network") {
  CnnModel m(tiny_net(0.5), 3);
  randomize(m, 4);
  auto st = m.mutable_running_stats();
  for (std::size_t i = 0; i < st.size(); ++i) st[i] = i % 4 < 2 ? 0.1 * double(i) : 0.5 + 0.2 * double(i);
  Rng rng = make_rng(5);
  for (int rep = 0; rep < 3; ++rep) {
    const FeatureTensor x = random_features(4, 4, rng);
    const auto out = forward(m, x, Mode::kInfer);
    const auto ref = reference_forward(m, x);
    REQUIRE(out.size() == ref.size());
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
  m.round_to_float();
  const FeatureTensor x = random_features(4, 4, rng);
  const auto out = forward(m, x, Mode::kInfer);
  const auto ref = reference_forward(m, x);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("a network with zero weights outputs its regression bias") {
  CnnModel m(tiny_net(), 1);
  for (auto& v : m.mutable_params()) v = 0.0;
  const auto& b = m.tensor("output.bias");
  for (std::size_t i = 0; i < b.size; ++i) m.mutable_params()[b.offset + i] = double(i) - 3.0;
  Rng rng = make_rng(2);
  const auto out = forward(m, random_features(4, 4, rng), Mode::kInfer);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == double(i) - 3.0);
}

TEST_CASE("infer mode is deterministic and train-mode dropout is seeded") {
  CnnModel m(tiny_net(0.5), 7);
  Rng rng = make_rng(8);
  const FeatureTensor x = random_features(4, 4, rng);
  CHECK(forward(m, x, Mode::kInfer) == forward(m, x, Mode::kInfer));
  const FeatureTensor* xs[] = {&x, &x};
  Rng r1 = make_rng(9), r2 = make_rng(9), r3 = make_rng(10);
  const auto a = forward_batch(m, xs, Mode::kTrain, &r1);
  const auto b = forward_batch(m, xs, Mode::kTrain, &r2);
  const auto c = forward_batch(m, xs, Mode::kTrain, &r3);
  CHECK(a.output == b.output);
  CHECK(a.mask1 != c.mask1);
  for (double v : a.mask1) CHECK((v == 0.0 || v == 2.0));
  CHECK_THROWS(forward_batch(m, xs, Mode::kTrain, nullptr));
}

TEST_CASE("backward matches central finite differences") {
  CnnModel m(tiny_net(0.0), 11);
  randomize(m, 12);
  Rng rng = make_rng(13);
  std::vector<FeatureTensor> xs;
  for (int i = 0; i < 3; ++i) xs.push_back(random_features(4, 4, rng));
  const FeatureTensor* ptrs[] = {&xs[0], &xs[1], &xs[2]};
  std::vector<double> targets(3 * m.config().output_len);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& t : targets) t = n(rng);

  const auto cache = forward_batch(m, ptrs, Mode::kTrain);
  const std::vector<double> grad = backward(m, cache, targets);
  const double h = 1e-6;
  std::size_t failures = 0;
  for (const auto& t : m.tensors()) {
    for (std::size_t i = 0; i < t.size; ++i) {
      const std::size_t k = t.offset + i;
      const double saved = m.params()[k];
      m.mutable_params()[k] = saved + h;
      const double up = batch_loss(forward_batch(m, ptrs, Mode::kTrain), targets);
      m.mutable_params()[k] = saved - h;
      const double down = batch_loss(forward_batch(m, ptrs, Mode::kTrain), targets);
      m.mutable_params()[k] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double rel = std::abs(fd - grad[k]) / std::max({std::abs(fd), std::abs(grad[k]), 1e-6});
      if (rel > 1e-4) {
        ++failures;
        MESSAGE(t.name << "[" << i << "]: analytic " << grad[k] << " vs " << fd);
      }
    }
  }
  CHECK(failures == 0);
}

TEST_CASE("frozen layers receive zero gradient") {
  CnnModel m(tiny_net(), 1);
  m.set_frozen(Layer::kConv2, true);
  m.set_frozen(Layer::kOutput, true);
  Rng rng = make_rng(1);
  const FeatureTensor x = random_features(4, 4, rng);
  const FeatureTensor* xs[] = {&x, &x};
  const auto cache = forward_batch(m, xs, Mode::kTrain);
  const auto g = backward(m, cache, std::vector<double>(2 * m.config().output_len, 1.0));
  for (const auto& t : m.tensors()) {
    double mag = 0.0;
    for (std::size_t i = 0; i < t.size; ++i) mag += std::abs(g[t.offset + i]);
    if (t.layer == Layer::kConv2 || t.layer == Layer::kOutput)
      CHECK(mag == 0.0);
    else if (t.name == "dense1.weight")
      CHECK(mag > 0.0);
  }
}

TEST_CASE("backward rejects stale or infer-mode passes") {
  CnnModel m(tiny_net(), 1);
  Rng rng = make_rng(1);
  const FeatureTensor x = random_features(4, 4, rng);
  const FeatureTensor* xs[] = {&x};
  const std::vector<double> t(m.config().output_len, 0.0);
  CHECK_THROWS_AS(backward(m, forward_batch(m, xs, Mode::kInfer), t), std::logic_error);
  const auto cache = forward_batch(m, xs, Mode::kTrain);
  m.mutable_params()[0] += 1.0;
  CHECK_THROWS_AS(backward(m, cache, t), std::logic_error);
}

TEST_CASE("zero learning rate leaves the initial weights bit-for-bit") {
  const Dataset ds = random_dataset(10, 3);
  TrainConfig tc;
  tc.lr = 0.0;
  tc.batch = 4;
  tc.epochs = 3;
  tc.seed = 21;
  const TrainResult r = train(ds, tc, tiny_net(0.5));
  const CnnModel init(tiny_net(0.5), 21);
  CHECK(std::equal(r.model.params().begin(), r.model.params().end(), init.params().begin()));
  CHECK(r.report.train_loss.size() == 3);
  CHECK(r.report.val_loss.size() == 3);
}

TEST_CASE("a single sample is memorized") {
  const Dataset ds = random_dataset(1, 4);
  TrainConfig tc;
  tc.batch = 1;
  tc.epochs = 200;
  tc.lr = 0.005;
  tc.val_fraction = 0.2;
  const TrainResult r = train(ds, tc, tiny_net(0.0));
  CHECK(r.report.train_loss.back() < 1e-3);
  CHECK(r.report.best_epoch == 199);
}

TEST_CASE("full-batch training without momentum is plain gradient descent") {
  const Dataset ds = random_dataset(6, 5);
  TrainConfig tc;
  tc.lr = 0.01;
  tc.momentum = 0.0;
  tc.batch = 1000;
  tc.epochs = 3;
  tc.seed = 2;
  const TrainResult r = train(ds, tc, tiny_net(0.0));

  // Independent loop: split, then three steps w <- w - lr g over the whole training set.
  CnnModel m(tiny_net(0.0), 2);
  const Split split = split_indices(6, tc.val_fraction, 2);
  REQUIRE(split.train.size() == 5);
  std::vector<const FeatureTensor*> xs;
  std::vector<double> targets;
  for (std::size_t i : split.train) {
    xs.push_back(&ds.samples[i].features);
    targets.insert(targets.end(), ds.samples[i].labels.begin(), ds.samples[i].labels.end());
  }
  for (int step = 0; step < 3; ++step) {
    const auto cache = forward_batch(m, xs, Mode::kTrain);
    const double l = batch_loss(cache, targets);
    CHECK(r.report.train_loss[std::size_t(step)] == doctest::Approx(l).epsilon(1e-10));
    const auto g = backward(m, cache, targets);
    update_running_stats(m, cache);
    auto w = m.mutable_params();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= tc.lr * g[i];
  }
}

TEST_CASE("split is a deterministic 80/20 partition") {
  const Split a = split_indices(10, 0.2, 4);
  const Split b = split_indices(10, 0.2, 4);
  CHECK(a.train == b.train);
  CHECK(a.train.size() == 8);
  CHECK(a.validation.size() == 2);
  std::vector<std::size_t> all = a.train;
  all.insert(all.end(), a.validation.begin(), a.validation.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(all[i] == i);
  CHECK(split_indices(3, 0.2, 1).train.size() == 3);
}

TEST_CASE("running statistics match a large batch") {
  CnnModel m(tiny_net(0.0), 6);
  randomize(m, 7);
  Rng rng = make_rng(8);
  std::vector<FeatureTensor> xs;
  for (int i = 0; i < 256; ++i) xs.push_back(random_features(4, 4, rng));
  std::vector<const FeatureTensor*> ptrs;
  for (const auto& x : xs) ptrs.push_back(&x);
  for (int it = 0; it < 80; ++it) update_running_stats(m, forward_batch(m, ptrs, Mode::kTrain));
  const auto infer = forward_batch(m, ptrs, Mode::kInfer);
  const std::size_t K = 2, plane = 16;
  for (std::size_t k = 0; k < K; ++k) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t b = 0; b < ptrs.size(); ++b)
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = infer.xhat1[(b * K + k) * plane + i];
        s += v;
        s2 += v * v;
      }
    const double n = double(ptrs.size() * plane);
    CHECK(std::abs(s / n) < 0.05);
    CHECK(s2 / n - (s / n) * (s / n) == doctest::Approx(1.0).epsilon(0.05));
  }
}

TEST_CASE("model files round trip exactly") {
  const Dataset ds = random_dataset(8, 9);
  TrainConfig tc;
  tc.batch = 4;
  tc.epochs = 2;
  const TrainResult r = train(ds, tc, tiny_net(0.5));
  const fs::path p = temp_file("model.bin");
  save_model(r.model, p);
  const CnnModel back = load_model(p);
  CHECK(back == r.model);
  CHECK(back.checksum() == r.report.checksum);
  CHECK_FALSE(back.float_params().empty());
  CHECK(back.config().dropout_p == doctest::Approx(0.5));

  std::string bytes;
  {
    std::ifstream in(p, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << b;
  };
  write(bytes.substr(0, bytes.size() - 4));
  CHECK_THROWS_WITH_AS(load_model(p), doctest::Contains("truncated"), FormatError);
  write(bytes + "abcd");
  CHECK_THROWS_WITH_AS(load_model(p), doctest::Contains("trailing"), FormatError);
  std::string bad = bytes;
  bad[1] = '?';
  write(bad);
  CHECK_THROWS_WITH_AS(load_model(p), doctest::Contains("magic"), FormatError);
  fs::remove(p);
}

TEST_CASE("checksum tracks parameters") {
  CnnModel a(tiny_net(), 1);
  CnnModel b(tiny_net(), 1);
  CHECK(a.checksum() == b.checksum());
  b.mutable_params()[3] += 0.25;
  CHECK(a.checksum() != b.checksum());
  CHECK(CnnModel(tiny_net(), 2).checksum() != a.checksum());
}

TEST_CASE("training is deterministic") {
  const Dataset ds = random_dataset(12, 10);
  TrainConfig tc;
  tc.batch = 5;
  tc.epochs = 3;
  const TrainResult a = train(ds, tc, tiny_net(0.5));
  const TrainResult b = train(ds, tc, tiny_net(0.5));
  CHECK(a.model == b.model);
  CHECK(a.report.train_loss == b.report.train_loss);
  CHECK(a.report.checksum == b.report.checksum);
}

TEST_CASE("input shape errors are explicit") {
  CnnModel m(tiny_net(), 1);
  Rng rng = make_rng(1);
  CHECK_THROWS_WITH_AS(forward(m, random_features(3, 4, rng), Mode::kInfer), doctest::Contains("expects 4x4x3"),
                       std::invalid_argument);
}
