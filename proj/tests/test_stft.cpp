#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fsbnet/stft.hpp"

using namespace fsbnet;

namespace {
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::vector<float> random_signal(std::mt19937_64& rng, int n) {
  std::vector<float> s(static_cast<size_t>(n));
  for (auto& v : s) v = static_cast<float>(2.0 * unit(rng) - 1.0);
  return s;
}

// Streams a whole signal through analysis+synthesis, flushing the tail.
std::vector<float> identity_pass(const StftConfig& cfg, const std::vector<float>& sig) {
  StftAnalysis ana(cfg);
  StftSynthesis syn(cfg);
  std::vector<float> out;
  auto feed = [&](const float* p) {
    auto spec = ana.push(p, cfg.hs);
    if (!spec) return;
    auto o = syn.push(*spec);
    out.insert(out.end(), o.begin(), o.end());
  };
  for (size_t pos = 0; pos + cfg.hs <= sig.size(); pos += cfg.hs) feed(sig.data() + pos);
  const std::vector<float> zeros(static_cast<size_t>(cfg.hs), 0.0f);
  for (int i = 0; i < ana.flush_pushes(); ++i) feed(zeros.data());
  return out;
}
}  // namespace

TEST_CASE("config validation and bin count") {
  StftConfig cfg;
  cfg.validate();
  CHECK(cfg.bins() == 129);
  CHECK(cfg.iws == 256);
  CHECK(cfg.hs == 32);
  CHECK(cfg.ows == 64);

  StftConfig bad = cfg;
  bad.hs = 30;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.ows = 512;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.dft_size = 200;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("fft matches the naive DFT to 1e-10 at N=256") {
  std::mt19937_64 rng(1);
  const int n = 256;
  std::vector<std::complex<double>> x(n);
  for (auto& v : x) v = {2.0 * unit(rng) - 1.0, 2.0 * unit(rng) - 1.0};
  auto want = naive_dft(x);

  Fft fft(n);
  auto got = x;
  fft.forward(got.data());
  for (int i = 0; i < n; ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-10);

  fft.inverse(got.data());
  for (int i = 0; i < n; ++i) CHECK(std::abs(got[i] - x[i]) <= 1e-12);
}

TEST_CASE("synthesis window shifts sum to one") {
  StftConfig cfg;
  const auto w = synthesis_window(cfg);
  for (int j = 0; j < cfg.hs; ++j) CHECK(w[j] + w[j + cfg.hs] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("all-zero chunks give all-zero spectra and output") {
  StftConfig cfg;
  StftAnalysis ana(cfg);
  StftSynthesis syn(cfg);
  const std::vector<float> zeros(static_cast<size_t>(cfg.hs), 0.0f);
  for (int i = 0; i < 20; ++i) {
    auto spec = ana.push(zeros);
    if (!spec) continue;
    for (const auto& c : *spec) {
      CHECK(c.real() == 0.0f);
      CHECK(c.imag() == 0.0f);
    }
    for (float v : syn.push(*spec)) CHECK(v == 0.0f);
  }
}

TEST_CASE("bin-centered sinusoid concentrates at its bin") {
  StftConfig cfg;
  const int bin = 16;  // 1000 Hz at 16 kHz / 256
  const double freq = static_cast<double>(bin) * cfg.sample_rate / cfg.dft_size;
  StftAnalysis ana(cfg);
  std::vector<std::complex<float>> last;
  int n0 = 0;
  for (int push = 0; push < 16; ++push) {
    std::vector<float> chunk(static_cast<size_t>(cfg.hs));
    for (int i = 0; i < cfg.hs; ++i)
      chunk[i] = 0.5f * std::sin(2.0 * std::numbers::pi * freq * (n0 + i) / cfg.sample_rate);
    n0 += cfg.hs;
    auto spec = ana.push(chunk);
    if (spec) last = *spec;
  }
  REQUIRE(static_cast<int>(last.size()) == cfg.bins());
  const double peak = std::abs(std::complex<double>(last[bin].real(), last[bin].imag()));
  CHECK(peak == doctest::Approx(0.5 * cfg.dft_size / 2).epsilon(1e-3));
  for (int f = 0; f < cfg.bins(); ++f) {
    if (f == bin) continue;
    CHECK(std::abs(std::complex<double>(last[f].real(), last[f].imag())) <= 1e-3 * peak);
  }
}

TEST_CASE("wrong chunk or spectrum length is rejected") {
  StftConfig cfg;
  StftAnalysis ana(cfg);
  std::vector<float> chunk(static_cast<size_t>(cfg.hs - 1));
  CHECK_THROWS_AS(ana.push(chunk), std::invalid_argument);
  StftSynthesis syn(cfg);
  std::vector<std::complex<float>> bad(static_cast<size_t>(cfg.bins() + 1));
  CHECK_THROWS_AS(syn.push(bad), std::invalid_argument);
}

TEST_CASE("offline frame count follows the padded-signal arithmetic") {
  StftConfig cfg;
  std::mt19937_64 rng(2);
  for (int len : {32000, 16000, 16001, 777}) {
    std::vector<float> sig = random_signal(rng, len);
    auto spec = offline_stft(sig, cfg);
    const long long expect = (len + (cfg.iws - cfg.ows) + cfg.hs - 1) / cfg.hs;
    CHECK(spec.dim(1) == expect);
    CHECK(spec.dim(0) == 2);
    CHECK(spec.dim(2) == 129);
  }
}

TEST_CASE("streaming spectra equal offline frames") {
  StftConfig cfg;
  std::mt19937_64 rng(3);
  const int len = 2 * cfg.sample_rate;
  const std::vector<float> sig = random_signal(rng, len);
  const auto offline = offline_stft(sig, cfg);

  StftAnalysis ana(cfg);
  int frame = 0;
  float worst = 0.0f;
  for (size_t pos = 0; pos + cfg.hs <= sig.size(); pos += cfg.hs) {
    auto spec = ana.push(sig.data() + pos, cfg.hs);
    if (!spec) continue;
    for (int f = 0; f < cfg.bins(); ++f) {
      worst = std::max(worst, std::abs((*spec)[f].real() - offline(0, frame, f)));
      worst = std::max(worst, std::abs((*spec)[f].imag() - offline(1, frame, f)));
    }
    ++frame;
  }
  CHECK(frame == len / cfg.hs - 1);  // one push primes the buffer
  CHECK(worst <= 1e-5f);
}

TEST_CASE("identity pass-through reconstructs after warm-up") {
  StftConfig cfg;
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<float> sig = random_signal(rng, cfg.sample_rate);
    const auto out = identity_pass(cfg, sig);
    REQUIRE(out.size() == sig.size());
    double err = 0.0, ref = 0.0;
    for (size_t i = cfg.ows; i < sig.size(); ++i) {
      err += static_cast<double>(out[i] - sig[i]) * (out[i] - sig[i]);
      ref += static_cast<double>(sig[i]) * sig[i];
    }
    CHECK(std::sqrt(err / ref) <= 1e-6);
  }
}

TEST_CASE("offline stft/istft round-trip reconstructs after warm-up") {
  StftConfig cfg;
  std::mt19937_64 rng(5);
  std::vector<float> sig = random_signal(rng, cfg.sample_rate);
  auto spec = offline_stft(sig, cfg);
  auto back = offline_istft(spec, cfg, static_cast<long long>(sig.size()));
  double err = 0.0, ref = 0.0;
  for (size_t i = cfg.ows; i < sig.size(); ++i) {
    err += static_cast<double>(back[i] - sig[i]) * (back[i] - sig[i]);
    ref += static_cast<double>(sig[i]) * sig[i];
  }
  CHECK(std::sqrt(err / ref) <= 1e-6);
}

TEST_CASE("streaming equals offline reconstruction from sample zero") {
  StftConfig cfg;
  std::mt19937_64 rng(6);
  const std::vector<float> sig = random_signal(rng, 2 * cfg.sample_rate);
  const auto streamed = identity_pass(cfg, sig);
  const auto spec = offline_stft(sig, cfg);
  const auto offline = offline_istft(spec, cfg, static_cast<long long>(sig.size()));
  REQUIRE(streamed.size() == offline.size());
  float worst = 0.0f;
  for (size_t i = 0; i < streamed.size(); ++i)
    worst = std::max(worst, std::abs(streamed[i] - offline[i]));
  CHECK(worst <= 1e-5f);
}

TEST_CASE("perturbing input sample n never alters outputs at or before n - ows") {
  StftConfig cfg;
  std::mt19937_64 rng(7);
  const int len = 8000;
  const std::vector<float> sig = random_signal(rng, len);
  const auto base = identity_pass(cfg, sig);
  for (int trial = 0; trial < 8; ++trial) {
    const int site = cfg.ows + static_cast<int>(unit(rng) * (len - 2 * cfg.ows));
    auto mod = sig;
    mod[site] += 1.0f + static_cast<float>(unit(rng));
    const auto pert = identity_pass(cfg, mod);
    for (int i = 0; i <= site - cfg.ows; ++i) {
      REQUIRE(base[i] == pert[i]);
    }
    // and the perturbation is visible somewhere later
    bool changed = false;
    for (size_t i = site - cfg.ows + 1; i < pert.size(); ++i)
      if (base[i] != pert[i]) changed = true;
    CHECK(changed);
  }
}

TEST_CASE("half hop doubles the frame rate") {
  StftConfig cfg;
  StftConfig half = cfg;
  half.hs = cfg.hs / 2;
  half.ows = 2 * half.hs;
  half.validate();
  std::mt19937_64 rng(8);
  const std::vector<float> sig = random_signal(rng, 16000);
  const auto a = offline_stft(sig, cfg);
  const auto b = offline_stft(sig, half);
  CHECK(b.dim(1) >= 2 * a.dim(1) - 8);
  CHECK(b.dim(1) <= 2 * a.dim(1) + 8);
}
