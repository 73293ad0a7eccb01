#include "fsbnet/stft.hpp"

#include <cmath>
#include <numbers>

namespace fsbnet {

namespace {
bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }
}  // namespace

void StftConfig::validate() const {
  if (sample_rate < 1) throw std::invalid_argument("stft: sample rate must be positive");
  if (hs < 1 || iws < 1 || ows < 1) throw std::invalid_argument("stft: sizes must be positive");
  if (iws % hs != 0 || ows % hs != 0)
    throw std::invalid_argument("stft: iWS and oWS must be multiples of the hop size");
  if (ows > iws) throw std::invalid_argument("stft: oWS must not exceed iWS");
  if (dft_size < iws) throw std::invalid_argument("stft: DFT size must be >= iWS");
  if (!is_pow2(dft_size)) throw std::invalid_argument("stft: DFT size must be a power of two");
  if (ows != 2 * hs)
    throw std::invalid_argument("stft: only 50% synthesis overlap (oWS = 2*HS) is supported");
}

std::vector<double> synthesis_window(const StftConfig& cfg) {
  std::vector<double> w(cfg.ows);
  for (int j = 0; j < cfg.ows; ++j)
    w[j] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * j / cfg.ows));
  return w;
}

Fft::Fft(int n) : n_(n) {
  if (!is_pow2(n)) throw std::invalid_argument("fft: size must be a power of two");
  twiddle_.resize(n / 2);
  for (int k = 0; k < n / 2; ++k) {
    const double a = -2.0 * std::numbers::pi * k / n;
    twiddle_[k] = {std::cos(a), std::sin(a)};
  }
  bit_rev_.resize(n);
  int bits = 0;
  while ((1 << bits) < n) ++bits;
  for (int i = 0; i < n; ++i) {
    int j = 0;
    for (int b = 0; b < bits; ++b) j = (j << 1) | ((i >> b) & 1);
    bit_rev_[i] = j;
  }
}

void Fft::run(std::complex<double>* data, bool inverse) const {
  for (int i = 0; i < n_; ++i) {
    const int j = bit_rev_[i];
    if (j > i) std::swap(data[i], data[j]);
  }
  for (int len = 2; len <= n_; len <<= 1) {
    const int half = len / 2;
    const int step = n_ / len;
    for (int start = 0; start < n_; start += len) {
      for (int k = 0; k < half; ++k) {
        std::complex<double> w = twiddle_[k * step];
        if (inverse) w = std::conj(w);
        const std::complex<double> t = w * data[start + k + half];
        const std::complex<double> u = data[start + k];
        data[start + k] = u + t;
        data[start + k + half] = u - t;
      }
    }
  }
  if (inverse) {
    const double scale = 1.0 / n_;
    for (int i = 0; i < n_; ++i) data[i] *= scale;
  }
}

void Fft::forward(std::complex<double>* data) const { run(data, false); }
void Fft::inverse(std::complex<double>* data) const { run(data, true); }

std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
  const int n = static_cast<int>(x.size());
  std::vector<std::complex<double>> y(n);
  for (int k = 0; k < n; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (int m = 0; m < n; ++m) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) * m / n;
      acc += x[m] * std::complex<double>{std::cos(a), std::sin(a)};
    }
    y[k] = acc;
  }
  return y;
}

namespace detail {

void rdft_frame(const Fft& fft, const double* frame, int frame_len,
                std::vector<std::complex<double>>& spec) {
  const int n = fft.size();
  std::vector<std::complex<double>> buf(n, {0.0, 0.0});
  for (int i = 0; i < frame_len; ++i) buf[i] = {frame[i], 0.0};
  fft.forward(buf.data());
  spec.assign(buf.begin(), buf.begin() + n / 2 + 1);
}

void irdft_frame(const Fft& fft, const std::complex<double>* spec,
                 std::vector<double>& frame) {
  const int n = fft.size();
  std::vector<std::complex<double>> buf(n);
  for (int k = 0; k <= n / 2; ++k) buf[k] = spec[k];
  for (int k = 1; k < n / 2; ++k) buf[n - k] = std::conj(spec[k]);
  fft.inverse(buf.data());
  frame.resize(n);
  for (int i = 0; i < n; ++i) frame[i] = buf[i].real();
}

}  // namespace detail

StftAnalysis::StftAnalysis(const StftConfig& cfg) : cfg_(cfg), fft_(cfg.dft_size) {
  cfg_.validate();
  reset();
}

void StftAnalysis::reset() {
  ring_.assign(static_cast<size_t>(cfg_.iws), 0.0f);
  frame_.resize(static_cast<size_t>(cfg_.iws));
  priming_ = cfg_.ows / cfg_.hs - 1;
}

std::optional<std::vector<std::complex<float>>> StftAnalysis::push(const float* chunk, int len) {
  if (len != cfg_.hs) throw std::invalid_argument("stft analysis: chunk length must equal hop size");
  const int keep = cfg_.iws - cfg_.hs;
  std::move(ring_.begin() + cfg_.hs, ring_.end(), ring_.begin());
  std::copy(chunk, chunk + len, ring_.begin() + keep);
  if (priming_ > 0) {
    --priming_;
    return std::nullopt;
  }
  for (int i = 0; i < cfg_.iws; ++i) frame_[i] = static_cast<double>(ring_[i]);
  detail::rdft_frame(fft_, frame_.data(), cfg_.iws, spec_);
  std::vector<std::complex<float>> out(spec_.size());
  for (size_t i = 0; i < spec_.size(); ++i)
    out[i] = {static_cast<float>(spec_[i].real()), static_cast<float>(spec_[i].imag())};
  return out;
}

StftSynthesis::StftSynthesis(const StftConfig& cfg) : cfg_(cfg), fft_(cfg.dft_size) {
  cfg_.validate();
  window_ = synthesis_window(cfg_);
  reset();
}

void StftSynthesis::reset() {
  acc_.assign(static_cast<size_t>(cfg_.ows), 0.0);
  spec_.resize(static_cast<size_t>(cfg_.bins()));
}

std::vector<float> StftSynthesis::push(const std::complex<float>* spec, int len) {
  if (len != cfg_.bins()) throw std::invalid_argument("stft synthesis: spectrum length != bins");
  for (int f = 0; f < len; ++f)
    spec_[f] = {static_cast<double>(spec[f].real()), static_cast<double>(spec[f].imag())};
  detail::irdft_frame(fft_, spec_.data(), frame_);
  for (int j = 0; j < cfg_.ows; ++j) acc_[j] += frame_[cfg_.iws - cfg_.ows + j] * window_[j];

  // The first hs positions of acc_ are final: the next segment lands hs later.
  std::vector<float> out(static_cast<size_t>(cfg_.hs));
  for (int j = 0; j < cfg_.hs; ++j) out[j] = static_cast<float>(acc_[j]);
  std::move(acc_.begin() + cfg_.hs, acc_.end(), acc_.begin());
  std::fill(acc_.end() - cfg_.hs, acc_.end(), 0.0);
  return out;
}

}  // namespace fsbnet
