// Streaming STFT/iSTFT with a rectangular analysis window of length iWS and a
// short overlap-added synthesis segment of length oWS. Output sample m depends
// only on input samples up to m + oWS - 1, so the algorithmic latency is oWS.
#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "fsbnet/tensor.hpp"

namespace fsbnet {

struct StftConfig {
  int sample_rate = 16000;
  int iws = 256;       // analysis window, samples
  int hs = 32;         // hop, samples
  int ows = 64;        // synthesis segment, samples
  int dft_size = 256;

  int bins() const { return dft_size / 2 + 1; }
  int left_pad() const { return iws - ows; }

  // Frames of the left-padded signal, one per hop position.
  long long num_frames(long long num_samples) const {
    return (num_samples + left_pad() + hs - 1) / hs;
  }

  void validate() const;
  bool operator==(const StftConfig&) const = default;
};

// Periodic Hann of length ows; shifted copies at hop hs sum to one.
std::vector<double> synthesis_window(const StftConfig& cfg);

// Radix-2 complex FFT evaluated in double precision.
class Fft {
 public:
  explicit Fft(int n);
  int size() const { return n_; }
  void forward(std::complex<double>* data) const;
  void inverse(std::complex<double>* data) const;

 private:
  void run(std::complex<double>* data, bool inverse) const;
  int n_;
  std::vector<std::complex<double>> twiddle_;
  std::vector<int> bit_rev_;
};

// Naive O(N^2) DFT, used only as an independent check of Fft.
std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x);

namespace detail {
// Real-input DFT of a dft_size-point frame: bins 0..N/2.
void rdft_frame(const Fft& fft, const double* frame, int frame_len,
                std::vector<std::complex<double>>& spec);
// Inverse with conjugate symmetry imposed; returns the real part.
void irdft_frame(const Fft& fft, const std::complex<double>* spec,
                 std::vector<double>& frame);
}  // namespace detail

// One analysis stream: ring buffer over the latest iWS input samples. Frame k
// can only be formed once input sample k*hs + ows - 1 has arrived, so the
// first ows/hs - 1 pushes prime the buffer and emit nothing; afterwards every
// push emits exactly one frame and streamed frame k equals offline frame k.
class StftAnalysis {
 public:
  explicit StftAnalysis(const StftConfig& cfg);
  const StftConfig& config() const { return cfg_; }

  // Consumes exactly hs samples; empty while priming.
  std::optional<std::vector<std::complex<float>>> push(const float* chunk, int len);
  std::optional<std::vector<std::complex<float>>> push(const std::vector<float>& chunk) {
    return push(chunk.data(), static_cast<int>(chunk.size()));
  }

  // Zero chunks needed after end of input so every buffered sample reaches a
  // finalized output sample downstream.
  int flush_pushes() const { return cfg_.ows / cfg_.hs - 1; }

  void reset();

 private:
  StftConfig cfg_;
  Fft fft_;
  std::vector<float> ring_;  // always holds the latest iws samples
  int priming_ = 0;
  std::vector<double> frame_;
  std::vector<std::complex<double>> spec_;
};

// One synthesis stream: inverse transform of frame k, take samples
// [iws-ows, iws) of the window, apply the synthesis window, overlap-add at
// output offset k*hs. Emits hs finalized samples per frame; emitted sample n
// lines up with input sample n of the matching analysis stream.
class StftSynthesis {
 public:
  explicit StftSynthesis(const StftConfig& cfg);
  const StftConfig& config() const { return cfg_; }

  std::vector<float> push(const std::complex<float>* spec, int len);
  std::vector<float> push(const std::vector<std::complex<float>>& spec) {
    return push(spec.data(), static_cast<int>(spec.size()));
  }

  void reset();

 private:
  StftConfig cfg_;
  Fft fft_;
  std::vector<double> window_;
  std::vector<double> acc_;  // ows partial sums, acc_[0] = next finalized sample
  std::vector<std::complex<double>> spec_;
  std::vector<double> frame_;
};

// Whole-utterance transforms sharing the streaming layout: frame k covers
// padded positions [k*hs, k*hs + iws) of (iws - ows zeros ++ signal).
// Spectra are packed as a 2 x T x F tensor of real and imaginary planes.
template <typename S>
TensorT<S> offline_stft(const std::vector<S>& signal, const StftConfig& cfg) {
  cfg.validate();
  const long long t_len = cfg.num_frames(static_cast<long long>(signal.size()));
  const int bins = cfg.bins();
  Fft fft(cfg.dft_size);
  TensorT<S> out({2, static_cast<int>(t_len), bins});
  std::vector<double> frame(cfg.iws);
  std::vector<std::complex<double>> spec;
  const long long pad = cfg.left_pad();
  for (long long k = 0; k < t_len; ++k) {
    for (int n = 0; n < cfg.iws; ++n) {
      const long long idx = k * cfg.hs + n - pad;
      frame[n] = (idx >= 0 && idx < static_cast<long long>(signal.size()))
                     ? static_cast<double>(signal[idx])
                     : 0.0;
    }
    detail::rdft_frame(fft, frame.data(), cfg.iws, spec);
    for (int f = 0; f < bins; ++f) {
      out(0, static_cast<int>(k), f) = static_cast<S>(spec[f].real());
      out(1, static_cast<int>(k), f) = static_cast<S>(spec[f].imag());
    }
  }
  return out;
}

template <typename S>
std::vector<S> offline_istft(const TensorT<S>& ri, const StftConfig& cfg, long long out_len) {
  cfg.validate();
  if (ri.rank() != 3 || ri.dim(0) != 2 || ri.dim(2) != cfg.bins())
    throw std::invalid_argument("offline_istft: expected 2 x T x F spectra");
  const int t_len = ri.dim(1);
  const int bins = cfg.bins();
  Fft fft(cfg.dft_size);
  const std::vector<double> win = synthesis_window(cfg);
  std::vector<double> acc(static_cast<size_t>(out_len), 0.0);
  std::vector<std::complex<double>> spec(bins);
  std::vector<double> frame;
  for (int k = 0; k < t_len; ++k) {
    for (int f = 0; f < bins; ++f)
      spec[f] = {static_cast<double>(ri(0, k, f)), static_cast<double>(ri(1, k, f))};
    detail::irdft_frame(fft, spec.data(), frame);
    // Segment k covers output positions [k*hs, k*hs + ows).
    for (int j = 0; j < cfg.ows; ++j) {
      const long long m = static_cast<long long>(k) * cfg.hs + j;
      if (m >= 0 && m < out_len) acc[m] += frame[cfg.iws - cfg.ows + j] * win[j];
    }
  }
  std::vector<S> out(static_cast<size_t>(out_len));
  for (long long i = 0; i < out_len; ++i) out[i] = static_cast<S>(acc[i]);
  return out;
}

}  // namespace fsbnet
