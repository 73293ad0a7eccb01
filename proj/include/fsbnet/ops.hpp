// Layer primitives: frequency-strided convolution, overlap-add deconvolution,
// LSTM cell, causal global layer normalization, PReLU and linear maps.
// All convolutions have kernel size one along time; frames never mix.
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fsbnet/mac_counter.hpp"
#include "fsbnet/tensor.hpp"

namespace fsbnet::ops {

template <typename S>
inline S dot(const S* a, const S* b, int n) {
  S s0{}, s1{}, s2{}, s3{};
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  S s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

// y[co,t,fo] = b[co] + sum_{ci,i} w[co,ci,i] * x[ci,t,fo*J+i]
// Accumulation runs over output channels in the inner loop (kernel transposed
// once per call) so it vectorizes without reassociating any single output.
template <typename S>
TensorT<S> conv_freq(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b,
                     int stride) {
  if (x.rank() != 3 || w.rank() != 3 || b.rank() != 1)
    throw std::invalid_argument("conv_freq: expected rank-3 input/kernel and rank-1 bias");
  const int cin = x.dim(0), t_len = x.dim(1), fin = x.dim(2);
  const int cout = w.dim(0), ksize = w.dim(2);
  if (w.dim(1) != cin) throw std::invalid_argument("conv_freq: kernel input channels mismatch");
  if (b.dim(0) != cout) throw std::invalid_argument("conv_freq: bias length mismatch");
  if (stride < 1) throw std::invalid_argument("conv_freq: stride must be >= 1");
  if (fin < ksize || (fin - ksize) % stride != 0)
    throw std::invalid_argument("conv_freq: (Fin - I) must be a non-negative multiple of J");
  const int fout = (fin - ksize) / stride + 1;

  std::vector<S> wt(static_cast<size_t>(cin) * ksize * cout);  // [ci][i][co]
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci)
      for (int i = 0; i < ksize; ++i)
        wt[(static_cast<size_t>(ci) * ksize + i) * cout + co] = w(co, ci, i);

  TensorT<S> y({cout, t_len, fout});
  std::vector<S> z(static_cast<size_t>(cout));
  for (int t = 0; t < t_len; ++t) {
    for (int fo = 0; fo < fout; ++fo) {
      for (int co = 0; co < cout; ++co) z[co] = b(co);
      for (int ci = 0; ci < cin; ++ci) {
        const S* xrow = &x(ci, t, fo * stride);
        const S* wrow = &wt[static_cast<size_t>(ci) * ksize * cout];
        for (int i = 0; i < ksize; ++i) {
          const S xi = xrow[i];
          const S* wcol = wrow + static_cast<size_t>(i) * cout;
          for (int co = 0; co < cout; ++co) z[co] += xi * wcol[co];
        }
      }
      for (int co = 0; co < cout; ++co) y(co, t, fo) = z[co];
    }
  }
  macs::add(static_cast<std::uint64_t>(t_len) * cout * fout * cin * ksize);
  return y;
}

// Transposed convolution implemented as a per-position linear map followed by
// overlap-add along frequency. w is Cin x Cout x I; Fout = (Fin-1)*J + I.
template <typename S>
TensorT<S> deconv_freq(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b,
                       int stride) {
  if (x.rank() != 3 || w.rank() != 3 || b.rank() != 1)
    throw std::invalid_argument("deconv_freq: expected rank-3 input/kernel and rank-1 bias");
  const int cin = x.dim(0), t_len = x.dim(1), fin = x.dim(2);
  const int cout = w.dim(1), ksize = w.dim(2);
  if (w.dim(0) != cin) throw std::invalid_argument("deconv_freq: kernel input channels mismatch");
  if (b.dim(0) != cout) throw std::invalid_argument("deconv_freq: bias length mismatch");
  if (stride < 1) throw std::invalid_argument("deconv_freq: stride must be >= 1");
  const int fout = (fin - 1) * stride + ksize;

  TensorT<S> y({cout, t_len, fout});
  if (stride == 1) {
    // Unit stride: overlap-add rows are contiguous in both operands.
    for (int t = 0; t < t_len; ++t) {
      for (int ci = 0; ci < cin; ++ci) {
        const S* xrow = &x(ci, t, 0);
        for (int co = 0; co < cout; ++co) {
          for (int i = 0; i < ksize; ++i) {
            const S wv = w(ci, co, i);
            S* yrow = &y(co, t, i);
            for (int fi = 0; fi < fin; ++fi) yrow[fi] += wv * xrow[fi];
          }
        }
      }
    }
    for (int co = 0; co < cout; ++co)
      for (int t = 0; t < t_len; ++t)
        for (int fo = 0; fo < fout; ++fo) y(co, t, fo) += b(co);
    macs::add(static_cast<std::uint64_t>(t_len) * fin * cin * cout * ksize);
    return y;
  }

  std::vector<S> wt(static_cast<size_t>(cin) * ksize * cout);  // [ci][i][co]
  for (int ci = 0; ci < cin; ++ci)
    for (int co = 0; co < cout; ++co)
      for (int i = 0; i < ksize; ++i)
        wt[(static_cast<size_t>(ci) * ksize + i) * cout + co] = w(ci, co, i);

  std::vector<S> z(static_cast<size_t>(fout) * cout);
  for (int t = 0; t < t_len; ++t) {
    std::fill(z.begin(), z.end(), S(0));
    for (int fi = 0; fi < fin; ++fi) {
      for (int ci = 0; ci < cin; ++ci) {
        const S xv = x(ci, t, fi);
        const S* wrow = &wt[static_cast<size_t>(ci) * ksize * cout];
        S* zrow = &z[static_cast<size_t>(fi) * stride * cout];
        for (int i = 0; i < ksize; ++i) {
          const S* wcol = wrow + static_cast<size_t>(i) * cout;
          S* zcol = zrow + static_cast<size_t>(i) * cout;
          for (int co = 0; co < cout; ++co) zcol[co] += xv * wcol[co];
        }
      }
    }
    for (int co = 0; co < cout; ++co)
      for (int fo = 0; fo < fout; ++fo) y(co, t, fo) = z[static_cast<size_t>(fo) * cout + co] + b(co);
  }
  macs::add(static_cast<std::uint64_t>(t_len) * fin * cin * cout * ksize);
  return y;
}

// Reference transposed convolution: interleave stride-1 zeros, then convolve.
// Kept as an independent check and to expose the MAC cost of the naive form.
template <typename S>
TensorT<S> deconv_freq_reference(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b,
                                 int stride) {
  if (x.rank() != 3 || w.rank() != 3 || b.rank() != 1)
    throw std::invalid_argument("deconv_freq_reference: bad ranks");
  const int cin = x.dim(0), t_len = x.dim(1), fin = x.dim(2);
  const int cout = w.dim(1), ksize = w.dim(2);
  if (w.dim(0) != cin) throw std::invalid_argument("deconv_freq_reference: channel mismatch");
  if (b.dim(0) != cout) throw std::invalid_argument("deconv_freq_reference: bias mismatch");
  const int up_len = (fin - 1) * stride + 1;
  const int fout = up_len + ksize - 1;

  std::vector<S> up(static_cast<size_t>(cin) * up_len);
  TensorT<S> y({cout, t_len, fout});
  std::uint64_t mac_count = 0;
  for (int t = 0; t < t_len; ++t) {
    std::fill(up.begin(), up.end(), S(0));
    for (int ci = 0; ci < cin; ++ci)
      for (int fi = 0; fi < fin; ++fi) up[static_cast<size_t>(ci) * up_len + fi * stride] = x(ci, t, fi);
    for (int co = 0; co < cout; ++co) {
      for (int m = 0; m < fout; ++m) {
        S acc = b(co);
        for (int i = 0; i < ksize; ++i) {
          const int k = m - i;
          if (k < 0 || k >= up_len) continue;
          for (int ci = 0; ci < cin; ++ci) {
            acc += w(ci, co, i) * up[static_cast<size_t>(ci) * up_len + k];
            ++mac_count;
          }
        }
        y(co, t, m) = acc;
      }
    }
  }
  macs::add(mac_count);
  return y;
}

template <typename S>
inline S sigmoid(S v) {
  return S(1) / (S(1) + std::exp(-v));
}

// Single unidirectional LSTM step. Gate rows of wi/wh are stacked [i; f; g; o].
template <typename S>
void lstm_step(const TensorT<S>& x, const TensorT<S>& h, const TensorT<S>& c,
               const TensorT<S>& wi, const TensorT<S>& wh, const TensorT<S>& bi,
               const TensorT<S>& bh, TensorT<S>& h_out, TensorT<S>& c_out,
               TensorT<S>* gates_out = nullptr) {
  if (x.rank() != 1 || h.rank() != 1 || c.rank() != 1)
    throw std::invalid_argument("lstm_step: x/h/c must be vectors");
  const int in_dim = x.dim(0);
  const int hidden = h.dim(0);
  if (wi.rank() != 2 || wi.dim(0) != 4 * hidden || wi.dim(1) != in_dim ||
      wh.rank() != 2 || wh.dim(0) != 4 * hidden || wh.dim(1) != hidden ||
      bi.dim(0) != 4 * hidden || bh.dim(0) != 4 * hidden || c.dim(0) != hidden)
    throw std::invalid_argument("lstm_step: weight shapes inconsistent with x/h");

  if (h_out.shape() != h.shape()) h_out = TensorT<S>({hidden});
  if (c_out.shape() != c.shape()) c_out = TensorT<S>({hidden});
  TensorT<S> local_gates({4 * hidden});
  TensorT<S>& gates = gates_out ? *gates_out : local_gates;
  if (gates.shape() != std::vector<int>{4 * hidden}) gates = TensorT<S>({4 * hidden});

  for (int r = 0; r < 4 * hidden; ++r)
    gates(r) = dot(&wi(r, 0), x.data(), in_dim) + dot(&wh(r, 0), h.data(), hidden) + bi(r) + bh(r);
  for (int u = 0; u < hidden; ++u) {
    const S ig = sigmoid(gates(u));
    const S fg = sigmoid(gates(hidden + u));
    const S gg = std::tanh(gates(2 * hidden + u));
    const S og = sigmoid(gates(3 * hidden + u));
    gates(u) = ig;
    gates(hidden + u) = fg;
    gates(2 * hidden + u) = gg;
    gates(3 * hidden + u) = og;
    c_out(u) = fg * c(u) + ig * gg;
    h_out(u) = og * std::tanh(c_out(u));
  }
  macs::add(static_cast<std::uint64_t>(4 * hidden) * (in_dim + hidden));
}

template <typename S>
TensorT<S> transpose2d(const TensorT<S>& m) {
  if (m.rank() != 2) throw std::invalid_argument("transpose2d: rank-2 expected");
  TensorT<S> t({m.dim(1), m.dim(0)});
  for (int i = 0; i < m.dim(0); ++i)
    for (int j = 0; j < m.dim(1); ++j) t(j, i) = m(i, j);
  return t;
}

// LSTM step over pre-transposed weights (wi_t: in x 4H, wh_t: H x 4H); the
// gate accumulator is updated column-wise so every lane keeps a fixed
// ascending summation order. h and c are updated in place.
template <typename S>
void lstm_step_gaxpy(const S* x, int in_dim, const TensorT<S>& wi_t, const TensorT<S>& wh_t,
                     const TensorT<S>& bi, const TensorT<S>& bh, TensorT<S>& h, TensorT<S>& c,
                     std::vector<S>& gates) {
  const int hidden = wh_t.dim(0);
  const int rows = 4 * hidden;
  gates.resize(static_cast<size_t>(rows));
  for (int r = 0; r < rows; ++r) gates[r] = bi(r) + bh(r);
  for (int i = 0; i < in_dim; ++i) {
    const S xi = x[i];
    const S* row = &wi_t(i, 0);
    S* g = gates.data();
    for (int r = 0; r < rows; ++r) g[r] += xi * row[r];
  }
  for (int i = 0; i < hidden; ++i) {
    const S hi = h(i);
    const S* row = &wh_t(i, 0);
    S* g = gates.data();
    for (int r = 0; r < rows; ++r) g[r] += hi * row[r];
  }
  for (int u = 0; u < hidden; ++u) {
    const S ig = sigmoid(gates[u]);
    const S fg = sigmoid(gates[hidden + u]);
    const S gg = std::tanh(gates[2 * hidden + u]);
    const S og = sigmoid(gates[3 * hidden + u]);
    c(u) = fg * c(u) + ig * gg;
    h(u) = og * std::tanh(c(u));
  }
  macs::add(static_cast<std::uint64_t>(4 * hidden) * (in_dim + hidden));
}

// y = W x + b with W supplied transposed (in x out).
template <typename S>
void linear_gaxpy(const S* x, int in_dim, const TensorT<S>& w_t, const TensorT<S>& b, S* y) {
  const int out_dim = w_t.dim(1);
  for (int m = 0; m < out_dim; ++m) y[m] = b(m);
  for (int i = 0; i < in_dim; ++i) {
    const S xi = x[i];
    const S* row = &w_t(i, 0);
    for (int m = 0; m < out_dim; ++m) y[m] += xi * row[m];
  }
  macs::add(static_cast<std::uint64_t>(out_dim) * in_dim);
}

// Whole-sequence LSTM starting from zero state; x is T x in, result T x H.
template <typename S>
TensorT<S> lstm_seq(const TensorT<S>& x, const TensorT<S>& wi, const TensorT<S>& wh,
                    const TensorT<S>& bi, const TensorT<S>& bh) {
  if (x.rank() != 2) throw std::invalid_argument("lstm_seq: x must be T x in");
  const int t_len = x.dim(0), in_dim = x.dim(1);
  const int hidden = wh.dim(1);
  TensorT<S> y({t_len, hidden});
  TensorT<S> h({hidden}), c({hidden}), h2({hidden}), c2({hidden});
  for (int t = 0; t < t_len; ++t) {
    TensorT<S> xt = TensorT<S>::from({in_dim},
        std::vector<S>(&x(t, 0), &x(t, 0) + in_dim));
    lstm_step(xt, h, c, wi, wh, bi, bh, h2, c2);
    std::copy(h2.data(), h2.data() + hidden, &y(t, 0));
    std::swap(h, h2);
    std::swap(c, c2);
  }
  return y;
}

// Running statistics of a causal global layer norm: totals over every feature
// of every frame seen so far.
struct CglnStats {
  double sum = 0.0;
  double sumsq = 0.0;
  long long count = 0;
};

namespace detail {
template <typename S>
inline void cgln_moments(const CglnStats& st, double eps, S& mean, S& inv_std) {
  const double mu = st.sum / static_cast<double>(st.count);
  double var = st.sumsq / static_cast<double>(st.count) - mu * mu;
  if (var < 0.0) var = 0.0;
  mean = static_cast<S>(mu);
  inv_std = static_cast<S>(1.0 / std::sqrt(var + eps));
}
}  // namespace detail

// One frame of causal global layer norm over a T x A tensor; stats carry the
// cumulative sums. gamma/beta are per-feature.
template <typename S>
void cgln_2d_stream(const S* x, int feat, const TensorT<S>& gamma, const TensorT<S>& beta,
                    double eps, CglnStats& st, S* y) {
  for (int a = 0; a < feat; ++a) {
    const double v = static_cast<double>(x[a]);
    st.sum += v;
    st.sumsq += v * v;
  }
  st.count += feat;
  S mu, inv;
  detail::cgln_moments(st, eps, mu, inv);
  for (int a = 0; a < feat; ++a) y[a] = gamma(a) * (x[a] - mu) * inv + beta(a);
}

template <typename S>
TensorT<S> cgln_2d(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                   double eps) {
  if (x.rank() != 2) throw std::invalid_argument("cgln_2d: x must be T x A");
  const int t_len = x.dim(0), feat = x.dim(1);
  if (gamma.dim(0) != feat || beta.dim(0) != feat)
    throw std::invalid_argument("cgln_2d: gamma/beta length mismatch");
  if (eps <= 0.0) throw std::invalid_argument("cgln_2d: eps must be > 0");
  TensorT<S> y({t_len, feat});
  CglnStats st;
  for (int t = 0; t < t_len; ++t) cgln_2d_stream(&x(t, 0), feat, gamma, beta, eps, st, &y(t, 0));
  return y;
}

// One frame of the 3-D variant: statistics pool over channels and frequency,
// affine is per channel. x/y are E x F slices of an E x T x F tensor.
template <typename S>
void cgln_3d_stream(const S* x, int chan, int freq, const TensorT<S>& gamma,
                    const TensorT<S>& beta, double eps, CglnStats& st, S* y) {
  const int n = chan * freq;
  for (int i = 0; i < n; ++i) {
    const double v = static_cast<double>(x[i]);
    st.sum += v;
    st.sumsq += v * v;
  }
  st.count += n;
  S mu, inv;
  detail::cgln_moments(st, eps, mu, inv);
  for (int e = 0; e < chan; ++e)
    for (int f = 0; f < freq; ++f)
      y[e * freq + f] = gamma(e) * (x[e * freq + f] - mu) * inv + beta(e);
}

template <typename S>
TensorT<S> cgln_3d(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                   double eps) {
  if (x.rank() != 3) throw std::invalid_argument("cgln_3d: x must be E x T x F");
  const int chan = x.dim(0), t_len = x.dim(1), freq = x.dim(2);
  if (gamma.dim(0) != chan || beta.dim(0) != chan)
    throw std::invalid_argument("cgln_3d: gamma/beta length mismatch");
  if (eps <= 0.0) throw std::invalid_argument("cgln_3d: eps must be > 0");
  TensorT<S> y({chan, t_len, freq});
  CglnStats st;
  std::vector<S> frame(static_cast<size_t>(chan) * freq), out(frame.size());
  for (int t = 0; t < t_len; ++t) {
    for (int e = 0; e < chan; ++e)
      for (int f = 0; f < freq; ++f) frame[static_cast<size_t>(e) * freq + f] = x(e, t, f);
    cgln_3d_stream(frame.data(), chan, freq, gamma, beta, eps, st, out.data());
    for (int e = 0; e < chan; ++e)
      for (int f = 0; f < freq; ++f) y(e, t, f) = out[static_cast<size_t>(e) * freq + f];
  }
  return y;
}

// PReLU with a single shared slope per instance.
template <typename S>
TensorT<S> prelu(const TensorT<S>& x, S slope) {
  TensorT<S> y = x;
  S* d = y.data();
  for (long long i = 0; i < y.size(); ++i)
    if (d[i] < S(0)) d[i] *= slope;
  return y;
}

// Affine map per frame: x is T x N, w is M x N, result T x M.
template <typename S>
TensorT<S> linear(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1)
    throw std::invalid_argument("linear: expected T x N input, M x N weight, M bias");
  const int t_len = x.dim(0), in_dim = x.dim(1);
  const int out_dim = w.dim(0);
  if (w.dim(1) != in_dim || b.dim(0) != out_dim)
    throw std::invalid_argument("linear: weight/bias shape mismatch");
  TensorT<S> y({t_len, out_dim});
  for (int t = 0; t < t_len; ++t)
    for (int m = 0; m < out_dim; ++m) y(t, m) = dot(&w(m, 0), &x(t, 0), in_dim) + b(m);
  macs::add(static_cast<std::uint64_t>(t_len) * out_dim * in_dim);
  return y;
}

template <typename S>
TensorT<S> pad_freq(const TensorT<S>& x, int lo, int hi) {
  if (x.rank() != 3) throw std::invalid_argument("pad_freq: x must be rank 3");
  if (lo < 0 || hi < 0) throw std::invalid_argument("pad_freq: negative padding");
  const int c = x.dim(0), t_len = x.dim(1), f = x.dim(2);
  TensorT<S> y({c, t_len, f + lo + hi});
  for (int ci = 0; ci < c; ++ci)
    for (int t = 0; t < t_len; ++t)
      for (int k = 0; k < f; ++k) y(ci, t, lo + k) = x(ci, t, k);
  return y;
}

template <typename S>
TensorT<S> slice_freq(const TensorT<S>& x, int start, int len) {
  if (x.rank() != 3) throw std::invalid_argument("slice_freq: x must be rank 3");
  if (start < 0 || len < 1 || start + len > x.dim(2))
    throw std::invalid_argument("slice_freq: range out of bounds");
  const int c = x.dim(0), t_len = x.dim(1);
  TensorT<S> y({c, t_len, len});
  for (int ci = 0; ci < c; ++ci)
    for (int t = 0; t < t_len; ++t)
      for (int k = 0; k < len; ++k) y(ci, t, k) = x(ci, t, start + k);
  return y;
}

template <typename S>
TensorT<S> concat_freq(const std::vector<TensorT<S>>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_freq: empty input");
  const int c = xs[0].dim(0), t_len = xs[0].dim(1);
  int total = 0;
  for (const auto& x : xs) {
    if (x.rank() != 3 || x.dim(0) != c || x.dim(1) != t_len)
      throw std::invalid_argument("concat_freq: shape mismatch");
    total += x.dim(2);
  }
  TensorT<S> y({c, t_len, total});
  int off = 0;
  for (const auto& x : xs) {
    for (int ci = 0; ci < c; ++ci)
      for (int t = 0; t < t_len; ++t)
        for (int k = 0; k < x.dim(2); ++k) y(ci, t, off + k) = x(ci, t, k);
    off += x.dim(2);
  }
  return y;
}

// E x T x K -> T x (E*K): each frame's channel/frequency grid flattened to one
// feature vector, channel-major.
template <typename S>
TensorT<S> merge_chan_freq(const TensorT<S>& x) {
  if (x.rank() != 3) throw std::invalid_argument("merge_chan_freq: x must be rank 3");
  const int e = x.dim(0), t_len = x.dim(1), k = x.dim(2);
  TensorT<S> y({t_len, e * k});
  for (int ei = 0; ei < e; ++ei)
    for (int t = 0; t < t_len; ++t)
      for (int ki = 0; ki < k; ++ki) y(t, ei * k + ki) = x(ei, t, ki);
  return y;
}

template <typename S>
TensorT<S> split_chan_freq(const TensorT<S>& x, int e, int k) {
  if (x.rank() != 2) throw std::invalid_argument("split_chan_freq: x must be rank 2");
  if (x.dim(1) != e * k) throw std::invalid_argument("split_chan_freq: feature dim != E*K");
  const int t_len = x.dim(0);
  TensorT<S> y({e, t_len, k});
  for (int ei = 0; ei < e; ++ei)
    for (int t = 0; t < t_len; ++t)
      for (int ki = 0; ki < k; ++ki) y(ei, t, ki) = x(t, ei * k + ki);
  return y;
}

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("add: shape mismatch");
  TensorT<S> y = a;
  const S* bd = b.data();
  S* yd = y.data();
  for (long long i = 0; i < y.size(); ++i) yd[i] += bd[i];
  return y;
}

}  // namespace fsbnet::ops
