#include "fsbnet/autodiff.hpp"

#include <cmath>
#include <numbers>

#include "fsbnet/ops.hpp"

namespace fsbnet::ad {

int Tape::input(TensorD v) {
  values_.push_back(std::move(v));
  return static_cast<int>(values_.size()) - 1;
}

int Tape::alloc_var(std::vector<int> shape) {
  values_.push_back(shape.empty() ? TensorD() : TensorD(std::move(shape)));
  return static_cast<int>(values_.size()) - 1;
}

void Tape::record(std::unique_ptr<Node> node) {
  Node* n = node.get();
  nodes_.push_back(std::move(node));
  n->forward(*this);
}

void Tape::replay() {
  for (auto& n : nodes_) n->forward(*this);
}

void Tape::backward(int seed) {
  if (nodes_.empty()) throw std::invalid_argument("backward: tape is empty");
  if (val(seed).size() != 1) throw std::invalid_argument("backward: seed must be scalar");
  grads_.clear();
  grads_.reserve(values_.size());
  for (const auto& v : values_) grads_.emplace_back(v.shape());
  grads_[static_cast<size_t>(seed)](0) = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)->backward(*this);
}

namespace {

using T = TensorD;

struct ConvFreqNode : Node {
  int stride;
  void forward(Tape& t) override {
    t.mutable_val(out[0]) = ops::conv_freq(t.val(in[0]), t.val(in[1]), t.val(in[2]), stride);
  }
  void backward(Tape& t) override {
    const T& x = t.val(in[0]);
    const T& w = t.val(in[1]);
    const T& gy = t.grad(out[0]);
    T& gx = t.mutable_grad(in[0]);
    T& gw = t.mutable_grad(in[1]);
    T& gb = t.mutable_grad(in[2]);
    const int cout = gy.dim(0), t_len = gy.dim(1), fout = gy.dim(2);
    const int cin = x.dim(0), ksize = w.dim(2);
    for (int tt = 0; tt < t_len; ++tt)
      for (int co = 0; co < cout; ++co)
        for (int fo = 0; fo < fout; ++fo) {
          const double g = gy(co, tt, fo);
          if (g == 0.0) continue;
          gb(co) += g;
          for (int ci = 0; ci < cin; ++ci)
            for (int i = 0; i < ksize; ++i) {
              gx(ci, tt, fo * stride + i) += w(co, ci, i) * g;
              gw(co, ci, i) += x(ci, tt, fo * stride + i) * g;
            }
        }
  }
};

struct DeconvFreqNode : Node {
  int stride;
  void forward(Tape& t) override {
    t.mutable_val(out[0]) = ops::deconv_freq(t.val(in[0]), t.val(in[1]), t.val(in[2]), stride);
  }
  void backward(Tape& t) override {
    const T& x = t.val(in[0]);
    const T& w = t.val(in[1]);
    const T& gy = t.grad(out[0]);
    T& gx = t.mutable_grad(in[0]);
    T& gw = t.mutable_grad(in[1]);
    T& gb = t.mutable_grad(in[2]);
    const int cin = x.dim(0), t_len = x.dim(1), fin = x.dim(2);
    const int cout = w.dim(1), ksize = w.dim(2);
    for (int tt = 0; tt < t_len; ++tt)
      for (int fi = 0; fi < fin; ++fi)
        for (int ci = 0; ci < cin; ++ci) {
          const double xv = x(ci, tt, fi);
          double acc = 0.0;
          for (int co = 0; co < cout; ++co)
            for (int i = 0; i < ksize; ++i) {
              const double g = gy(co, tt, fi * stride + i);
              acc += w(ci, co, i) * g;
              gw(ci, co, i) += xv * g;
            }
          gx(ci, tt, fi) += acc;
        }
    const int fout = gy.dim(2);
    for (int co = 0; co < cout; ++co)
      for (int tt = 0; tt < t_len; ++tt)
        for (int fo = 0; fo < fout; ++fo) gb(co) += gy(co, tt, fo);
  }
};

// Shared piece of the LSTM adjoint: given activated gates and upstream grads
// for one step, produce pre-activation gate grads and the carried state grads.
inline void lstm_step_adjoint(int hidden, const double* gates, const double* c_prev,
                              const double* c_new, const double* gh, const double* gc,
                              double* dz, double* gc_prev) {
  for (int u = 0; u < hidden; ++u) {
    const double ig = gates[u];
    const double fg = gates[hidden + u];
    const double gg = gates[2 * hidden + u];
    const double og = gates[3 * hidden + u];
    const double th = std::tanh(c_new[u]);
    const double go = gh[u] * th;
    const double dc = gc[u] + gh[u] * og * (1.0 - th * th);
    dz[u] = dc * gg * ig * (1.0 - ig);
    dz[hidden + u] = dc * c_prev[u] * fg * (1.0 - fg);
    dz[2 * hidden + u] = dc * ig * (1.0 - gg * gg);
    dz[3 * hidden + u] = go * og * (1.0 - og);
    gc_prev[u] = dc * fg;
  }
}

struct LstmStepNode : Node {
  T gates;  // activated i,f,g,o saved by forward
  void forward(Tape& t) override {
    T h2, c2;
    ops::lstm_step(t.val(in[0]), t.val(in[1]), t.val(in[2]), t.val(in[3]), t.val(in[4]),
                   t.val(in[5]), t.val(in[6]), h2, c2, &gates);
    t.mutable_val(out[0]) = std::move(h2);
    t.mutable_val(out[1]) = std::move(c2);
  }
  void backward(Tape& t) override {
    const T& x = t.val(in[0]);
    const T& h = t.val(in[1]);
    const T& c = t.val(in[2]);
    const T& wi = t.val(in[3]);
    const T& wh = t.val(in[4]);
    const T& c2 = t.val(out[1]);
    const T& gh2 = t.grad(out[0]);
    const T& gc2 = t.grad(out[1]);
    const int in_dim = x.dim(0), hidden = h.dim(0);

    std::vector<double> dz(static_cast<size_t>(4) * hidden);
    std::vector<double> gc_prev(static_cast<size_t>(hidden));
    lstm_step_adjoint(hidden, gates.data(), c.data(), c2.data(), gh2.data(), gc2.data(),
                      dz.data(), gc_prev.data());

    T& gx = t.mutable_grad(in[0]);
    T& gh = t.mutable_grad(in[1]);
    T& gc = t.mutable_grad(in[2]);
    T& gwi = t.mutable_grad(in[3]);
    T& gwh = t.mutable_grad(in[4]);
    T& gbi = t.mutable_grad(in[5]);
    T& gbh = t.mutable_grad(in[6]);
    for (int r = 0; r < 4 * hidden; ++r) {
      const double d = dz[r];
      if (d == 0.0) continue;
      gbi(r) += d;
      gbh(r) += d;
      for (int n = 0; n < in_dim; ++n) {
        gx(n) += wi(r, n) * d;
        gwi(r, n) += x(n) * d;
      }
      for (int n = 0; n < hidden; ++n) {
        gh(n) += wh(r, n) * d;
        gwh(r, n) += h(n) * d;
      }
    }
    for (int u = 0; u < hidden; ++u) gc(u) += gc_prev[u];
  }
};

struct LstmSeqNode : Node {
  T gates;  // T x 4H activated
  T cells;  // T x H
  void forward(Tape& t) override {
    const T& x = t.val(in[0]);
    const T& wi = t.val(in[1]);
    const T& wh = t.val(in[2]);
    const T& bi = t.val(in[3]);
    const T& bh = t.val(in[4]);
    if (x.rank() != 2) throw std::invalid_argument("lstm_seq: x must be T x in");
    const int t_len = x.dim(0), in_dim = x.dim(1);
    const int hidden = wh.dim(1);
    T y({t_len, hidden});
    gates = T({t_len, 4 * hidden});
    cells = T({t_len, hidden});
    T h({hidden}), c({hidden}), h2({hidden}), c2({hidden}), g({4 * hidden});
    for (int tt = 0; tt < t_len; ++tt) {
      T xt = T::from({in_dim}, std::vector<double>(&x(tt, 0), &x(tt, 0) + in_dim));
      ops::lstm_step(xt, h, c, wi, wh, bi, bh, h2, c2, &g);
      std::copy(h2.data(), h2.data() + hidden, &y(tt, 0));
      std::copy(c2.data(), c2.data() + hidden, &cells(tt, 0));
      std::copy(g.data(), g.data() + 4 * hidden, &gates(tt, 0));
      std::swap(h, h2);
      std::swap(c, c2);
    }
    t.mutable_val(out[0]) = std::move(y);
  }
  void backward(Tape& t) override {
    const T& x = t.val(in[0]);
    const T& wi = t.val(in[1]);
    const T& wh = t.val(in[2]);
    const T& y = t.val(out[0]);
    const T& gy = t.grad(out[0]);
    const int t_len = x.dim(0), in_dim = x.dim(1), hidden = wi.dim(0) / 4;

    T& gx = t.mutable_grad(in[0]);
    T& gwi = t.mutable_grad(in[1]);
    T& gwh = t.mutable_grad(in[2]);
    T& gbi = t.mutable_grad(in[3]);
    T& gbh = t.mutable_grad(in[4]);

    std::vector<double> gh(static_cast<size_t>(hidden), 0.0);
    std::vector<double> gc(static_cast<size_t>(hidden), 0.0);
    std::vector<double> dz(static_cast<size_t>(4) * hidden);
    std::vector<double> gc_prev(static_cast<size_t>(hidden));
    const std::vector<double> zeros(static_cast<size_t>(hidden), 0.0);
    for (int tt = t_len - 1; tt >= 0; --tt) {
      for (int u = 0; u < hidden; ++u) gh[u] += gy(tt, u);
      const double* c_prev = tt > 0 ? &cells(tt - 1, 0) : zeros.data();
      lstm_step_adjoint(hidden, &gates(tt, 0), c_prev, &cells(tt, 0), gh.data(), gc.data(),
                        dz.data(), gc_prev.data());
      std::fill(gh.begin(), gh.end(), 0.0);
      const double* h_prev = tt > 0 ? &y(tt - 1, 0) : zeros.data();
      for (int r = 0; r < 4 * hidden; ++r) {
        const double d = dz[r];
        if (d == 0.0) continue;
        gbi(r) += d;
        gbh(r) += d;
        for (int n = 0; n < in_dim; ++n) {
          gx(tt, n) += wi(r, n) * d;
          gwi(r, n) += x(tt, n) * d;
        }
        for (int n = 0; n < hidden; ++n) {
          gh[n] += wh(r, n) * d;
          gwh(r, n) += h_prev[n] * d;
        }
      }
      std::copy(gc_prev.begin(), gc_prev.end(), gc.begin());
    }
  }
};

// Offline causal global layer norm over T x A. Saved per frame: mean, 1/std.
struct Cgln2dNode : Node {
  double eps;
  std::vector<double> mu, inv;
  void forward(Tape& t) override {
    const T& x = t.val(in[0]);
    t.mutable_val(out[0]) = ops::cgln_2d(x, t.val(in[1]), t.val(in[2]), eps);
    const int t_len = x.dim(0), feat = x.dim(1);
    mu.resize(t_len);
    inv.resize(t_len);
    ops::CglnStats st;
    for (int tt = 0; tt < t_len; ++tt) {
      for (int a = 0; a < feat; ++a) {
        st.sum += x(tt, a);
        st.sumsq += x(tt, a) * x(tt, a);
      }
      st.count += feat;
      double m, iv;
      ops::detail::cgln_moments(st, eps, m, iv);
      mu[tt] = m;
      inv[tt] = iv;
    }
  }
  void backward(Tape& t) override {
    const T& x = t.val(in[0]);
    const T& gamma = t.val(in[1]);
    const T& gy = t.grad(out[0]);
    T& gx = t.mutable_grad(in[0]);
    T& gg = t.mutable_grad(in[1]);
    T& gb = t.mutable_grad(in[2]);
    const int t_len = x.dim(0), feat = x.dim(1);

    std::vector<double> g1(t_len), g2(t_len);
    for (int tt = 0; tt < t_len; ++tt) {
      double a1 = 0.0, a2 = 0.0;
      for (int a = 0; a < feat; ++a) {
        const double gg_ = gamma(a) * gy(tt, a);
        a1 += gg_;
        a2 += gg_ * (x(tt, a) - mu[tt]);
        gg(a) += gy(tt, a) * (x(tt, a) - mu[tt]) * inv[tt];
        gb(a) += gy(tt, a);
      }
      g1[tt] = a1;
      g2[tt] = a2;
    }
    // Suffix sums over frames that see frame tau through the running stats.
    double s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (int tau = t_len - 1; tau >= 0; --tau) {
      const double n = static_cast<double>(tau + 1) * feat;
      const double i1 = inv[tau], i3 = i1 * i1 * i1;
      s1 += g1[tau] * i1 / n;
      s2 += g2[tau] * i3 / n;
      s3 += mu[tau] * g2[tau] * i3 / n;
      for (int a = 0; a < feat; ++a)
        gx(tau, a) += gamma(a) * gy(tau, a) * i1 - s1 - x(tau, a) * s2 + s3;
    }
  }
};

struct Cgln3dNode : Node {
  double eps;
  std::vector<double> mu, inv;
  void forward(Tape& t) override {
    const T& x = t.val(in[0]);
    t.mutable_val(out[0]) = ops::cgln_3d(x, t.val(in[1]), t.val(in[2]), eps);
    const int chan = x.dim(0), t_len = x.dim(1), freq = x.dim(2);
    mu.resize(t_len);
    inv.resize(t_len);
    ops::CglnStats st;
    for (int tt = 0; tt < t_len; ++tt) {
      for (int e = 0; e < chan; ++e)
        for (int f = 0; f < freq; ++f) {
          st.sum += x(e, tt, f);
          st.sumsq += x(e, tt, f) * x(e, tt, f);
        }
      st.count += chan * freq;
      double m, iv;
      ops::detail::cgln_moments(st, eps, m, iv);
      mu[tt] = m;
      inv[tt] = iv;
    }
  }
  void backward(Tape& t) override {
    const T& x = t.val(in[0]);
    const T& gamma = t.val(in[1]);
    const T& gy = t.grad(out[0]);
    T& gx = t.mutable_grad(in[0]);
    T& gg = t.mutable_grad(in[1]);
    T& gb = t.mutable_grad(in[2]);
    const int chan = x.dim(0), t_len = x.dim(1), freq = x.dim(2);

    std::vector<double> g1(t_len), g2(t_len);
    for (int tt = 0; tt < t_len; ++tt) {
      double a1 = 0.0, a2 = 0.0;
      for (int e = 0; e < chan; ++e)
        for (int f = 0; f < freq; ++f) {
          const double gg_ = gamma(e) * gy(e, tt, f);
          a1 += gg_;
          a2 += gg_ * (x(e, tt, f) - mu[tt]);
          gg(e) += gy(e, tt, f) * (x(e, tt, f) - mu[tt]) * inv[tt];
          gb(e) += gy(e, tt, f);
        }
      g1[tt] = a1;
      g2[tt] = a2;
    }
    double s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (int tau = t_len - 1; tau >= 0; --tau) {
      const double n = static_cast<double>(tau + 1) * chan * freq;
      const double i1 = inv[tau], i3 = i1 * i1 * i1;
      s1 += g1[tau] * i1 / n;
      s2 += g2[tau] * i3 / n;
      s3 += mu[tau] * g2[tau] * i3 / n;
      for (int e = 0; e < chan; ++e)
        for (int f = 0; f < freq; ++f)
          gx(e, tau, f) += gamma(e) * gy(e, tau, f) * i1 - s1 - x(e, tau, f) * s2 + s3;
    }
  }
};

// One streamed frame of cGLN. in: {x, gamma, beta, stats[sum,sumsq,count]},
// out: {y, stats'}. The 2d flavour treats x as 1 x A with per-feature affine,
// the 3d flavour as E x 1 x F with per-channel affine.
struct CglnStreamNode : Node {
  double eps;
  bool per_channel;
  double mu = 0.0, inv = 0.0, n = 0.0;

  void forward(Tape& t) override {
    const T& x = t.val(in[0]);
    const T& gamma = t.val(in[1]);
    const T& beta = t.val(in[2]);
    const T& st_in = t.val(in[3]);
    if (st_in.size() != 3) throw std::invalid_argument("cgln_stream: stats must be [sum,sumsq,count]");
    const long long elems = x.size();
    double sum = st_in(0), sumsq = st_in(1);
    for (long long i = 0; i < elems; ++i) {
      const double v = x.data()[i];
      sum += v;
      sumsq += v * v;
    }
    n = st_in(2) + static_cast<double>(elems);
    mu = sum / n;
    double var = sumsq / n - mu * mu;
    if (var < 0.0) var = 0.0;
    inv = 1.0 / std::sqrt(var + eps);

    T y(x.shape());
    const int freq = per_channel ? x.dim(2) : 1;
    for (long long i = 0; i < elems; ++i) {
      const int a = per_channel ? static_cast<int>(i / freq) : static_cast<int>(i);
      y.data()[i] = gamma(a) * (x.data()[i] - mu) * inv + beta(a);
    }
    t.mutable_val(out[0]) = std::move(y);
    t.mutable_val(out[1]) = T::from({3}, {sum, sumsq, n});
  }

  void backward(Tape& t) override {
    const T& x = t.val(in[0]);
    const T& gamma = t.val(in[1]);
    const T& gy = t.grad(out[0]);
    const T& gst_out = t.grad(out[1]);
    T& gx = t.mutable_grad(in[0]);
    T& gg = t.mutable_grad(in[1]);
    T& gb = t.mutable_grad(in[2]);
    T& gst_in = t.mutable_grad(in[3]);
    const long long elems = x.size();
    const int freq = per_channel ? x.dim(2) : 1;
    const double gs = gst_out(0), gq = gst_out(1);

    double a1 = 0.0, a2 = 0.0;
    for (long long i = 0; i < elems; ++i) {
      const int a = per_channel ? static_cast<int>(i / freq) : static_cast<int>(i);
      const double gg_ = gamma(a) * gy.data()[i];
      a1 += gg_;
      a2 += gg_ * (x.data()[i] - mu);
      gg(a) += gy.data()[i] * (x.data()[i] - mu) * inv;
      gb(a) += gy.data()[i];
    }
    const double i3 = inv * inv * inv;
    for (long long i = 0; i < elems; ++i) {
      const int a = per_channel ? static_cast<int>(i / freq) : static_cast<int>(i);
      const double xv = x.data()[i];
      gx.data()[i] += gamma(a) * gy.data()[i] * inv - a1 * inv / n -
                      (xv - mu) * a2 * i3 / n + gs + 2.0 * xv * gq;
    }
    gst_in(0) += -a1 * inv / n + mu * a2 * i3 / n + gs;
    gst_in(1) += -a2 * i3 / (2.0 * n) + gq;
    gst_in(2) += gst_out(2);
  }
};

struct PreluNode : Node {
  void forward(Tape& t) override {
    const T& x = t.val(in[0]);
    const T& a = t.val(in[1]);
    if (a.size() != 1) throw std::invalid_argument("prelu: slope must be a single scalar");
    t.mutable_val(out[0]) = ops::prelu(x, a(0));
  }
  void backward(Tape& t) override {
    const T& x = t.val(in[0]);
    const T& a = t.val(in[1]);
    const T& gy = t.grad(out[0]);
    T& gx = t.mutable_grad(in[0]);
    T& ga = t.mutable_grad(in[1]);
    const double slope = a(0);
    for (long long i = 0; i < x.size(); ++i) {
      if (x.data()[i] >= 0.0) {
        gx.data()[i] += gy.data()[i];
      } else {
        gx.data()[i] += slope * gy.data()[i];
        ga(0) += x.data()[i] * gy.data()[i];
      }
    }
  }
};

struct LinearNode : Node {
  void forward(Tape& t) override {
    t.mutable_val(out[0]) = ops::linear(t.val(in[0]), t.val(in[1]), t.val(in[2]));
  }
  void backward(Tape& t) override {
    const T& x = t.val(in[0]);
    const T& w = t.val(in[1]);
    const T& gy = t.grad(out[0]);
    T& gx = t.mutable_grad(in[0]);
    T& gw = t.mutable_grad(in[1]);
    T& gb = t.mutable_grad(in[2]);
    const int t_len = x.dim(0), in_dim = x.dim(1), out_dim = w.dim(0);
    for (int tt = 0; tt < t_len; ++tt)
      for (int m = 0; m < out_dim; ++m) {
        const double g = gy(tt, m);
        if (g == 0.0) continue;
        gb(m) += g;
        for (int nn = 0; nn < in_dim; ++nn) {
          gx(tt, nn) += w(m, nn) * g;
          gw(m, nn) += x(tt, nn) * g;
        }
      }
  }
};

struct PadFreqNode : Node {
  int lo, hi;
  void forward(Tape& t) override { t.mutable_val(out[0]) = ops::pad_freq(t.val(in[0]), lo, hi); }
  void backward(Tape& t) override {
    const T& gy = t.grad(out[0]);
    T& gx = t.mutable_grad(in[0]);
    for (int c = 0; c < gx.dim(0); ++c)
      for (int tt = 0; tt < gx.dim(1); ++tt)
        for (int f = 0; f < gx.dim(2); ++f) gx(c, tt, f) += gy(c, tt, lo + f);
  }
};

struct SliceFreqNode : Node {
  int start, len;
  void forward(Tape& t) override {
    t.mutable_val(out[0]) = ops::slice_freq(t.val(in[0]), start, len);
  }
  void backward(Tape& t) override {
    const T& gy = t.grad(out[0]);
    T& gx = t.mutable_grad(in[0]);
    for (int c = 0; c < gy.dim(0); ++c)
      for (int tt = 0; tt < gy.dim(1); ++tt)
        for (int f = 0; f < len; ++f) gx(c, tt, start + f) += gy(c, tt, f);
  }
};

struct SliceTimeNode : Node {
  int start, len;
  void forward(Tape& t) override {
    const T& x = t.val(in[0]);
    if (x.rank() != 3) throw std::invalid_argument("slice_time: x must be rank 3");
    if (start < 0 || len < 1 || start + len > x.dim(1))
      throw std::invalid_argument("slice_time: range out of bounds");
    T y({x.dim(0), len, x.dim(2)});
    for (int c = 0; c < x.dim(0); ++c)
      for (int tt = 0; tt < len; ++tt)
        for (int f = 0; f < x.dim(2); ++f) y(c, tt, f) = x(c, start + tt, f);
    t.mutable_val(out[0]) = std::move(y);
  }
  void backward(Tape& t) override {
    const T& gy = t.grad(out[0]);
    T& gx = t.mutable_grad(in[0]);
    for (int c = 0; c < gy.dim(0); ++c)
      for (int tt = 0; tt < len; ++tt)
        for (int f = 0; f < gy.dim(2); ++f) gx(c, start + tt, f) += gy(c, tt, f);
  }
};

struct ConcatTimeNode : Node {
  void forward(Tape& t) override {
    int total = 0;
    const T& x0 = t.val(in[0]);
    for (int id : in) total += t.val(id).dim(1);
    T y({x0.dim(0), total, x0.dim(2)});
    int off = 0;
    for (int id : in) {
      const T& x = t.val(id);
      if (x.dim(0) != x0.dim(0) || x.dim(2) != x0.dim(2))
        throw std::invalid_argument("concat_time: shape mismatch");
      for (int c = 0; c < x.dim(0); ++c)
        for (int tt = 0; tt < x.dim(1); ++tt)
          for (int f = 0; f < x.dim(2); ++f) y(c, off + tt, f) = x(c, tt, f);
      off += x.dim(1);
    }
    t.mutable_val(out[0]) = std::move(y);
  }
  void backward(Tape& t) override {
    const T& gy = t.grad(out[0]);
    int off = 0;
    for (int id : in) {
      T& gx = t.mutable_grad(id);
      for (int c = 0; c < gx.dim(0); ++c)
        for (int tt = 0; tt < gx.dim(1); ++tt)
          for (int f = 0; f < gx.dim(2); ++f) gx(c, tt, f) += gy(c, off + tt, f);
      off += gx.dim(1);
    }
  }
};

struct ConcatFreqNode : Node {
  void forward(Tape& t) override {
    std::vector<T> xs;
    xs.reserve(in.size());
    for (int id : in) xs.push_back(t.val(id));
    t.mutable_val(out[0]) = ops::concat_freq(xs);
  }
  void backward(Tape& t) override {
    const T& gy = t.grad(out[0]);
    int off = 0;
    for (int id : in) {
      T& gx = t.mutable_grad(id);
      for (int c = 0; c < gx.dim(0); ++c)
        for (int tt = 0; tt < gx.dim(1); ++tt)
          for (int f = 0; f < gx.dim(2); ++f) gx(c, tt, f) += gy(c, tt, off + f);
      off += gx.dim(2);
    }
  }
};

struct MergeChanFreqNode : Node {
  void forward(Tape& t) override { t.mutable_val(out[0]) = ops::merge_chan_freq(t.val(in[0])); }
  void backward(Tape& t) override {
    const T& gy = t.grad(out[0]);
    T& gx = t.mutable_grad(in[0]);
    const int e = gx.dim(0), t_len = gx.dim(1), k = gx.dim(2);
    for (int ei = 0; ei < e; ++ei)
      for (int tt = 0; tt < t_len; ++tt)
        for (int ki = 0; ki < k; ++ki) gx(ei, tt, ki) += gy(tt, ei * k + ki);
  }
};

struct SplitChanFreqNode : Node {
  int e, k;
  void forward(Tape& t) override {
    t.mutable_val(out[0]) = ops::split_chan_freq(t.val(in[0]), e, k);
  }
  void backward(Tape& t) override {
    const T& gy = t.grad(out[0]);
    T& gx = t.mutable_grad(in[0]);
    for (int ei = 0; ei < e; ++ei)
      for (int tt = 0; tt < gy.dim(1); ++tt)
        for (int ki = 0; ki < k; ++ki) gx(tt, ei * k + ki) += gy(ei, tt, ki);
  }
};

struct ReshapeNode : Node {
  std::vector<int> shape;
  void forward(Tape& t) override {
    const T& x = t.val(in[0]);
    t.mutable_val(out[0]) = T::from(shape, x.raw());
  }
  void backward(Tape& t) override {
    const T& gy = t.grad(out[0]);
    T& gx = t.mutable_grad(in[0]);
    for (long long i = 0; i < gx.size(); ++i) gx.data()[i] += gy.data()[i];
  }
};

struct AddNode : Node {
  void forward(Tape& t) override { t.mutable_val(out[0]) = ops::add(t.val(in[0]), t.val(in[1])); }
  void backward(Tape& t) override {
    const T& gy = t.grad(out[0]);
    T& ga = t.mutable_grad(in[0]);
    T& gb = t.mutable_grad(in[1]);
    for (long long i = 0; i < gy.size(); ++i) {
      ga.data()[i] += gy.data()[i];
      gb.data()[i] += gy.data()[i];
    }
  }
};

// cos(2*pi*j*n/N) and sin(2*pi*j*n/N) over bins x window positions.
struct TrigTable {
  int bins, len;
  std::vector<double> c, s;
  TrigTable(int dft_size, int bins_, int len_) : bins(bins_), len(len_) {
    c.resize(static_cast<size_t>(bins) * len);
    s.resize(static_cast<size_t>(bins) * len);
    for (int j = 0; j < bins; ++j)
      for (int n = 0; n < len; ++n) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(j) * n / dft_size;
        c[static_cast<size_t>(j) * len + n] = std::cos(a);
        s[static_cast<size_t>(j) * len + n] = std::sin(a);
      }
  }
};

struct IstftNode : Node {
  StftConfig cfg;
  long long out_len;
  std::unique_ptr<TrigTable> table;

  void forward(Tape& t) override {
    const T& ri = t.val(in[0]);
    std::vector<double> wave = offline_istft(ri, cfg, out_len);
    t.mutable_val(out[0]) = T::vec(std::move(wave));
  }
  void backward(Tape& t) override {
    if (!table) table = std::make_unique<TrigTable>(cfg.dft_size, cfg.bins(), cfg.iws);
    const T& gy = t.grad(out[0]);
    T& gri = t.mutable_grad(in[0]);
    const int t_len = gri.dim(1), bins = cfg.bins();
    const std::vector<double> win = synthesis_window(cfg);
    const int n0 = cfg.iws - cfg.ows;
    const double scale1 = 1.0 / cfg.dft_size, scale2 = 2.0 / cfg.dft_size;
    std::vector<double> gf(static_cast<size_t>(cfg.ows));
    for (int k = 0; k < t_len; ++k) {
      bool any = false;
      for (int j = 0; j < cfg.ows; ++j) {
        const long long m = static_cast<long long>(k) * cfg.hs + j;
        gf[j] = (m >= 0 && m < out_len) ? gy(static_cast<int>(m)) * win[j] : 0.0;
        any = any || gf[j] != 0.0;
      }
      if (!any) continue;
      for (int j = 0; j < bins; ++j) {
        double cs = 0.0, sn = 0.0;
        const double* cj = &table->c[static_cast<size_t>(j) * cfg.iws + n0];
        const double* sj = &table->s[static_cast<size_t>(j) * cfg.iws + n0];
        for (int u = 0; u < cfg.ows; ++u) {
          cs += gf[u] * cj[u];
          sn += gf[u] * sj[u];
        }
        if (j == 0 || j == bins - 1) {
          gri(0, k, j) += cs * scale1;
        } else {
          gri(0, k, j) += cs * scale2;
          gri(1, k, j) += -sn * scale2;
        }
      }
    }
  }
};

struct StftNode : Node {
  StftConfig cfg;
  std::unique_ptr<TrigTable> table;

  void forward(Tape& t) override {
    const T& wave = t.val(in[0]);
    if (wave.rank() != 1) throw std::invalid_argument("stft: wave must be rank 1");
    std::vector<double> sig(wave.data(), wave.data() + wave.size());
    t.mutable_val(out[0]) = offline_stft(sig, cfg);
  }
  void backward(Tape& t) override {
    if (!table) table = std::make_unique<TrigTable>(cfg.dft_size, cfg.bins(), cfg.iws);
    const T& gy = t.grad(out[0]);
    T& gw = t.mutable_grad(in[0]);
    const int t_len = gy.dim(1), bins = cfg.bins();
    const long long pad = cfg.left_pad();
    const long long sig_len = gw.size();
    for (int k = 0; k < t_len; ++k) {
      for (int n = 0; n < cfg.iws; ++n) {
        const long long idx = static_cast<long long>(k) * cfg.hs + n - pad;
        if (idx < 0 || idx >= sig_len) continue;
        double acc = 0.0;
        for (int j = 0; j < bins; ++j) {
          acc += gy(0, k, j) * table->c[static_cast<size_t>(j) * cfg.iws + n] -
                 gy(1, k, j) * table->s[static_cast<size_t>(j) * cfg.iws + n];
        }
        gw(static_cast<int>(idx)) += acc;
      }
    }
  }
};

struct MagnitudeNode : Node {
  void forward(Tape& t) override {
    const T& ri = t.val(in[0]);
    if (ri.rank() != 3 || ri.dim(0) != 2)
      throw std::invalid_argument("magnitude: expected 2 x T x F");
    T y({ri.dim(1), ri.dim(2)});
    for (int tt = 0; tt < ri.dim(1); ++tt)
      for (int f = 0; f < ri.dim(2); ++f)
        y(tt, f) = std::hypot(ri(0, tt, f), ri(1, tt, f));
    t.mutable_val(out[0]) = std::move(y);
  }
  void backward(Tape& t) override {
    const T& ri = t.val(in[0]);
    const T& y = t.val(out[0]);
    const T& gy = t.grad(out[0]);
    T& gri = t.mutable_grad(in[0]);
    for (int tt = 0; tt < ri.dim(1); ++tt)
      for (int f = 0; f < ri.dim(2); ++f) {
        const double m = y(tt, f);
        if (m == 0.0) continue;
        gri(0, tt, f) += gy(tt, f) * ri(0, tt, f) / m;
        gri(1, tt, f) += gy(tt, f) * ri(1, tt, f) / m;
      }
  }
};

struct L1MeanNode : Node {
  void forward(Tape& t) override {
    const T& a = t.val(in[0]);
    const T& b = t.val(in[1]);
    if (!a.same_shape(b)) throw std::invalid_argument("l1_mean: shape mismatch");
    double acc = 0.0;
    for (long long i = 0; i < a.size(); ++i) acc += std::abs(a.data()[i] - b.data()[i]);
    t.mutable_val(out[0]) = T::scalar(acc / static_cast<double>(a.size()));
  }
  void backward(Tape& t) override {
    const T& a = t.val(in[0]);
    const T& b = t.val(in[1]);
    const double g = t.grad(out[0])(0) / static_cast<double>(a.size());
    T& ga = t.mutable_grad(in[0]);
    T& gb = t.mutable_grad(in[1]);
    for (long long i = 0; i < a.size(); ++i) {
      const double d = a.data()[i] - b.data()[i];
      const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      ga.data()[i] += g * s;
      gb.data()[i] -= g * s;
    }
  }
};

struct SumSquaresNode : Node {
  void forward(Tape& t) override {
    const T& x = t.val(in[0]);
    double acc = 0.0;
    for (long long i = 0; i < x.size(); ++i) acc += x.data()[i] * x.data()[i];
    t.mutable_val(out[0]) = T::scalar(acc);
  }
  void backward(Tape& t) override {
    const T& x = t.val(in[0]);
    const double g = t.grad(out[0])(0);
    T& gx = t.mutable_grad(in[0]);
    for (long long i = 0; i < x.size(); ++i) gx.data()[i] += 2.0 * g * x.data()[i];
  }
};

struct SumAllNode : Node {
  void forward(Tape& t) override {
    const T& x = t.val(in[0]);
    double acc = 0.0;
    for (long long i = 0; i < x.size(); ++i) acc += x.data()[i];
    t.mutable_val(out[0]) = T::scalar(acc);
  }
  void backward(Tape& t) override {
    const double g = t.grad(out[0])(0);
    T& gx = t.mutable_grad(in[0]);
    for (long long i = 0; i < gx.size(); ++i) gx.data()[i] += g;
  }
};

template <typename N>
int record_1out(Tape& t, std::unique_ptr<N> node, std::vector<int> in) {
  const int y = t.alloc_var({});
  node->in = std::move(in);
  node->out = {y};
  t.record(std::move(node));
  return y;
}

}  // namespace

int conv_freq(Tape& t, int x, int w, int b, int stride) {
  auto n = std::make_unique<ConvFreqNode>();
  n->stride = stride;
  return record_1out(t, std::move(n), {x, w, b});
}

int deconv_freq(Tape& t, int x, int w, int b, int stride) {
  auto n = std::make_unique<DeconvFreqNode>();
  n->stride = stride;
  return record_1out(t, std::move(n), {x, w, b});
}

std::pair<int, int> lstm_step(Tape& t, int x, int h, int c, int wi, int wh, int bi, int bh) {
  auto n = std::make_unique<LstmStepNode>();
  const int h2 = t.alloc_var({});
  const int c2 = t.alloc_var({});
  n->in = {x, h, c, wi, wh, bi, bh};
  n->out = {h2, c2};
  t.record(std::move(n));
  return {h2, c2};
}

int lstm_seq(Tape& t, int x, int wi, int wh, int bi, int bh) {
  return record_1out(t, std::make_unique<LstmSeqNode>(), {x, wi, wh, bi, bh});
}

int cgln_2d(Tape& t, int x, int gamma, int beta, double eps) {
  auto n = std::make_unique<Cgln2dNode>();
  n->eps = eps;
  return record_1out(t, std::move(n), {x, gamma, beta});
}

int cgln_3d(Tape& t, int x, int gamma, int beta, double eps) {
  auto n = std::make_unique<Cgln3dNode>();
  n->eps = eps;
  return record_1out(t, std::move(n), {x, gamma, beta});
}

namespace {
std::pair<int, int> cgln_stream_impl(Tape& t, int x, int gamma, int beta, int stats, double eps,
                                     bool per_channel) {
  auto n = std::make_unique<CglnStreamNode>();
  n->eps = eps;
  n->per_channel = per_channel;
  const int y = t.alloc_var({});
  const int st = t.alloc_var({});
  n->in = {x, gamma, beta, stats};
  n->out = {y, st};
  t.record(std::move(n));
  return {y, st};
}
}  // namespace

std::pair<int, int> cgln_2d_stream(Tape& t, int x, int gamma, int beta, int stats, double eps) {
  return cgln_stream_impl(t, x, gamma, beta, stats, eps, false);
}

std::pair<int, int> cgln_3d_stream(Tape& t, int x, int gamma, int beta, int stats, double eps) {
  return cgln_stream_impl(t, x, gamma, beta, stats, eps, true);
}

int prelu(Tape& t, int x, int slope) {
  return record_1out(t, std::make_unique<PreluNode>(), {x, slope});
}

int linear(Tape& t, int x, int w, int b) {
  return record_1out(t, std::make_unique<LinearNode>(), {x, w, b});
}

int pad_freq(Tape& t, int x, int lo, int hi) {
  auto n = std::make_unique<PadFreqNode>();
  n->lo = lo;
  n->hi = hi;
  return record_1out(t, std::move(n), {x});
}

int slice_freq(Tape& t, int x, int start, int len) {
  auto n = std::make_unique<SliceFreqNode>();
  n->start = start;
  n->len = len;
  return record_1out(t, std::move(n), {x});
}

int slice_time(Tape& t, int x, int start, int len) {
  auto n = std::make_unique<SliceTimeNode>();
  n->start = start;
  n->len = len;
  return record_1out(t, std::move(n), {x});
}

int concat_time(Tape& t, const std::vector<int>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_time: empty input");
  return record_1out(t, std::make_unique<ConcatTimeNode>(), xs);
}

int concat_freq(Tape& t, const std::vector<int>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_freq: empty input");
  return record_1out(t, std::make_unique<ConcatFreqNode>(), xs);
}

int merge_chan_freq(Tape& t, int x) {
  return record_1out(t, std::make_unique<MergeChanFreqNode>(), {x});
}

int split_chan_freq(Tape& t, int x, int e, int k) {
  auto n = std::make_unique<SplitChanFreqNode>();
  n->e = e;
  n->k = k;
  return record_1out(t, std::move(n), {x});
}

int reshape(Tape& t, int x, std::vector<int> shape) {
  auto n = std::make_unique<ReshapeNode>();
  n->shape = std::move(shape);
  return record_1out(t, std::move(n), {x});
}

int add(Tape& t, int a, int b) { return record_1out(t, std::make_unique<AddNode>(), {a, b}); }

int istft(Tape& t, int ri, const StftConfig& cfg, long long out_len) {
  auto n = std::make_unique<IstftNode>();
  n->cfg = cfg;
  n->out_len = out_len;
  return record_1out(t, std::move(n), {ri});
}

int stft(Tape& t, int wave, const StftConfig& cfg) {
  auto n = std::make_unique<StftNode>();
  n->cfg = cfg;
  return record_1out(t, std::move(n), {wave});
}

int magnitude(Tape& t, int ri) {
  return record_1out(t, std::make_unique<MagnitudeNode>(), {ri});
}

int l1_mean(Tape& t, int a, int b) {
  return record_1out(t, std::make_unique<L1MeanNode>(), {a, b});
}

int sum_squares(Tape& t, int x) {
  return record_1out(t, std::make_unique<SumSquaresNode>(), {x});
}

int sum_all(Tape& t, int x) { return record_1out(t, std::make_unique<SumAllNode>(), {x}); }

}  // namespace fsbnet::ad
