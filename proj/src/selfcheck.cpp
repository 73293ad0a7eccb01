#include "fsbnet/selfcheck.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "fsbnet/gradcheck.hpp"
#include "fsbnet/model.hpp"
#include "fsbnet/ops.hpp"
#include "fsbnet/stft.hpp"
#include "fsbnet/train.hpp"
#include "fsbnet/weights.hpp"

namespace fsbnet {

namespace {

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <typename S>
TensorT<S> random_tensor(std::mt19937_64& rng, std::vector<int> shape, double scale = 1.0) {
  TensorT<S> t(std::move(shape));
  for (long long i = 0; i < t.size(); ++i)
    t.data()[i] = static_cast<S>((2.0 * unit(rng) - 1.0) * scale);
  return t;
}

CheckResult make_result(const std::string& name, bool pass, double value, double bound) {
  std::ostringstream os;
  os << (pass ? "ok" : "FAILED") << " (" << value << " vs bound " << bound << ")";
  return {name, pass, os.str()};
}

}  // namespace

std::vector<CheckResult> selfcheck_stft() {
  std::vector<CheckResult> results;
  StftConfig cfg;
  std::mt19937_64 rng(11);

  // Identity pass-through: relative RMS error after the warm-up region.
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const int len = cfg.sample_rate;
    std::vector<float> sig(len);
    for (auto& v : sig) v = static_cast<float>(2.0 * unit(rng) - 1.0);

    StftAnalysis ana(cfg);
    StftSynthesis syn(cfg);
    std::vector<float> out;
    for (int pos = 0; pos + cfg.hs <= len; pos += cfg.hs) {
      auto spec = ana.push(sig.data() + pos, cfg.hs);
      if (!spec) continue;
      auto o = syn.push(*spec);
      out.insert(out.end(), o.begin(), o.end());
    }
    for (int i = 0; i < ana.flush_pushes(); ++i) {
      std::vector<float> zeros(static_cast<size_t>(cfg.hs), 0.0f);
      auto spec = ana.push(zeros);
      if (!spec) continue;
      auto o = syn.push(*spec);
      out.insert(out.end(), o.begin(), o.end());
    }
    double err = 0.0, ref = 0.0;
    for (size_t i = cfg.ows; i < out.size(); ++i) {
      const double d = out[i] - sig[i];
      err += d * d;
      ref += static_cast<double>(sig[i]) * sig[i];
    }
    worst = std::max(worst, std::sqrt(err / ref));
  }
  results.push_back(make_result("stft.identity_reconstruction", worst <= 1e-6, worst, 1e-6));

  // Causality: changing input sample n must not alter outputs at <= n - ows.
  bool causal = true;
  for (int trial = 0; trial < 4 && causal; ++trial) {
    const int len = 4000;
    std::vector<float> sig(len);
    for (auto& v : sig) v = static_cast<float>(2.0 * unit(rng) - 1.0);
    const int site = 1000 + static_cast<int>(unit(rng) * 2000);

    auto run = [&](const std::vector<float>& s) {
      StftAnalysis ana(cfg);
      StftSynthesis syn(cfg);
      std::vector<float> out;
      for (int pos = 0; pos + cfg.hs <= len; pos += cfg.hs) {
        auto spec = ana.push(s.data() + pos, cfg.hs);
        if (spec) {
          auto o = syn.push(*spec);
          out.insert(out.end(), o.begin(), o.end());
        }
      }
      return out;
    };
    const auto base = run(sig);
    auto mod = sig;
    mod[site] += 1.0f;
    const auto pert = run(mod);
    for (int i = 0; i <= site - cfg.ows && i < static_cast<int>(base.size()); ++i)
      if (base[i] != pert[i]) causal = false;
  }
  results.push_back({"stft.causality_latency", causal, causal ? "ok" : "FAILED"});
  return results;
}

std::vector<CheckResult> selfcheck_grad() {
  std::vector<CheckResult> results;
  std::mt19937_64 rng(7);
  const double tol = 1e-5;

  {
    std::vector<TensorD> leaves = {random_tensor<double>(rng, {2, 3, 7}),
                                   random_tensor<double>(rng, {3, 2, 3}),
                                   random_tensor<double>(rng, {3})};
    auto res = grad_check(leaves, [](ad::Tape& t, const std::vector<int>& ids) {
      return ad::sum_squares(t, ad::conv_freq(t, ids[0], ids[1], ids[2], 2));
    });
    results.push_back(make_result("grad.conv_freq", res.max_rel_error < tol, res.max_rel_error, tol));
  }
  {
    std::vector<TensorD> leaves = {random_tensor<double>(rng, {2, 2, 5}),
                                   random_tensor<double>(rng, {2, 3, 4}),
                                   random_tensor<double>(rng, {3})};
    auto res = grad_check(leaves, [](ad::Tape& t, const std::vector<int>& ids) {
      return ad::sum_squares(t, ad::deconv_freq(t, ids[0], ids[1], ids[2], 2));
    });
    results.push_back(
        make_result("grad.deconv_freq", res.max_rel_error < tol, res.max_rel_error, tol));
  }
  {
    const int in_dim = 4, hidden = 3, t_len = 5;
    std::vector<TensorD> leaves = {random_tensor<double>(rng, {t_len, in_dim}),
                                   random_tensor<double>(rng, {4 * hidden, in_dim}),
                                   random_tensor<double>(rng, {4 * hidden, hidden}),
                                   random_tensor<double>(rng, {4 * hidden}),
                                   random_tensor<double>(rng, {4 * hidden})};
    auto res = grad_check(leaves, [](ad::Tape& t, const std::vector<int>& ids) {
      return ad::sum_squares(t, ad::lstm_seq(t, ids[0], ids[1], ids[2], ids[3], ids[4]));
    });
    results.push_back(make_result("grad.lstm", res.max_rel_error < tol, res.max_rel_error, tol));
  }
  {
    std::vector<TensorD> leaves = {random_tensor<double>(rng, {4, 5}),
                                   random_tensor<double>(rng, {5}, 0.5),
                                   random_tensor<double>(rng, {5}, 0.5)};
    auto res = grad_check(leaves, [](ad::Tape& t, const std::vector<int>& ids) {
      return ad::sum_squares(t, ad::cgln_2d(t, ids[0], ids[1], ids[2], 1e-5));
    });
    results.push_back(make_result("grad.cgln_2d", res.max_rel_error < tol, res.max_rel_error, tol));
  }
  {
    std::vector<TensorD> leaves = {random_tensor<double>(rng, {3, 4, 2}),
                                   random_tensor<double>(rng, {3}, 0.5),
                                   random_tensor<double>(rng, {3}, 0.5)};
    auto res = grad_check(leaves, [](ad::Tape& t, const std::vector<int>& ids) {
      return ad::sum_squares(t, ad::cgln_3d(t, ids[0], ids[1], ids[2], 1e-5));
    });
    results.push_back(make_result("grad.cgln_3d", res.max_rel_error < tol, res.max_rel_error, tol));
  }
  {
    std::vector<TensorD> leaves = {random_tensor<double>(rng, {4, 6}), TensorD::scalar(0.3)};
    auto res = grad_check(leaves, [](ad::Tape& t, const std::vector<int>& ids) {
      return ad::sum_squares(t, ad::prelu(t, ids[0], ids[1]));
    });
    results.push_back(make_result("grad.prelu", res.max_rel_error < tol, res.max_rel_error, tol));
  }
  {
    std::vector<TensorD> leaves = {random_tensor<double>(rng, {3, 4}),
                                   random_tensor<double>(rng, {5, 4}),
                                   random_tensor<double>(rng, {5})};
    auto res = grad_check(leaves, [](ad::Tape& t, const std::vector<int>& ids) {
      return ad::sum_squares(t, ad::linear(t, ids[0], ids[1], ids[2]));
    });
    results.push_back(make_result("grad.linear", res.max_rel_error < tol, res.max_rel_error, tol));
  }
  return results;
}

std::vector<CheckResult> selfcheck_stream() {
  std::vector<CheckResult> results;
  ModelConfig cfg = toy_config();
  const WeightStore store = init_random(cfg, 99);
  const ModelWeights<float> w = bind_weights<float>(store);
  std::mt19937_64 rng(5);
  const int t_len = 24;
  const TensorT<float> x = random_tensor<float>(rng, {2 * cfg.P, t_len, cfg.bins()});

  const auto offline = forward_offline(cfg, w, x);
  StreamState<float> state = init_stream_state<float>(cfg);
  double worst = 0.0;
  for (int t = 0; t < t_len; ++t) {
    TensorT<float> frame({2 * cfg.P, cfg.bins()});
    for (int c = 0; c < 2 * cfg.P; ++c)
      for (int f = 0; f < cfg.bins(); ++f) frame(c, f) = x(c, t, f);
    const auto est = step_online(cfg, w, state, frame);
    for (int c = 0; c < 2; ++c)
      for (int f = 0; f < cfg.bins(); ++f)
        worst = std::max(worst, static_cast<double>(std::abs(est(c, f) - offline(c, t, f))));
  }
  results.push_back(make_result("stream.offline_equivalence", worst <= 1e-5, worst, 1e-5));
  return results;
}

std::vector<CheckResult> selfcheck_deconv() {
  std::vector<CheckResult> results;
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int cin = 1 + static_cast<int>(unit(rng) * 3);
    const int cout = 1 + static_cast<int>(unit(rng) * 3);
    const int ksize = 1 + static_cast<int>(unit(rng) * 7);
    const int stride = 1 + static_cast<int>(unit(rng) * (ksize - 1 >= 1 ? ksize - 1 : 1));
    const int fin = 1 + static_cast<int>(unit(rng) * 9);
    const int t_len = 1 + static_cast<int>(unit(rng) * 3);
    const auto x = random_tensor<double>(rng, {cin, t_len, fin});
    const auto w = random_tensor<double>(rng, {cin, cout, ksize});
    const auto b = random_tensor<double>(rng, {cout});
    const auto fast = ops::deconv_freq(x, w, b, stride);
    const auto ref = ops::deconv_freq_reference(x, w, b, stride);
    for (long long i = 0; i < fast.size(); ++i)
      worst = std::max(worst, std::abs(fast.data()[i] - ref.data()[i]));
  }
  results.push_back(make_result("deconv.oracle_equivalence", worst <= 1e-6, worst, 1e-6));

  // MAC cost of the overlap-add form is ~1/stride of the interleaved form.
  {
    std::mt19937_64 r2(4);
    const auto x = random_tensor<double>(r2, {8, 1, 32});
    const auto w = random_tensor<double>(r2, {8, 32, 8});
    const auto b = random_tensor<double>(r2, {32});
    std::uint64_t fast_macs = 0, ref_macs = 0;
    {
      macs::Scope scope(fast_macs);
      ops::deconv_freq(x, w, b, 4);
    }
    {
      macs::Scope scope(ref_macs);
      ops::deconv_freq_reference(x, w, b, 4);
    }
    const double ratio = static_cast<double>(fast_macs) / static_cast<double>(ref_macs);
    const bool pass = fast_macs == 65536ULL && ratio > 0.85 / 4 && ratio < 1.15 / 4;
    results.push_back(make_result("deconv.mac_saving", pass, ratio, 0.25));
  }
  return results;
}

std::vector<CheckResult> run_selfcheck(const std::string& suite) {
  std::vector<CheckResult> all;
  auto append = [&all](std::vector<CheckResult> r) {
    for (auto& c : r) all.push_back(std::move(c));
  };
  if (suite == "stft" || suite == "all") append(selfcheck_stft());
  if (suite == "grad" || suite == "all") append(selfcheck_grad());
  if (suite == "stream" || suite == "all") append(selfcheck_stream());
  if (suite == "deconv" || suite == "all") append(selfcheck_deconv());
  if (all.empty()) throw std::invalid_argument("unknown selfcheck suite: " + suite);
  return all;
}

}  // namespace fsbnet
