#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fsbnet/gradcheck.hpp"
#include "fsbnet/ops.hpp"

using namespace fsbnet;

namespace {
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

TensorD random_tensor(std::mt19937_64& rng, std::vector<int> shape, double scale = 1.0) {
  TensorD t(std::move(shape));
  for (long long i = 0; i < t.size(); ++i) t.data()[i] = (2.0 * unit(rng) - 1.0) * scale;
  return t;
}

constexpr double kTol = 1e-5;
}  // namespace

TEST_CASE("backward rejects empty tape and non-scalar seed") {
  ad::Tape empty;
  const int x = empty.input(TensorD::scalar(1.0));
  CHECK_THROWS_AS(empty.backward(x), std::invalid_argument);

  ad::Tape t;
  std::mt19937_64 rng(1);
  const int a = t.input(random_tensor(rng, {2, 3}));
  const int b = t.input(random_tensor(rng, {2, 3}));
  const int y = ad::add(t, a, b);
  CHECK_THROWS_AS(t.backward(y), std::invalid_argument);
}

TEST_CASE("replay reproduces recorded outputs exactly") {
  std::mt19937_64 rng(2);
  ad::Tape t;
  const int x = t.input(random_tensor(rng, {2, 3, 8}));
  const int w = t.input(random_tensor(rng, {3, 2, 4}));
  const int b = t.input(random_tensor(rng, {3}));
  const int y = ad::conv_freq(t, x, w, b, 2);
  const int m = ad::merge_chan_freq(t, y);
  const int g = t.input(random_tensor(rng, {9}));
  const int be = t.input(random_tensor(rng, {9}));
  const int n = ad::cgln_2d(t, m, g, be, 1e-5);
  const int loss = ad::sum_squares(t, n);

  std::vector<TensorD> before;
  for (size_t i = 0; i < t.num_vars(); ++i) before.push_back(t.val(static_cast<int>(i)));
  t.replay();
  for (size_t i = 0; i < t.num_vars(); ++i) {
    CHECK(t.val(static_cast<int>(i)) == before[i]);
  }
  (void)loss;
}

TEST_CASE("prelu gradient at negative inputs equals the slope") {
  ad::Tape t;
  const int x = t.input(TensorD::from({3}, {-2.0, -0.5, -1.25}));
  const int a = t.input(TensorD::scalar(0.25));
  const int y = ad::sum_all(t, ad::prelu(t, x, a));
  t.backward(y);
  for (int i = 0; i < 3; ++i) CHECK(t.grad(x)(i) == doctest::Approx(0.25));
  // d/da = sum of negative inputs
  CHECK(t.grad(a)(0) == doctest::Approx(-3.75));
}

TEST_CASE("conv_freq kernel gradient of squared norm vs finite differences") {
  std::mt19937_64 rng(3);
  std::vector<TensorD> leaves = {random_tensor(rng, {2, 2, 9}), random_tensor(rng, {3, 2, 3}),
                                 random_tensor(rng, {3})};
  auto res = grad_check(leaves, [](ad::Tape& t, const std::vector<int>& ids) {
    return ad::sum_squares(t, ad::conv_freq(t, ids[0], ids[1], ids[2], 3));
  });
  CHECK(res.max_rel_error < 1e-6);
}

TEST_CASE("deconv_freq gradients vs finite differences") {
  std::mt19937_64 rng(4);
  std::vector<TensorD> leaves = {random_tensor(rng, {3, 2, 4}), random_tensor(rng, {3, 2, 5}),
                                 random_tensor(rng, {2})};
  auto res = grad_check(leaves, [](ad::Tape& t, const std::vector<int>& ids) {
    return ad::sum_squares(t, ad::deconv_freq(t, ids[0], ids[1], ids[2], 3));
  });
  CHECK(res.max_rel_error < kTol);
}

TEST_CASE("lstm over 8 chained steps vs finite differences") {
  std::mt19937_64 rng(5);
  const int in = 3, h = 4, steps = 8;
  std::vector<TensorD> leaves;
  for (int s = 0; s < steps; ++s) leaves.push_back(random_tensor(rng, {in}));
  leaves.push_back(random_tensor(rng, {h}));            // h0
  leaves.push_back(random_tensor(rng, {h}));            // c0
  leaves.push_back(random_tensor(rng, {4 * h, in}));    // wi
  leaves.push_back(random_tensor(rng, {4 * h, h}));     // wh
  leaves.push_back(random_tensor(rng, {4 * h}, 0.3));   // bi
  leaves.push_back(random_tensor(rng, {4 * h}, 0.3));   // bh

  auto res = grad_check(leaves, [steps](ad::Tape& t, const std::vector<int>& ids) {
    int hv = ids[steps], cv = ids[steps + 1];
    const int wi = ids[steps + 2], wh = ids[steps + 3], bi = ids[steps + 4], bh = ids[steps + 5];
    int acc = -1;
    for (int s = 0; s < steps; ++s) {
      auto [h2, c2] = ad::lstm_step(t, ids[s], hv, cv, wi, wh, bi, bh);
      hv = h2;
      cv = c2;
      const int sq = ad::sum_squares(t, hv);
      acc = acc < 0 ? sq : ad::add(t, acc, sq);
    }
    return acc;
  });
  CHECK(res.max_rel_error < kTol);
}

TEST_CASE("lstm_seq equals chained lstm_step including gradients") {
  std::mt19937_64 rng(6);
  const int in = 3, h = 4, t_len = 5;
  std::vector<TensorD> leaves = {random_tensor(rng, {t_len, in}),
                                 random_tensor(rng, {4 * h, in}),
                                 random_tensor(rng, {4 * h, h}),
                                 random_tensor(rng, {4 * h}, 0.3),
                                 random_tensor(rng, {4 * h}, 0.3)};

  ad::Tape t_seq;
  std::vector<int> ids_seq;
  for (auto& l : leaves) ids_seq.push_back(t_seq.input(l));
  const int y_seq = ad::lstm_seq(t_seq, ids_seq[0], ids_seq[1], ids_seq[2], ids_seq[3], ids_seq[4]);
  const int loss_seq = ad::sum_squares(t_seq, y_seq);
  t_seq.backward(loss_seq);

  ad::Tape t_chain;
  std::vector<int> ids_ch;
  for (auto& l : leaves) ids_ch.push_back(t_chain.input(l));
  int hv = t_chain.input(TensorD({h}));
  int cv = t_chain.input(TensorD({h}));
  std::vector<int> hs;
  for (int s = 0; s < t_len; ++s) {
    const int xt = ad::reshape(t_chain, ad::slice_time(t_chain, ad::reshape(t_chain, ids_ch[0], {1, t_len, in}), s, 1), {in});
    auto [h2, c2] = ad::lstm_step(t_chain, xt, hv, cv, ids_ch[1], ids_ch[2], ids_ch[3], ids_ch[4]);
    hv = h2;
    cv = c2;
    hs.push_back(ad::reshape(t_chain, h2, {1, 1, h}));
  }
  const int y_chain = ad::reshape(t_chain, ad::concat_time(t_chain, hs), {t_len, h});
  const int loss_chain = ad::sum_squares(t_chain, y_chain);
  t_chain.backward(loss_chain);

  CHECK(t_seq.val(loss_seq)(0) == doctest::Approx(t_chain.val(loss_chain)(0)).epsilon(1e-12));
  for (size_t i = 0; i < leaves.size(); ++i) {
    const TensorD& gs = t_seq.grad(ids_seq[i]);
    const TensorD& gc = t_chain.grad(ids_ch[i]);
    for (long long j = 0; j < gs.size(); ++j)
      CHECK(gs.data()[j] == doctest::Approx(gc.data()[j]).epsilon(1e-9));
  }
}

TEST_CASE("cgln streaming nodes match offline node and finite differences") {
  std::mt19937_64 rng(7);
  const int t_len = 3, feat = 4;
  std::vector<TensorD> leaves = {random_tensor(rng, {t_len, feat}),
                                 random_tensor(rng, {feat}, 0.8),
                                 random_tensor(rng, {feat}, 0.8)};

  // Offline node.
  ad::Tape t_off;
  std::vector<int> ids;
  for (auto& l : leaves) ids.push_back(t_off.input(l));
  const int y_off = ad::cgln_2d(t_off, ids[0], ids[1], ids[2], 1e-5);
  const int loss_off = ad::sum_squares(t_off, y_off);
  t_off.backward(loss_off);

  // Chained per-frame streaming nodes.
  auto build_stream = [t_len, feat](ad::Tape& t, const std::vector<int>& v) {
    const int x3 = ad::reshape(t, v[0], {1, t_len, feat});
    int stats = t.input(TensorD::from({3}, {0.0, 0.0, 0.0}));
    std::vector<int> rows;
    for (int s = 0; s < t_len; ++s) {
      const int frame = ad::reshape(t, ad::slice_time(t, x3, s, 1), {1, feat});
      auto [y, st2] = ad::cgln_2d_stream(t, frame, v[1], v[2], stats, 1e-5);
      stats = st2;
      rows.push_back(ad::reshape(t, y, {1, 1, feat}));
    }
    return ad::sum_squares(t, ad::concat_time(t, rows));
  };

  ad::Tape t_str;
  std::vector<int> ids2;
  for (auto& l : leaves) ids2.push_back(t_str.input(l));
  const int loss_str = build_stream(t_str, ids2);
  t_str.backward(loss_str);

  CHECK(t_off.val(loss_off)(0) == doctest::Approx(t_str.val(loss_str)(0)).epsilon(1e-12));
  for (size_t i = 0; i < leaves.size(); ++i) {
    const TensorD& go = t_off.grad(ids[i]);
    const TensorD& gs = t_str.grad(ids2[i]);
    for (long long j = 0; j < go.size(); ++j)
      CHECK(go.data()[j] == doctest::Approx(gs.data()[j]).epsilon(1e-9));
  }

  auto res = grad_check(leaves, build_stream);
  CHECK(res.max_rel_error < kTol);

  // 3-D streaming flavour.
  std::vector<TensorD> leaves3 = {random_tensor(rng, {3, 2, 4}), random_tensor(rng, {3}, 0.8),
                                  random_tensor(rng, {3}, 0.8)};
  auto res3 = grad_check(leaves3, [](ad::Tape& t, const std::vector<int>& v) {
    int stats = t.input(TensorD::from({3}, {0.0, 0.0, 0.0}));
    std::vector<int> frames;
    for (int s = 0; s < 2; ++s) {
      const int frame = ad::slice_time(t, v[0], s, 1);
      auto [y, st2] = ad::cgln_3d_stream(t, frame, v[1], v[2], stats, 1e-5);
      stats = st2;
      frames.push_back(y);
    }
    return ad::sum_squares(t, ad::concat_time(t, frames));
  });
  CHECK(res3.max_rel_error < kTol);
}

TEST_CASE("glue ops gradients vs finite differences") {
  std::mt19937_64 rng(8);
  std::vector<TensorD> leaves = {random_tensor(rng, {2, 3, 4}), random_tensor(rng, {2, 3, 5})};
  auto res = grad_check(leaves, [](ad::Tape& t, const std::vector<int>& v) {
    const int p = ad::pad_freq(t, v[0], 1, 2);        // 2x3x7
    const int s = ad::slice_freq(t, p, 1, 5);         // 2x3x5
    const int c = ad::concat_freq(t, {s, v[1]});      // 2x3x10
    const int m = ad::merge_chan_freq(t, c);          // 3x20
    const int u = ad::split_chan_freq(t, m, 2, 10);   // 2x3x10
    const int w = ad::concat_time(t, {u, u});         // 2x6x10
    const int st = ad::slice_time(t, w, 1, 4);
    return ad::sum_squares(t, st);
  });
  CHECK(res.max_rel_error < kTol);
}

TEST_CASE("magnitude and l1_mean gradients vs finite differences") {
  std::mt19937_64 rng(9);
  // Keep values away from the |.| kink and zero magnitude.
  TensorD ri = random_tensor(rng, {2, 2, 3});
  for (long long i = 0; i < ri.size(); ++i) ri.data()[i] += ri.data()[i] >= 0 ? 0.5 : -0.5;
  TensorD other = random_tensor(rng, {2, 3});
  for (long long i = 0; i < other.size(); ++i) other.data()[i] += 3.0;

  std::vector<TensorD> leaves = {ri, other};
  auto res = grad_check(leaves, [](ad::Tape& t, const std::vector<int>& v) {
    return ad::l1_mean(t, ad::magnitude(t, v[0]), v[1]);
  });
  CHECK(res.max_rel_error < kTol);
}

TEST_CASE("stft and istft node adjoints vs finite differences") {
  StftConfig cfg;
  cfg.sample_rate = 16000;
  cfg.iws = 16;
  cfg.hs = 4;
  cfg.ows = 8;
  cfg.dft_size = 16;
  std::mt19937_64 rng(10);

  {
    std::vector<TensorD> leaves = {random_tensor(rng, {30})};
    auto res = grad_check(leaves, [&cfg](ad::Tape& t, const std::vector<int>& v) {
      return ad::sum_squares(t, ad::stft(t, v[0], cfg));
    });
    CHECK(res.max_rel_error < kTol);
  }
  {
    const long long t_frames = cfg.num_frames(30);
    std::vector<TensorD> leaves = {
        random_tensor(rng, {2, static_cast<int>(t_frames), cfg.bins()})};
    auto res = grad_check(leaves, [&cfg](ad::Tape& t, const std::vector<int>& v) {
      return ad::sum_squares(t, ad::istft(t, v[0], cfg, 30));
    });
    CHECK(res.max_rel_error < kTol);
  }
}

TEST_CASE("prelu/linear/cgln offline gradients vs finite differences") {
  std::mt19937_64 rng(11);
  {
    std::vector<TensorD> leaves = {random_tensor(rng, {4, 6}), TensorD::scalar(0.3)};
    auto res = grad_check(leaves, [](ad::Tape& t, const std::vector<int>& v) {
      return ad::sum_squares(t, ad::prelu(t, v[0], v[1]));
    });
    CHECK(res.max_rel_error < kTol);
  }
  {
    std::vector<TensorD> leaves = {random_tensor(rng, {3, 4}), random_tensor(rng, {5, 4}),
                                   random_tensor(rng, {5})};
    auto res = grad_check(leaves, [](ad::Tape& t, const std::vector<int>& v) {
      return ad::sum_squares(t, ad::linear(t, v[0], v[1], v[2]));
    });
    CHECK(res.max_rel_error < kTol);
  }
  {
    std::vector<TensorD> leaves = {random_tensor(rng, {5, 3}), random_tensor(rng, {3}, 0.7),
                                   random_tensor(rng, {3}, 0.7)};
    auto res = grad_check(leaves, [](ad::Tape& t, const std::vector<int>& v) {
      return ad::sum_squares(t, ad::cgln_2d(t, v[0], v[1], v[2], 1e-5));
    });
    CHECK(res.max_rel_error < kTol);
  }
  {
    std::vector<TensorD> leaves = {random_tensor(rng, {3, 4, 2}), random_tensor(rng, {3}, 0.7),
                                   random_tensor(rng, {3}, 0.7)};
    auto res = grad_check(leaves, [](ad::Tape& t, const std::vector<int>& v) {
      return ad::sum_squares(t, ad::cgln_3d(t, v[0], v[1], v[2], 1e-5));
    });
    CHECK(res.max_rel_error < kTol);
  }
}
