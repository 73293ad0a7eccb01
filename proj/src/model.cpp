#include "fsbnet/model.hpp"

#include <stdexcept>

namespace fsbnet {

template <typename S>
ModelWeights<S> bind_weights(const WeightStore& store) {
  const ModelConfig& cfg = store.config();
  ModelWeights<S> w;
  w.blocks.resize(static_cast<size_t>(cfg.num_blocks()));
  if (cfg.has_sub_band())
    for (auto& blk : w.blocks) blk.sb.emplace();
  size_t idx = 0;
  for_each_tensor<S>(w, [&](TensorT<S>& t) { t = store.tensor(idx++).template cast<S>(); });
  if (idx != store.count()) throw std::logic_error("bind_weights: layout walk out of sync");
  for (auto& blk : w.blocks) {
    blk.fb.lstm.wi_t = ops::transpose2d(blk.fb.lstm.wi);
    blk.fb.lstm.wh_t = ops::transpose2d(blk.fb.lstm.wh);
    blk.fb.lin_w_t = ops::transpose2d(blk.fb.lin_w);
    if (blk.sb) {
      blk.sb->lstm.wi_t = ops::transpose2d(blk.sb->lstm.wi);
      blk.sb->lstm.wh_t = ops::transpose2d(blk.sb->lstm.wh);
    }
  }
  return w;
}

template <typename S>
TensorT<S> full_band_block(const ModelConfig& cfg, const FullBandParams<S>& p,
                           const TensorT<S>& x) {
  const int f = cfg.bins();
  const int feat = cfg.fb_features();
  auto h = ops::pad_freq(x, 0, cfg.fb_padded() - f);
  h = ops::conv_freq(h, p.conv_w, p.conv_b, cfg.J);
  auto m = ops::merge_chan_freq(h);
  m = ops::prelu(m, p.prelu1(0));
  m = ops::cgln_2d(m, p.norm1_g, p.norm1_b, kCglnEps);

  const int t_len = m.dim(0);
  TensorT<S> s({t_len, feat});
  TensorT<S> hv({cfg.H}), cv({cfg.H});
  std::vector<S> gates;
  for (int t = 0; t < t_len; ++t) {
    ops::lstm_step_gaxpy(&m(t, 0), feat, p.lstm.wi_t, p.lstm.wh_t, p.lstm.bi, p.lstm.bh, hv, cv,
                         gates);
    ops::linear_gaxpy(hv.data(), cfg.H, p.lin_w_t, p.lin_b, &s(t, 0));
  }
  s = ops::cgln_2d(s, p.norm2_g, p.norm2_b, kCglnEps);
  s = ops::prelu(s, p.prelu2(0));
  auto u = ops::split_chan_freq(s, cfg.E, cfg.fb_positions());
  auto d = ops::deconv_freq(u, p.deconv_w, p.deconv_b, cfg.J);
  d = ops::slice_freq(d, 0, f);
  return ops::add(x, d);
}

template <typename S>
TensorT<S> sub_band_block(const ModelConfig& cfg, const SubBandParams<S>& p,
                          const TensorT<S>& x) {
  const int f = cfg.bins();
  auto h = ops::pad_freq(x, 0, cfg.sb_padded() - f);
  h = ops::conv_freq(h, p.conv_w, p.conv_b, cfg.Jp);
  h = ops::prelu(h, p.prelu1(0));
  h = ops::cgln_3d(h, p.norm1_g, p.norm1_b, kCglnEps);
  // One weight-shared LSTM along time per sub-band.
  const int t_len = h.dim(1);
  TensorT<S> u({cfg.Hp, t_len, cfg.sub_bands()});
  std::vector<S> xvec(static_cast<size_t>(cfg.Ep));
  std::vector<S> gates;
  for (int s = 0; s < cfg.sub_bands(); ++s) {
    TensorT<S> hv({cfg.Hp}), cv({cfg.Hp});
    for (int t = 0; t < t_len; ++t) {
      for (int e = 0; e < cfg.Ep; ++e) xvec[e] = h(e, t, s);
      ops::lstm_step_gaxpy(xvec.data(), cfg.Ep, p.lstm.wi_t, p.lstm.wh_t, p.lstm.bi, p.lstm.bh,
                           hv, cv, gates);
      for (int e = 0; e < cfg.Hp; ++e) u(e, t, s) = hv(e);
    }
  }
  auto d = ops::deconv_freq(u, p.deconv_w, p.deconv_b, cfg.Jp);
  d = ops::slice_freq(d, 0, f);
  return ops::add(x, d);
}

template <typename S>
TensorT<S> forward_offline(const ModelConfig& cfg, const ModelWeights<S>& w,
                           const TensorT<S>& mix_ri) {
  if (mix_ri.rank() != 3 || mix_ri.dim(0) != 2 * cfg.P || mix_ri.dim(2) != cfg.bins())
    throw std::invalid_argument("forward: input must be 2P x T x F");
  auto h = ops::pad_freq(mix_ri, 1, 1);
  h = ops::conv_freq(h, w.in_w, w.in_b, 1);
  for (const auto& blk : w.blocks) {
    h = full_band_block(cfg, blk.fb, h);
    if (blk.sb) h = sub_band_block(cfg, *blk.sb, h);
  }
  auto d = ops::deconv_freq(h, w.out_w, w.out_b, 1);
  return ops::slice_freq(d, 1, cfg.bins());
}

template <typename S>
StreamState<S> init_stream_state(const ModelConfig& cfg) {
  cfg.validate();
  StreamState<S> st;
  st.blocks.resize(static_cast<size_t>(cfg.num_blocks()));
  for (auto& blk : st.blocks) {
    blk.fb_h = TensorT<S>({cfg.H});
    blk.fb_c = TensorT<S>({cfg.H});
    if (cfg.has_sub_band()) {
      blk.sb_h.assign(static_cast<size_t>(cfg.sub_bands()), TensorT<S>({cfg.Hp}));
      blk.sb_c.assign(static_cast<size_t>(cfg.sub_bands()), TensorT<S>({cfg.Hp}));
    }
  }
  return st;
}

template <typename S>
TensorT<S> full_band_block_step(const ModelConfig& cfg, const FullBandParams<S>& p,
                                BlockState<S>& st, const TensorT<S>& x) {
  const int f = cfg.bins();
  const int feat = cfg.fb_features();
  auto h = ops::pad_freq(x, 0, cfg.fb_padded() - f);
  h = ops::conv_freq(h, p.conv_w, p.conv_b, cfg.J);
  auto m = ops::merge_chan_freq(h);  // 1 x A
  m = ops::prelu(m, p.prelu1(0));
  TensorT<S> n1({1, feat});
  ops::cgln_2d_stream(&m(0, 0), feat, p.norm1_g, p.norm1_b, kCglnEps, st.fb_norm1, &n1(0, 0));

  std::vector<S> gates;
  ops::lstm_step_gaxpy(n1.data(), feat, p.lstm.wi_t, p.lstm.wh_t, p.lstm.bi, p.lstm.bh, st.fb_h,
                       st.fb_c, gates);

  TensorT<S> s({1, feat});
  ops::linear_gaxpy(st.fb_h.data(), cfg.H, p.lin_w_t, p.lin_b, &s(0, 0));
  TensorT<S> n2({1, feat});
  ops::cgln_2d_stream(&s(0, 0), feat, p.norm2_g, p.norm2_b, kCglnEps, st.fb_norm2, &n2(0, 0));
  n2 = ops::prelu(n2, p.prelu2(0));
  auto u = ops::split_chan_freq(n2, cfg.E, cfg.fb_positions());
  auto d = ops::deconv_freq(u, p.deconv_w, p.deconv_b, cfg.J);
  d = ops::slice_freq(d, 0, f);
  return ops::add(x, d);
}

template <typename S>
TensorT<S> sub_band_block_step(const ModelConfig& cfg, const SubBandParams<S>& p,
                               BlockState<S>& st, const TensorT<S>& x) {
  const int f = cfg.bins();
  const int bands = cfg.sub_bands();
  auto h = ops::pad_freq(x, 0, cfg.sb_padded() - f);
  h = ops::conv_freq(h, p.conv_w, p.conv_b, cfg.Jp);  // E' x 1 x S
  h = ops::prelu(h, p.prelu1(0));
  TensorT<S> n1({cfg.Ep, 1, bands});
  ops::cgln_3d_stream(h.data(), cfg.Ep, bands, p.norm1_g, p.norm1_b, kCglnEps, st.sb_norm1,
                      n1.data());

  TensorT<S> u({cfg.Hp, 1, bands});
  std::vector<S> xvec(static_cast<size_t>(cfg.Ep));
  std::vector<S> gates;
  for (int s = 0; s < bands; ++s) {
    for (int e = 0; e < cfg.Ep; ++e) xvec[e] = n1(e, 0, s);
    ops::lstm_step_gaxpy(xvec.data(), cfg.Ep, p.lstm.wi_t, p.lstm.wh_t, p.lstm.bi, p.lstm.bh,
                         st.sb_h[s], st.sb_c[s], gates);
    for (int e = 0; e < cfg.Hp; ++e) u(e, 0, s) = st.sb_h[s](e);
  }
  auto d = ops::deconv_freq(u, p.deconv_w, p.deconv_b, cfg.Jp);
  d = ops::slice_freq(d, 0, f);
  return ops::add(x, d);
}

template <typename S>
TensorT<S> step_online(const ModelConfig& cfg, const ModelWeights<S>& w, StreamState<S>& state,
                       const TensorT<S>& frame_ri) {
  if (frame_ri.rank() != 2 || frame_ri.dim(0) != 2 * cfg.P || frame_ri.dim(1) != cfg.bins())
    throw std::invalid_argument("step_online: frame must be 2P x F");
  if (state.blocks.size() != static_cast<size_t>(cfg.num_blocks()))
    throw std::invalid_argument("step_online: state not initialized for this config");

  TensorT<S> x({2 * cfg.P, 1, cfg.bins()});
  for (int c = 0; c < 2 * cfg.P; ++c)
    for (int f = 0; f < cfg.bins(); ++f) x(c, 0, f) = frame_ri(c, f);

  auto h = ops::pad_freq(x, 1, 1);
  h = ops::conv_freq(h, w.in_w, w.in_b, 1);
  for (size_t b = 0; b < w.blocks.size(); ++b) {
    h = full_band_block_step(cfg, w.blocks[b].fb, state.blocks[b], h);
    if (w.blocks[b].sb) h = sub_band_block_step(cfg, *w.blocks[b].sb, state.blocks[b], h);
  }
  auto d = ops::deconv_freq(h, w.out_w, w.out_b, 1);
  d = ops::slice_freq(d, 1, cfg.bins());

  TensorT<S> out({2, cfg.bins()});
  for (int c = 0; c < 2; ++c)
    for (int f = 0; f < cfg.bins(); ++f) out(c, f) = d(c, 0, f);
  return out;
}

StreamEnhancer::StreamEnhancer(const ModelConfig& cfg, const WeightStore& store)
    : cfg_(cfg),
      weights_(bind_weights<float>(store)),
      state_(init_stream_state<float>(cfg)),
      synthesis_(cfg.stft) {
  if (!(store.config() == cfg)) throw std::invalid_argument("enhancer: config/store mismatch");
  analysis_.reserve(static_cast<size_t>(cfg_.P));
  for (int p = 0; p < cfg_.P; ++p) analysis_.emplace_back(cfg_.stft);
  pending_.resize(static_cast<size_t>(cfg_.P));
}

std::vector<float> StreamEnhancer::push(const std::vector<std::vector<float>>& chunk) {
  if (static_cast<int>(chunk.size()) != cfg_.P)
    throw std::invalid_argument("enhancer: expected one chunk per microphone");
  const size_t n = chunk[0].size();
  for (int p = 0; p < cfg_.P; ++p) {
    if (chunk[p].size() != n)
      throw std::invalid_argument("enhancer: per-microphone chunk lengths differ");
    pending_[p].insert(pending_[p].end(), chunk[p].begin(), chunk[p].end());
  }
  total_in_ += static_cast<long long>(n);
  auto out = process_ready();
  total_out_ += static_cast<long long>(out.size());
  return out;
}

std::vector<float> StreamEnhancer::process_ready() {
  const int hs = cfg_.stft.hs;
  const int bins = cfg_.bins();
  std::vector<float> out;
  while (static_cast<int>(pending_[0].size()) >= hs) {
    bool have_frame = false;
    TensorT<float> frame({2 * cfg_.P, bins});
    for (int p = 0; p < cfg_.P; ++p) {
      auto spec = analysis_[p].push(pending_[p].data(), hs);
      pending_[p].erase(pending_[p].begin(), pending_[p].begin() + hs);
      if (!spec) continue;
      have_frame = true;
      for (int f = 0; f < bins; ++f) {
        frame(p, f) = (*spec)[f].real();
        frame(cfg_.P + p, f) = (*spec)[f].imag();
      }
    }
    if (!have_frame) continue;  // analysis still priming
    auto est = step_online(cfg_, weights_, state_, frame);
    ++frames_;
    std::vector<std::complex<float>> spec(static_cast<size_t>(bins));
    for (int f = 0; f < bins; ++f) spec[f] = {est(0, f), est(1, f)};
    auto produced = synthesis_.push(spec);
    out.insert(out.end(), produced.begin(), produced.end());
  }
  return out;
}

std::vector<float> StreamEnhancer::flush() {
  const int hs = cfg_.stft.hs;
  const long long want = total_in_;
  // Pad the pending tail to a whole hop, then feed the latency worth of zeros;
  // trim so that total output length equals total input length.
  std::vector<float> out;
  const size_t tail = pending_[0].size();
  if (tail > 0) {
    std::vector<std::vector<float>> pad(static_cast<size_t>(cfg_.P),
                                        std::vector<float>(static_cast<size_t>(hs) - tail, 0.0f));
    auto o = push(pad);
    out.insert(out.end(), o.begin(), o.end());
  }
  std::vector<std::vector<float>> zeros(static_cast<size_t>(cfg_.P),
                                        std::vector<float>(static_cast<size_t>(hs), 0.0f));
  while (total_out_ < want) {
    auto o = push(zeros);
    out.insert(out.end(), o.begin(), o.end());
  }
  const long long excess = total_out_ - want;
  if (excess > 0) {
    out.resize(out.size() - static_cast<size_t>(excess));
    total_out_ = want;
  }
  total_in_ = want;  // padding is not caller input
  return out;
}

ModelVars make_model_vars(const ModelConfig& cfg, const std::vector<int>& ids) {
  size_t i = 0;
  auto next = [&]() {
    if (i >= ids.size()) throw std::invalid_argument("make_model_vars: too few ids");
    return ids[i++];
  };
  ModelVars v;
  v.in_w = next();
  v.in_b = next();
  for (int b = 0; b < cfg.num_blocks(); ++b) {
    ModelVars::Block bv;
    bv.fb.conv_w = next();
    bv.fb.conv_b = next();
    bv.fb.prelu1 = next();
    bv.fb.norm1_g = next();
    bv.fb.norm1_b = next();
    bv.fb.lstm = {next(), next(), next(), next()};
    bv.fb.lin_w = next();
    bv.fb.lin_b = next();
    bv.fb.norm2_g = next();
    bv.fb.norm2_b = next();
    bv.fb.prelu2 = next();
    bv.fb.deconv_w = next();
    bv.fb.deconv_b = next();
    if (cfg.has_sub_band()) {
      ModelVars::Sb sv;
      sv.conv_w = next();
      sv.conv_b = next();
      sv.prelu1 = next();
      sv.norm1_g = next();
      sv.norm1_b = next();
      sv.lstm = {next(), next(), next(), next()};
      sv.deconv_w = next();
      sv.deconv_b = next();
      bv.sb = sv;
    }
    v.blocks.push_back(bv);
  }
  v.out_w = next();
  v.out_b = next();
  if (i != ids.size()) throw std::invalid_argument("make_model_vars: too many ids");
  return v;
}

ModelVars push_weights(ad::Tape& tape, const ModelConfig& cfg, ModelWeights<double>& w) {
  std::vector<int> ids;
  for_each_tensor<double>(w, [&](TensorD& t) { ids.push_back(tape.input(t)); });
  return make_model_vars(cfg, ids);
}

namespace {

int full_band_on_tape(ad::Tape& t, const ModelConfig& cfg, const ModelVars::Fb& p, int x) {
  const int f = cfg.bins();
  int h = ad::pad_freq(t, x, 0, cfg.fb_padded() - f);
  h = ad::conv_freq(t, h, p.conv_w, p.conv_b, cfg.J);
  int m = ad::merge_chan_freq(t, h);
  m = ad::prelu(t, m, p.prelu1);
  m = ad::cgln_2d(t, m, p.norm1_g, p.norm1_b, kCglnEps);
  int s = ad::lstm_seq(t, m, p.lstm.wi, p.lstm.wh, p.lstm.bi, p.lstm.bh);
  s = ad::linear(t, s, p.lin_w, p.lin_b);
  s = ad::cgln_2d(t, s, p.norm2_g, p.norm2_b, kCglnEps);
  s = ad::prelu(t, s, p.prelu2);
  int u = ad::split_chan_freq(t, s, cfg.E, cfg.fb_positions());
  int d = ad::deconv_freq(t, u, p.deconv_w, p.deconv_b, cfg.J);
  d = ad::slice_freq(t, d, 0, f);
  return ad::add(t, x, d);
}

int sub_band_on_tape(ad::Tape& t, const ModelConfig& cfg, const ModelVars::Sb& p, int x) {
  const int f = cfg.bins();
  int h = ad::pad_freq(t, x, 0, cfg.sb_padded() - f);
  h = ad::conv_freq(t, h, p.conv_w, p.conv_b, cfg.Jp);
  h = ad::prelu(t, h, p.prelu1);
  h = ad::cgln_3d(t, h, p.norm1_g, p.norm1_b, kCglnEps);
  std::vector<int> bands;
  for (int s = 0; s < cfg.sub_bands(); ++s) {
    int seq = ad::merge_chan_freq(t, ad::slice_freq(t, h, s, 1));
    int y = ad::lstm_seq(t, seq, p.lstm.wi, p.lstm.wh, p.lstm.bi, p.lstm.bh);
    bands.push_back(ad::split_chan_freq(t, y, cfg.Hp, 1));
  }
  int u = ad::concat_freq(t, bands);
  int d = ad::deconv_freq(t, u, p.deconv_w, p.deconv_b, cfg.Jp);
  d = ad::slice_freq(t, d, 0, f);
  return ad::add(t, x, d);
}

}  // namespace

int forward_on_tape(ad::Tape& t, const ModelConfig& cfg, const ModelVars& vars, int mix_ri) {
  int h = ad::pad_freq(t, mix_ri, 1, 1);
  h = ad::conv_freq(t, h, vars.in_w, vars.in_b, 1);
  for (const auto& blk : vars.blocks) {
    h = full_band_on_tape(t, cfg, blk.fb, h);
    if (blk.sb) h = sub_band_on_tape(t, cfg, *blk.sb, h);
  }
  int d = ad::deconv_freq(t, h, vars.out_w, vars.out_b, 1);
  return ad::slice_freq(t, d, 1, cfg.bins());
}

template ModelWeights<float> bind_weights<float>(const WeightStore&);
template ModelWeights<double> bind_weights<double>(const WeightStore&);
template TensorT<float> forward_offline<float>(const ModelConfig&, const ModelWeights<float>&,
                                               const TensorT<float>&);
template TensorT<double> forward_offline<double>(const ModelConfig&, const ModelWeights<double>&,
                                                 const TensorT<double>&);
template StreamState<float> init_stream_state<float>(const ModelConfig&);
template StreamState<double> init_stream_state<double>(const ModelConfig&);
template TensorT<float> full_band_block<float>(const ModelConfig&, const FullBandParams<float>&,
                                               const TensorT<float>&);
template TensorT<double> full_band_block<double>(const ModelConfig&, const FullBandParams<double>&,
                                                 const TensorT<double>&);
template TensorT<float> sub_band_block<float>(const ModelConfig&, const SubBandParams<float>&,
                                              const TensorT<float>&);
template TensorT<double> sub_band_block<double>(const ModelConfig&, const SubBandParams<double>&,
                                                const TensorT<double>&);
template TensorT<float> full_band_block_step<float>(const ModelConfig&, const FullBandParams<float>&,
                                                    BlockState<float>&, const TensorT<float>&);
template TensorT<double> full_band_block_step<double>(const ModelConfig&,
                                                      const FullBandParams<double>&,
                                                      BlockState<double>&, const TensorT<double>&);
template TensorT<float> sub_band_block_step<float>(const ModelConfig&, const SubBandParams<float>&,
                                                   BlockState<float>&, const TensorT<float>&);
template TensorT<double> sub_band_block_step<double>(const ModelConfig&,
                                                     const SubBandParams<double>&,
                                                     BlockState<double>&, const TensorT<double>&);
template TensorT<float> step_online<float>(const ModelConfig&, const ModelWeights<float>&,
                                           StreamState<float>&, const TensorT<float>&);
template TensorT<double> step_online<double>(const ModelConfig&, const ModelWeights<double>&,
                                             StreamState<double>&, const TensorT<double>&);

}  // namespace fsbnet
