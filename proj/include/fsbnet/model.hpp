// Network assembly: input embedding, B x (full-band block [+ sub-band block])
// over a residual D x T x F path, output projection. Offline (whole utterance)
// and streaming (one frame in, one frame out) execution share the same layer
// kernels.
#pragma once

#include <complex>
#include <optional>
#include <vector>

#include "fsbnet/autodiff.hpp"
#include "fsbnet/config.hpp"
#include "fsbnet/ops.hpp"
#include "fsbnet/stft.hpp"
#include "fsbnet/weights.hpp"

namespace fsbnet {

template <typename S>
struct LstmParams {
  TensorT<S> wi, wh, bi, bh;
  TensorT<S> wi_t, wh_t;  // column-major caches for the streaming kernels
};

template <typename S>
struct FullBandParams {
  TensorT<S> conv_w, conv_b, prelu1, norm1_g, norm1_b;
  LstmParams<S> lstm;
  TensorT<S> lin_w, lin_b, norm2_g, norm2_b, prelu2, deconv_w, deconv_b;
  TensorT<S> lin_w_t;
};

template <typename S>
struct SubBandParams {
  TensorT<S> conv_w, conv_b, prelu1, norm1_g, norm1_b;
  LstmParams<S> lstm;
  TensorT<S> deconv_w, deconv_b;
};

template <typename S>
struct BlockParams {
  FullBandParams<S> fb;
  std::optional<SubBandParams<S>> sb;
};

template <typename S>
struct ModelWeights {
  TensorT<S> in_w, in_b;
  std::vector<BlockParams<S>> blocks;
  TensorT<S> out_w, out_b;
};

// Materializes a structured view from the flat store, casting to S.
template <typename S>
ModelWeights<S> bind_weights(const WeightStore& store);

// Visits every tensor in canonical layout order.
template <typename S, typename F>
void for_each_tensor(ModelWeights<S>& w, F&& f) {
  f(w.in_w);
  f(w.in_b);
  for (auto& blk : w.blocks) {
    f(blk.fb.conv_w);
    f(blk.fb.conv_b);
    f(blk.fb.prelu1);
    f(blk.fb.norm1_g);
    f(blk.fb.norm1_b);
    f(blk.fb.lstm.wi);
    f(blk.fb.lstm.wh);
    f(blk.fb.lstm.bi);
    f(blk.fb.lstm.bh);
    f(blk.fb.lin_w);
    f(blk.fb.lin_b);
    f(blk.fb.norm2_g);
    f(blk.fb.norm2_b);
    f(blk.fb.prelu2);
    f(blk.fb.deconv_w);
    f(blk.fb.deconv_b);
    if (blk.sb) {
      f(blk.sb->conv_w);
      f(blk.sb->conv_b);
      f(blk.sb->prelu1);
      f(blk.sb->norm1_g);
      f(blk.sb->norm1_b);
      f(blk.sb->lstm.wi);
      f(blk.sb->lstm.wh);
      f(blk.sb->lstm.bi);
      f(blk.sb->lstm.bh);
      f(blk.sb->deconv_w);
      f(blk.sb->deconv_b);
    }
  }
  f(w.out_w);
  f(w.out_b);
}

// Whole-utterance forward: stacked RI input (2P x T x F) to target RI (2 x T x F).
template <typename S>
TensorT<S> forward_offline(const ModelConfig& cfg, const ModelWeights<S>& w,
                           const TensorT<S>& mix_ri);

// The two residual blocks, whole-utterance form (D x T x F -> D x T x F).
template <typename S>
TensorT<S> full_band_block(const ModelConfig& cfg, const FullBandParams<S>& p,
                           const TensorT<S>& x);
template <typename S>
TensorT<S> sub_band_block(const ModelConfig& cfg, const SubBandParams<S>& p, const TensorT<S>& x);

// Streaming state: LSTM hidden/cell vectors plus cumulative norm statistics.
template <typename S>
struct BlockState {
  TensorT<S> fb_h, fb_c;
  ops::CglnStats fb_norm1, fb_norm2;
  std::vector<TensorT<S>> sb_h, sb_c;  // one per sub-band, shared weights
  ops::CglnStats sb_norm1;
};

template <typename S>
struct StreamState {
  std::vector<BlockState<S>> blocks;
};

template <typename S>
StreamState<S> init_stream_state(const ModelConfig& cfg);

// One frame: mix RI (2P x F) -> estimate RI (2 x F). Same math as
// forward_offline restricted to a single frame.
template <typename S>
TensorT<S> step_online(const ModelConfig& cfg, const ModelWeights<S>& w, StreamState<S>& state,
                       const TensorT<S>& frame_ri);

// Per-frame block forms consuming/updating explicit state (D x 1 x F slices).
template <typename S>
TensorT<S> full_band_block_step(const ModelConfig& cfg, const FullBandParams<S>& p,
                                BlockState<S>& st, const TensorT<S>& x);
template <typename S>
TensorT<S> sub_band_block_step(const ModelConfig& cfg, const SubBandParams<S>& p,
                               BlockState<S>& st, const TensorT<S>& x);

// Full pipeline: per-microphone analysis, the network frame step, synthesis.
// Push accepts arbitrary chunk lengths; output is bit-identical regardless of
// chunking. Emitted sample n corresponds to input sample n.
class StreamEnhancer {
 public:
  StreamEnhancer(const ModelConfig& cfg, const WeightStore& store);

  int channels() const { return cfg_.P; }
  int sample_rate() const { return cfg_.stft.sample_rate; }

  // chunk[p] holds the same number of new samples for every microphone p.
  std::vector<float> push(const std::vector<std::vector<float>>& chunk);
  // Drains buffered input; afterwards total output length == total input length.
  std::vector<float> flush();

  long long frames_processed() const { return frames_; }

 private:
  std::vector<float> process_ready();

  ModelConfig cfg_;
  ModelWeights<float> weights_;
  StreamState<float> state_;
  std::vector<StftAnalysis> analysis_;
  StftSynthesis synthesis_;
  std::vector<std::vector<float>> pending_;  // per-mic samples not yet consumed
  long long frames_ = 0;
  long long total_in_ = 0;
  long long total_out_ = 0;
};

// Tape-side model: same assembly recorded through autodiff ops.
struct ModelVars {
  int in_w, in_b;
  struct Lstm {
    int wi, wh, bi, bh;
  };
  struct Fb {
    int conv_w, conv_b, prelu1, norm1_g, norm1_b;
    Lstm lstm;
    int lin_w, lin_b, norm2_g, norm2_b, prelu2, deconv_w, deconv_b;
  };
  struct Sb {
    int conv_w, conv_b, prelu1, norm1_g, norm1_b;
    Lstm lstm;
    int deconv_w, deconv_b;
  };
  struct Block {
    Fb fb;
    std::optional<Sb> sb;
  };
  std::vector<Block> blocks;
  int out_w, out_b;
};

// Structures a flat list of variable ids (canonical layout order).
ModelVars make_model_vars(const ModelConfig& cfg, const std::vector<int>& ids);

// Pushes every weight tensor as a tape leaf, in canonical order.
ModelVars push_weights(ad::Tape& tape, const ModelConfig& cfg, ModelWeights<double>& w);

// Records the offline forward pass on the tape; returns the output RI var.
int forward_on_tape(ad::Tape& tape, const ModelConfig& cfg, const ModelVars& vars, int mix_ri);

}  // namespace fsbnet
