// Reverse-mode differentiation over the layer primitives. A Tape records one
// primitive application per node together with the variable ids it read and
// wrote; backward() walks the nodes in reverse, each applying its exact
// adjoint. Values are kept in 64-bit precision.
#pragma once

#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fsbnet/stft.hpp"
#include "fsbnet/tensor.hpp"

namespace fsbnet::ad {

class Tape;

struct Node {
  std::vector<int> in;
  std::vector<int> out;
  virtual ~Node() = default;
  virtual void forward(Tape& t) = 0;   // recompute out values from in values
  virtual void backward(Tape& t) = 0;  // accumulate grads of in from grads of out
};

class Tape {
 public:
  // Registers a leaf variable.
  int input(TensorD v);

  const TensorD& val(int id) const { return values_.at(static_cast<size_t>(id)); }
  TensorD& mutable_val(int id) { return values_.at(static_cast<size_t>(id)); }
  const TensorD& grad(int id) const { return grads_.at(static_cast<size_t>(id)); }
  TensorD& mutable_grad(int id) { return grads_.at(static_cast<size_t>(id)); }

  // Reverse sweep from a scalar-valued variable.
  void backward(int seed);

  // Recomputes every recorded node in order from the current leaf values.
  void replay();

  size_t num_nodes() const { return nodes_.size(); }
  size_t num_vars() const { return values_.size(); }

  int alloc_var(std::vector<int> shape);
  void record(std::unique_ptr<Node> node);

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
  std::vector<TensorD> values_;
  std::vector<TensorD> grads_;
};

// Primitive ops. Each returns the id(s) of freshly allocated output variables.
int conv_freq(Tape& t, int x, int w, int b, int stride);
int deconv_freq(Tape& t, int x, int w, int b, int stride);
std::pair<int, int> lstm_step(Tape& t, int x, int h, int c, int wi, int wh, int bi, int bh);
int lstm_seq(Tape& t, int x, int wi, int wh, int bi, int bh);
int cgln_2d(Tape& t, int x, int gamma, int beta, double eps);
int cgln_3d(Tape& t, int x, int gamma, int beta, double eps);
// Streaming variants. stats is a 3-vector [sum, sumsq, count]; returns
// (frame_out, stats_out). Gradients flow through sum and sumsq.
std::pair<int, int> cgln_2d_stream(Tape& t, int x, int gamma, int beta, int stats, double eps);
std::pair<int, int> cgln_3d_stream(Tape& t, int x, int gamma, int beta, int stats, double eps);
int prelu(Tape& t, int x, int slope);
int linear(Tape& t, int x, int w, int b);
int pad_freq(Tape& t, int x, int lo, int hi);
int slice_freq(Tape& t, int x, int start, int len);
int slice_time(Tape& t, int x, int start, int len);
int concat_time(Tape& t, const std::vector<int>& xs);
int concat_freq(Tape& t, const std::vector<int>& xs);
int merge_chan_freq(Tape& t, int x);
int split_chan_freq(Tape& t, int x, int e, int k);
int reshape(Tape& t, int x, std::vector<int> shape);
int add(Tape& t, int a, int b);

// Signal-level ops for the loss path.
int istft(Tape& t, int ri, const StftConfig& cfg, long long out_len);
int stft(Tape& t, int wave, const StftConfig& cfg);
int magnitude(Tape& t, int ri);        // 2 x T x F -> T x F
int l1_mean(Tape& t, int a, int b);    // scalar mean |a - b|
int sum_squares(Tape& t, int x);       // scalar
int sum_all(Tape& t, int x);           // scalar

}  // namespace fsbnet::ad
