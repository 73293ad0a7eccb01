// Named weight tensors plus a bit-exact on-disk container ("FSBW").
// File layout: magic "FSBW", version byte 0x01, u64-LE manifest length, JSON
// manifest {config, tensors:[{name, shape, dtype, offset, len}], crc32}, then
// the raw little-endian f32 blob in manifest order.
#pragma once

#include <string>
#include <vector>

#include "fsbnet/config.hpp"
#include "fsbnet/tensor.hpp"

namespace fsbnet {

struct TensorSpec {
  enum class Init { Uniform, One, Zero, Slope };
  std::string name;
  std::vector<int> shape;
  Init init = Init::Uniform;
  int fan_in = 1;

  long long elems() const {
    long long n = 1;
    for (int d : shape) n *= d;
    return n;
  }
};

// Canonical tensor order for a configuration; both the container format and
// the parameter counter follow it.
std::vector<TensorSpec> weight_layout(const ModelConfig& cfg);

class WeightStore {
 public:
  WeightStore() = default;
  WeightStore(ModelConfig cfg, std::vector<Tensor> tensors);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<TensorSpec>& layout() const { return layout_; }
  const Tensor& tensor(size_t i) const { return tensors_[i]; }
  const Tensor& tensor(const std::string& name) const;
  Tensor& mutable_tensor(size_t i) { return tensors_[i]; }
  size_t count() const { return tensors_.size(); }
  long long total_params() const;

  bool operator==(const WeightStore& o) const {
    return cfg_ == o.cfg_ && tensors_ == o.tensors_;
  }

 private:
  ModelConfig cfg_;
  std::vector<TensorSpec> layout_;
  std::vector<Tensor> tensors_;
};

// Deterministic initialization: uniform(-k, k) with k = 1/sqrt(fan_in);
// normalization gains 1, shifts 0; PReLU slopes 0.25.
WeightStore init_random(const ModelConfig& cfg, unsigned long long seed);

void save_weights(const WeightStore& store, const std::string& path);
WeightStore load_weights(const std::string& path);

}  // namespace fsbnet
