#include "fsbnet/weights.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>
#include <zlib.h>

static_assert(std::endian::native == std::endian::little,
              "weight container assumes a little-endian host");

namespace fsbnet {

namespace {
using nlohmann::json;

void push_lstm(std::vector<TensorSpec>& specs, const std::string& prefix, int in_dim, int hidden) {
  specs.push_back({prefix + ".wi", {4 * hidden, in_dim}, TensorSpec::Init::Uniform, in_dim});
  specs.push_back({prefix + ".wh", {4 * hidden, hidden}, TensorSpec::Init::Uniform, hidden});
  specs.push_back({prefix + ".bi", {4 * hidden}, TensorSpec::Init::Uniform, in_dim});
  specs.push_back({prefix + ".bh", {4 * hidden}, TensorSpec::Init::Uniform, hidden});
}
}  // namespace

std::vector<TensorSpec> weight_layout(const ModelConfig& cfg) {
  cfg.validate();
  using Init = TensorSpec::Init;
  std::vector<TensorSpec> specs;
  const int f = cfg.bins();
  const int a = cfg.fb_features();

  specs.push_back({"input_conv.w", {cfg.D, 2 * cfg.P, 3}, Init::Uniform, 2 * cfg.P * 3});
  specs.push_back({"input_conv.b", {cfg.D}, Init::Uniform, 2 * cfg.P * 3});

  for (int i = 0; i < cfg.num_blocks(); ++i) {
    const std::string fb = "block" + std::to_string(i) + ".fb";
    specs.push_back({fb + ".conv.w", {cfg.E, cfg.D, cfg.I}, Init::Uniform, cfg.D * cfg.I});
    specs.push_back({fb + ".conv.b", {cfg.E}, Init::Uniform, cfg.D * cfg.I});
    specs.push_back({fb + ".prelu1.a", {1}, Init::Slope, 1});
    specs.push_back({fb + ".norm1.g", {a}, Init::One, 1});
    specs.push_back({fb + ".norm1.b", {a}, Init::Zero, 1});
    push_lstm(specs, fb + ".lstm", a, cfg.H);
    specs.push_back({fb + ".lin.w", {a, cfg.H}, Init::Uniform, cfg.H});
    specs.push_back({fb + ".lin.b", {a}, Init::Uniform, cfg.H});
    specs.push_back({fb + ".norm2.g", {a}, Init::One, 1});
    specs.push_back({fb + ".norm2.b", {a}, Init::Zero, 1});
    specs.push_back({fb + ".prelu2.a", {1}, Init::Slope, 1});
    specs.push_back({fb + ".deconv.w", {cfg.E, cfg.D, cfg.I}, Init::Uniform, cfg.E * cfg.I});
    specs.push_back({fb + ".deconv.b", {cfg.D}, Init::Uniform, cfg.E * cfg.I});

    if (cfg.has_sub_band()) {
      const std::string sb = "block" + std::to_string(i) + ".sb";
      specs.push_back({sb + ".conv.w", {cfg.Ep, cfg.D, cfg.Ip}, Init::Uniform, cfg.D * cfg.Ip});
      specs.push_back({sb + ".conv.b", {cfg.Ep}, Init::Uniform, cfg.D * cfg.Ip});
      specs.push_back({sb + ".prelu1.a", {1}, Init::Slope, 1});
      specs.push_back({sb + ".norm1.g", {cfg.Ep}, Init::One, 1});
      specs.push_back({sb + ".norm1.b", {cfg.Ep}, Init::Zero, 1});
      push_lstm(specs, sb + ".lstm", cfg.Ep, cfg.Hp);
      specs.push_back({sb + ".deconv.w", {cfg.Hp, cfg.D, cfg.Ip}, Init::Uniform, cfg.Hp * cfg.Ip});
      specs.push_back({sb + ".deconv.b", {cfg.D}, Init::Uniform, cfg.Hp * cfg.Ip});
    }
  }

  specs.push_back({"output_deconv.w", {cfg.D, 2, 3}, Init::Uniform, cfg.D * 3});
  specs.push_back({"output_deconv.b", {2}, Init::Uniform, cfg.D * 3});
  (void)f;
  return specs;
}

WeightStore::WeightStore(ModelConfig cfg, std::vector<Tensor> tensors)
    : cfg_(std::move(cfg)), layout_(weight_layout(cfg_)), tensors_(std::move(tensors)) {
  if (tensors_.size() != layout_.size())
    throw std::invalid_argument("weight store: tensor count does not match config");
  for (size_t i = 0; i < layout_.size(); ++i)
    if (tensors_[i].shape() != layout_[i].shape)
      throw std::invalid_argument("weight store: shape mismatch for " + layout_[i].name);
}

const Tensor& WeightStore::tensor(const std::string& name) const {
  for (size_t i = 0; i < layout_.size(); ++i)
    if (layout_[i].name == name) return tensors_[i];
  throw std::out_of_range("weight store: no tensor named " + name);
}

long long WeightStore::total_params() const {
  long long n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

WeightStore init_random(const ModelConfig& cfg, unsigned long long seed) {
  std::mt19937_64 rng(seed);
  auto next_unit = [&rng]() {
    // 53 mantissa bits -> [0, 1); identical on every platform.
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
  };
  std::vector<Tensor> tensors;
  for (const TensorSpec& spec : weight_layout(cfg)) {
    Tensor t(spec.shape);
    switch (spec.init) {
      case TensorSpec::Init::Uniform: {
        const double k = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
        for (long long i = 0; i < t.size(); ++i)
          t.data()[i] = static_cast<float>((2.0 * next_unit() - 1.0) * k);
        break;
      }
      case TensorSpec::Init::One:
        t.fill(1.0f);
        break;
      case TensorSpec::Init::Zero:
        break;
      case TensorSpec::Init::Slope:
        t.fill(0.25f);
        break;
    }
    tensors.push_back(std::move(t));
  }
  return WeightStore(cfg, std::move(tensors));
}

namespace {
constexpr char kMagic[4] = {'F', 'S', 'B', 'W'};
constexpr std::uint8_t kVersion = 0x01;

std::uint32_t blob_crc(const std::vector<char>& blob) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(blob.data()), static_cast<uInt>(blob.size())));
}
}  // namespace

void save_weights(const WeightStore& store, const std::string& path) {
  std::vector<char> blob;
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (size_t i = 0; i < store.count(); ++i) {
    const Tensor& t = store.tensor(i);
    const std::uint64_t bytes = static_cast<std::uint64_t>(t.size()) * sizeof(float);
    tensors.push_back(json{{"name", store.layout()[i].name},
                           {"shape", t.shape()},
                           {"dtype", "f32"},
                           {"offset", offset},
                           {"len", bytes}});
    const size_t pos = blob.size();
    blob.resize(pos + bytes);
    std::memcpy(blob.data() + pos, t.data(), bytes);
    offset += bytes;
  }
  json manifest{{"config", json::parse(config_to_json(store.config()))},
                {"tensors", std::move(tensors)},
                {"crc32", blob_crc(blob)}};
  const std::string mtext = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("weights: cannot open for writing: " + path);
  out.write(kMagic, 4);
  out.put(static_cast<char>(kVersion));
  const std::uint64_t mlen = mtext.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw std::runtime_error("weights: write failed: " + path);
}

WeightStore load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("weights: cannot open: " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("weights: bad magic, not an FSBW file");
  const int version = in.get();
  if (version != kVersion) throw std::runtime_error("weights: unsupported version");
  std::uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  if (!in) throw std::runtime_error("weights: truncated header");
  std::string mtext(mlen, '\0');
  in.read(mtext.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw std::runtime_error("weights: truncated manifest");

  json manifest;
  try {
    manifest = json::parse(mtext);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("weights: manifest parse failed: ") + e.what());
  }

  ModelConfig cfg = config_from_json(manifest.at("config").dump());
  std::vector<char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::uint32_t want_crc = manifest.at("crc32").get<std::uint32_t>();
  if (blob_crc(blob) != want_crc) throw std::runtime_error("weights: blob checksum mismatch");

  const std::vector<TensorSpec> layout = weight_layout(cfg);
  const json& tensors_j = manifest.at("tensors");
  if (tensors_j.size() != layout.size())
    throw std::runtime_error("weights: tensor count does not match config");

  std::vector<Tensor> tensors;
  tensors.reserve(layout.size());
  for (size_t i = 0; i < layout.size(); ++i) {
    const json& tj = tensors_j[i];
    if (tj.at("name").get<std::string>() != layout[i].name)
      throw std::runtime_error("weights: unexpected tensor name " +
                               tj.at("name").get<std::string>());
    if (tj.at("dtype").get<std::string>() != "f32")
      throw std::runtime_error("weights: unsupported dtype");
    const std::vector<int> shape = tj.at("shape").get<std::vector<int>>();
    if (shape != layout[i].shape)
      throw std::runtime_error("weights: shape mismatch for " + layout[i].name);
    const std::uint64_t offset = tj.at("offset").get<std::uint64_t>();
    const std::uint64_t len = tj.at("len").get<std::uint64_t>();
    const std::uint64_t want = static_cast<std::uint64_t>(layout[i].elems()) * sizeof(float);
    if (len != want || offset + len > blob.size())
      throw std::runtime_error("weights: blob range invalid for " + layout[i].name);
    std::vector<float> data(layout[i].elems());
    std::memcpy(data.data(), blob.data() + offset, len);
    tensors.push_back(Tensor::from(shape, std::move(data)));
  }
  return WeightStore(cfg, std::move(tensors));
}

}  // namespace fsbnet
