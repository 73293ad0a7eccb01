// Architecture hyper-parameters and the shapes derived from them.
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "fsbnet/stft.hpp"

namespace fsbnet {

// Two variants: the full model interleaves a full-band and a sub-band block
// per module; the ablation stacks full-band blocks only.
enum class Variant { FSB, FB };

struct ModelConfig {
  Variant variant = Variant::FSB;
  int B = 3;          // FSB modules (one full-band + one sub-band block each)
  int fb_layers = 6;  // total blocks when variant == FB
  int D = 32;         // embedding channels on the residual path
  int E = 8, I = 8, J = 4, H = 256;     // full-band block
  int Ep = 64, Ip = 5, Jp = 5, Hp = 64; // sub-band block
  int P = 6;          // microphones
  StftConfig stft{};

  int bins() const { return stft.bins(); }
  int num_blocks() const { return variant == Variant::FSB ? B : fb_layers; }
  bool has_sub_band() const { return variant == Variant::FSB; }

  // Frequency padded up to a multiple of the stride, then strided positions.
  static int padded_freq(int f, int kernel, int stride) {
    return (f - kernel + stride - 1) / stride * stride + kernel;
  }
  int fb_padded() const { return padded_freq(bins(), I, J); }      // Q
  int fb_positions() const { return (fb_padded() - I) / J + 1; }
  int fb_features() const { return E * fb_positions(); }           // A
  int sb_padded() const { return padded_freq(bins(), Ip, Jp); }    // Q'
  int sub_bands() const { return (sb_padded() - Ip) / Jp + 1; }    // S

  void validate() const {
    stft.validate();
    auto positive = [](int v, const char* name) {
      if (v < 1) throw std::invalid_argument(std::string("config: ") + name + " must be >= 1");
    };
    positive(D, "D");
    positive(E, "E");
    positive(I, "I");
    positive(J, "J");
    positive(H, "H");
    positive(Ep, "Ep");
    positive(Ip, "Ip");
    positive(Jp, "Jp");
    positive(Hp, "Hp");
    positive(P, "P");
    if (variant == Variant::FSB) positive(B, "B");
    else positive(fb_layers, "fb_layers");
    if (bins() < I || bins() < Ip)
      throw std::invalid_argument("config: kernel size exceeds frequency bins");
  }

  bool operator==(const ModelConfig&) const = default;
};

// JSON round-trip (field names match the struct; variant as "fsb"/"fb").
std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const std::string& json_text);

// Named configurations: fsb-6ch, fsb-2ch, fsb-1ch, fb6-6ch, fb9-6ch.
ModelConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

// Rescales hop (and the 2x synthesis window) keeping the 16 ms analysis window.
void set_hop_ms(ModelConfig& cfg, int hop_ms);

inline constexpr double kCglnEps = 1e-5;

}  // namespace fsbnet
