// Minimal RIFF/WAVE reader and writer for 16-bit PCM and 32-bit float.
#pragma once

#include <string>
#include <vector>

namespace fsbnet {

struct WavFile {
  enum class Format { Pcm16, Float32 };
  int sample_rate = 16000;
  int channels = 1;
  Format format = Format::Pcm16;
  std::vector<float> samples;  // interleaved, PCM scaled to [-1, 1)

  long long frames() const {
    return channels > 0 ? static_cast<long long>(samples.size()) / channels : 0;
  }
  std::vector<float> channel(int c) const;
};

WavFile read_wav(const std::string& path);
void write_wav(const WavFile& wav, const std::string& path);

}  // namespace fsbnet
