#include "fsbnet/wav.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace fsbnet {

namespace {
constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatIeeeFloat = 3;

template <typename T>
T read_le(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_tag(std::ostream& out, const char* tag) { out.write(tag, 4); }
}  // namespace

std::vector<float> WavFile::channel(int c) const {
  if (c < 0 || c >= channels) throw std::out_of_range("wav: channel index out of range");
  std::vector<float> out(static_cast<size_t>(frames()));
  for (long long i = 0; i < frames(); ++i) out[i] = samples[i * channels + c];
  return out;
}

WavFile read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav: cannot open " + path);

  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0) throw std::runtime_error("wav: missing RIFF header");
  read_le<std::uint32_t>(in);  // riff size, unused
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0) throw std::runtime_error("wav: not a WAVE file");

  WavFile wav;
  std::uint16_t format_tag = 0, bits = 0;
  bool have_fmt = false;
  while (in.read(tag, 4)) {
    const std::uint32_t size = read_le<std::uint32_t>(in);
    if (!in) throw std::runtime_error("wav: truncated chunk header");
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (size < 16) throw std::runtime_error("wav: fmt chunk too small");
      format_tag = read_le<std::uint16_t>(in);
      wav.channels = read_le<std::uint16_t>(in);
      wav.sample_rate = static_cast<int>(read_le<std::uint32_t>(in));
      read_le<std::uint32_t>(in);  // byte rate
      read_le<std::uint16_t>(in);  // block align
      bits = read_le<std::uint16_t>(in);
      in.seekg(size - 16 + (size % 2), std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw std::runtime_error("wav: data chunk before fmt");
      if (wav.channels < 1) throw std::runtime_error("wav: bad channel count");
      if (format_tag == kFormatPcm && bits == 16) {
        wav.format = WavFile::Format::Pcm16;
        const size_t n = size / 2;
        std::vector<std::int16_t> raw(n);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(size));
        if (!in) throw std::runtime_error("wav: truncated sample data");
        wav.samples.resize(n);
        for (size_t i = 0; i < n; ++i) wav.samples[i] = static_cast<float>(raw[i]) / 32768.0f;
      } else if (format_tag == kFormatIeeeFloat && bits == 32) {
        wav.format = WavFile::Format::Float32;
        const size_t n = size / 4;
        wav.samples.resize(n);
        in.read(reinterpret_cast<char*>(wav.samples.data()), static_cast<std::streamsize>(size));
        if (!in) throw std::runtime_error("wav: truncated sample data");
      } else {
        throw std::runtime_error("wav: unsupported format (need 16-bit PCM or 32-bit float)");
      }
      return wav;
    } else {
      in.seekg(size + (size % 2), std::ios::cur);
      if (!in) throw std::runtime_error("wav: truncated chunk");
    }
  }
  throw std::runtime_error("wav: no data chunk found");
}

void write_wav(const WavFile& wav, const std::string& path) {
  if (wav.channels < 1) throw std::invalid_argument("wav: channel count must be >= 1");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("wav: cannot open for writing " + path);

  const bool is_float = wav.format == WavFile::Format::Float32;
  const std::uint16_t bits = is_float ? 32 : 16;
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(wav.samples.size() * (is_float ? 4 : 2));

  write_tag(out, "RIFF");
  write_le<std::uint32_t>(out, 36 + data_bytes);
  write_tag(out, "WAVE");
  write_tag(out, "fmt ");
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, is_float ? kFormatIeeeFloat : kFormatPcm);
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(wav.channels));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(wav.sample_rate));
  const std::uint32_t byte_rate = static_cast<std::uint32_t>(wav.sample_rate) * wav.channels *
                                  (is_float ? 4 : 2);
  write_le<std::uint32_t>(out, byte_rate);
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(wav.channels * (is_float ? 4 : 2)));
  write_le<std::uint16_t>(out, bits);
  write_tag(out, "data");
  write_le<std::uint32_t>(out, data_bytes);

  if (is_float) {
    out.write(reinterpret_cast<const char*>(wav.samples.data()), data_bytes);
  } else {
    std::vector<std::int16_t> raw(wav.samples.size());
    for (size_t i = 0; i < wav.samples.size(); ++i) {
      const float v = std::max(-1.0f, std::min(32767.0f / 32768.0f, wav.samples[i]));
      raw[i] = static_cast<std::int16_t>(std::lrintf(v * 32768.0f));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), data_bytes);
  }
  if (!out) throw std::runtime_error("wav: write failed " + path);
}

}  // namespace fsbnet
