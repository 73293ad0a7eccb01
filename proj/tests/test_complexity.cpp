#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "fsbnet/complexity.hpp"
#include "fsbnet/model.hpp"
#include "fsbnet/train.hpp"
#include "fsbnet/weights.hpp"

using namespace fsbnet;

namespace {
double gmacs(const char* preset, int hop_ms = 0) {
  ModelConfig cfg = preset_config(preset);
  if (hop_ms > 0) set_hop_ms(cfg, hop_ms);
  return analyze_complexity(cfg).gmacs_per_second;
}

bool within(double value, double target, double rel) {
  return value >= target * (1.0 - rel) && value <= target * (1.0 + rel);
}
}  // namespace

TEST_CASE("parameter count equals the enumerated weight store") {
  for (const auto& name : preset_names()) {
    const ModelConfig cfg = preset_config(name);
    const ComplexityReport rep = analyze_complexity(cfg);
    const WeightStore store = init_random(cfg, 1);
    CHECK(rep.params == store.total_params());
  }
  const ModelConfig tiny = toy_config();
  CHECK(analyze_complexity(tiny).params == init_random(tiny, 1).total_params());
}

TEST_CASE("published parameter totals") {
  CHECK(within(analyze_complexity(preset_config("fsb-6ch")).params / 1e6, 1.96, 0.01 / 1.96));
  CHECK(within(analyze_complexity(preset_config("fb6-6ch")).params / 1e6, 3.59, 0.01 / 3.59));
  CHECK(within(analyze_complexity(preset_config("fb9-6ch")).params / 1e6, 5.38, 0.01 / 5.38));
}

TEST_CASE("published MAC rates within five percent") {
  CHECK(within(gmacs("fsb-6ch"), 3.37, 0.05));
  CHECK(within(gmacs("fsb-2ch"), 3.31, 0.05));
  CHECK(within(gmacs("fsb-1ch"), 3.30, 0.05));
  CHECK(within(gmacs("fb6-6ch", 8), 0.58, 0.05));
  CHECK(within(gmacs("fb6-6ch", 4), 1.16, 0.05));
  CHECK(within(gmacs("fb6-6ch", 2), 2.33, 0.05));
  CHECK(within(gmacs("fb6-6ch", 1), 4.65, 0.05));
}

TEST_CASE("halving the hop exactly doubles the MAC rate") {
  for (const char* preset : {"fsb-6ch", "fb6-6ch"}) {
    const double g8 = gmacs(preset, 8), g4 = gmacs(preset, 4), g2 = gmacs(preset, 2),
                 g1 = gmacs(preset, 1);
    CHECK(g4 / g8 == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(g2 / g4 == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(g1 / g2 == doctest::Approx(2.0).epsilon(1e-12));
  }
}

TEST_CASE("sub-band to full-band MAC ratio is around two") {
  const ComplexityReport rep = analyze_complexity(preset_config("fsb-6ch"));
  const double ratio = static_cast<double>(rep.sb_block_macs) / rep.fb_block_macs;
  CHECK(ratio >= 1.8);
  CHECK(ratio <= 2.2);
}

TEST_CASE("buffer accounting") {
  const ComplexityReport rep = analyze_complexity(preset_config("fsb-6ch"));
  CHECK(rep.lstm_state_bytes == 46080);  // 4*(3*2*256 + 3*2*64*26)
  CHECK(within(static_cast<double>(rep.buffer_bytes), 46200.0, 0.05));

  const ComplexityReport fb6 = analyze_complexity(preset_config("fb6-6ch"));
  CHECK(fb6.lstm_state_bytes == 4 * (6 * 2 * 256));

  // Halving the sub-band hidden size halves that state contribution.
  ModelConfig half = preset_config("fsb-6ch");
  half.Hp /= 2;
  const ComplexityReport rep_half = analyze_complexity(half);
  const long long sb_full = rep.lstm_state_bytes - 4LL * (3 * 2 * 256);
  const long long sb_half = rep_half.lstm_state_bytes - 4LL * (3 * 2 * 256);
  CHECK(sb_half * 2 == sb_full);
}

TEST_CASE("totals equal the sum of breakdown rows") {
  for (const auto& name : preset_names()) {
    const ComplexityReport rep = analyze_complexity(preset_config(name));
    long long params = 0, macs = 0, model_bytes = 0, stft_bytes = 0;
    for (const auto& r : rep.rows) {
      params += r.params;
      macs += r.macs_per_frame;
    }
    for (const auto& r : rep.buffer_rows) (r.model_state ? model_bytes : stft_bytes) += r.bytes;
    CHECK(params == rep.params);
    CHECK(macs == rep.macs_per_frame);
    CHECK(model_bytes == rep.buffer_bytes);
    CHECK(stft_bytes == rep.stft_buffer_bytes);
  }
}

TEST_CASE("instrumented execution agrees with the closed form within one percent") {
  for (const char* name : {"fsb-6ch", "fb6-6ch"}) {
    const ModelConfig cfg = preset_config(name);
    const ComplexityReport rep = analyze_complexity(cfg);
    const auto w = bind_weights<float>(init_random(cfg, 2));
    std::mt19937_64 rng(3);
    const int t_len = 4;
    TensorT<float> x({2 * cfg.P, t_len, cfg.bins()});
    for (long long i = 0; i < x.size(); ++i)
      x.data()[i] = static_cast<float>((rng() >> 11) * 0x1.0p-53 - 0.5);

    std::uint64_t counted = 0;
    {
      macs::Scope scope(counted);
      forward_offline(cfg, w, x);
    }
    const double per_frame = static_cast<double>(counted) / t_len;
    CHECK(per_frame == doctest::Approx(static_cast<double>(rep.macs_per_frame)).epsilon(0.01));
  }
}

TEST_CASE("report formatting carries the machine-readable keys") {
  const ModelConfig cfg = preset_config("fsb-6ch");
  const std::string text = format_report(analyze_complexity(cfg), cfg);
  CHECK(text.find("params=1955203") != std::string::npos);
  CHECK(text.find("gmacs_per_second=") != std::string::npos);
  CHECK(text.find("lstm_state_bytes=46080") != std::string::npos);
  CHECK(text.find("sb_fb_mac_ratio=") != std::string::npos);
}
