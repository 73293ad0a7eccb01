#include "fsbnet/complexity.hpp"

#include <sstream>

namespace fsbnet {

namespace {
// One MAC = one multiply+add inside a dense product. Biases, activations and
// normalizations are excluded; the deconvolution is costed in its
// linear-plus-overlap-add form, i.e. Fin * Cin * Cout * I per frame.
long long conv_params(int cout, int cin, int k) { return static_cast<long long>(cout) * cin * k + cout; }
long long lstm_params(int in, int h) {
  return 4LL * (static_cast<long long>(in) * h + static_cast<long long>(h) * h + 2LL * h);
}
long long lstm_macs(int in, int h) {
  return 4LL * h * (static_cast<long long>(in) + h);
}
}  // namespace

ComplexityReport analyze_complexity(const ModelConfig& cfg) {
  cfg.validate();
  ComplexityReport rep;
  const int f = cfg.bins();
  const int k = cfg.fb_positions();
  const int a = cfg.fb_features();
  const int s = cfg.sub_bands();

  auto row = [&rep](const std::string& name, long long params, long long macs) {
    rep.rows.push_back({name, params, macs});
    rep.params += params;
    rep.macs_per_frame += macs;
  };

  row("input_conv", conv_params(cfg.D, 2 * cfg.P, 3),
      static_cast<long long>(f) * cfg.D * 2 * cfg.P * 3);

  for (int i = 0; i < cfg.num_blocks(); ++i) {
    const std::string fb = "block" + std::to_string(i) + ".fb";
    long long fb_macs = 0;
    auto fb_row = [&](const std::string& nm, long long p, long long m) {
      row(nm, p, m);
      fb_macs += m;
    };
    fb_row(fb + ".conv", conv_params(cfg.E, cfg.D, cfg.I),
           static_cast<long long>(k) * cfg.E * cfg.D * cfg.I);
    fb_row(fb + ".prelu1", 1, 0);
    fb_row(fb + ".norm1", 2LL * a, 0);
    fb_row(fb + ".lstm", lstm_params(a, cfg.H), lstm_macs(a, cfg.H));
    fb_row(fb + ".lin", static_cast<long long>(a) * cfg.H + a,
           static_cast<long long>(a) * cfg.H);
    fb_row(fb + ".norm2", 2LL * a, 0);
    fb_row(fb + ".prelu2", 1, 0);
    fb_row(fb + ".deconv", static_cast<long long>(cfg.E) * cfg.D * cfg.I + cfg.D,
           static_cast<long long>(k) * cfg.E * cfg.D * cfg.I);
    rep.fb_block_macs = fb_macs;

    if (cfg.has_sub_band()) {
      const std::string sb = "block" + std::to_string(i) + ".sb";
      long long sb_macs = 0;
      auto sb_row = [&](const std::string& nm, long long p, long long m) {
        row(nm, p, m);
        sb_macs += m;
      };
      sb_row(sb + ".conv", conv_params(cfg.Ep, cfg.D, cfg.Ip),
             static_cast<long long>(s) * cfg.Ep * cfg.D * cfg.Ip);
      sb_row(sb + ".prelu1", 1, 0);
      sb_row(sb + ".norm1", 2LL * cfg.Ep, 0);
      sb_row(sb + ".lstm", lstm_params(cfg.Ep, cfg.Hp),
             static_cast<long long>(s) * lstm_macs(cfg.Ep, cfg.Hp));
      sb_row(sb + ".deconv", static_cast<long long>(cfg.Hp) * cfg.D * cfg.Ip + cfg.D,
             static_cast<long long>(s) * cfg.Hp * cfg.D * cfg.Ip);
      rep.sb_block_macs = sb_macs;
    }
  }

  row("output_deconv", static_cast<long long>(cfg.D) * 2 * 3 + 2,
      static_cast<long long>(f) * cfg.D * 2 * 3);

  rep.frames_per_second = static_cast<double>(cfg.stft.sample_rate) / cfg.stft.hs;
  rep.gmacs_per_second = static_cast<double>(rep.macs_per_frame) * rep.frames_per_second / 1e9;

  // Run-time buffers. LSTM states are the bulk; the cGLN accumulators hold a
  // running sum, sum of squares (f64) and a count per instance.
  constexpr long long kStatsBytes = 8 + 8 + 8;
  for (int i = 0; i < cfg.num_blocks(); ++i) {
    const std::string blk = "block" + std::to_string(i);
    const long long fb_state = 4LL * 2 * cfg.H;
    rep.buffer_rows.push_back({blk + ".fb.lstm_state", fb_state, true});
    rep.lstm_state_bytes += fb_state;
    rep.buffer_rows.push_back({blk + ".fb.norm_stats", 2 * kStatsBytes, true});
    if (cfg.has_sub_band()) {
      const long long sb_state = 4LL * 2 * cfg.Hp * s;
      rep.buffer_rows.push_back({blk + ".sb.lstm_state", sb_state, true});
      rep.lstm_state_bytes += sb_state;
      rep.buffer_rows.push_back({blk + ".sb.norm_stats", kStatsBytes, true});
    }
  }
  rep.buffer_rows.push_back(
      {"stft.analysis_rings", 4LL * cfg.P * cfg.stft.iws, false});
  rep.buffer_rows.push_back({"stft.ola_accumulator", 8LL * cfg.stft.ows, false});
  for (const auto& br : rep.buffer_rows) {
    if (br.model_state)
      rep.buffer_bytes += br.bytes;
    else
      rep.stft_buffer_bytes += br.bytes;
  }
  return rep;
}

std::string format_report(const ComplexityReport& rep, const ModelConfig& cfg) {
  std::ostringstream os;
  os << "layer                          params      macs/frame\n";
  char line[128];
  for (const auto& r : rep.rows) {
    std::snprintf(line, sizeof(line), "%-28s %10lld %14lld\n", r.name.c_str(), r.params,
                  r.macs_per_frame);
    os << line;
  }
  std::snprintf(line, sizeof(line), "%-28s %10lld %14lld\n", "total", rep.params,
                rep.macs_per_frame);
  os << line << "\n";
  os << "buffer                          bytes\n";
  for (const auto& r : rep.buffer_rows) {
    std::snprintf(line, sizeof(line), "%-28s %10lld%s\n", r.name.c_str(), r.bytes,
                  r.model_state ? "" : "  (transform i/o, not model state)");
    os << line;
  }
  std::snprintf(line, sizeof(line), "%-28s %10lld\n", "model state total", rep.buffer_bytes);
  os << line << "\n";

  os << "params=" << rep.params << "\n";
  os << "params_millions=" << static_cast<double>(rep.params) / 1e6 << "\n";
  os << "macs_per_frame=" << rep.macs_per_frame << "\n";
  os << "frames_per_second=" << rep.frames_per_second << "\n";
  os << "gmacs_per_second=" << rep.gmacs_per_second << "\n";
  os << "lstm_state_bytes=" << rep.lstm_state_bytes << "\n";
  os << "buffer_bytes=" << rep.buffer_bytes << "\n";
  os << "stft_buffer_bytes=" << rep.stft_buffer_bytes << "\n";
  if (cfg.has_sub_band() && rep.fb_block_macs > 0)
    os << "sb_fb_mac_ratio="
       << static_cast<double>(rep.sb_block_macs) / static_cast<double>(rep.fb_block_macs) << "\n";
  return os.str();
}

}  // namespace fsbnet
