// Closed-form accounting of parameters, multiply-accumulates per frame and
// per second, and run-time state-buffer bytes for a configuration.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fsbnet/config.hpp"

namespace fsbnet {

struct ComplexityRow {
  std::string name;
  long long params = 0;
  long long macs_per_frame = 0;
};

struct BufferRow {
  std::string name;
  long long bytes = 0;
  bool model_state = true;  // false for the STFT ring/overlap-add buffers
};

struct ComplexityReport {
  std::vector<ComplexityRow> rows;
  std::vector<BufferRow> buffer_rows;
  long long params = 0;
  long long macs_per_frame = 0;
  double frames_per_second = 0.0;
  double gmacs_per_second = 0.0;
  long long lstm_state_bytes = 0;    // hidden + cell vectors only
  long long buffer_bytes = 0;        // model state: LSTM states + norm accumulators
  long long stft_buffer_bytes = 0;   // analysis rings + overlap-add accumulator

  // Per-frame MAC totals of the two block kinds, for their ratio.
  long long fb_block_macs = 0;
  long long sb_block_macs = 0;
};

ComplexityReport analyze_complexity(const ModelConfig& cfg);

// Human-readable table plus line-oriented key=value pairs.
std::string format_report(const ComplexityReport& rep, const ModelConfig& cfg);

}  // namespace fsbnet
