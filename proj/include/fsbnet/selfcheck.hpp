// Built-in invariant suites, runnable from the command line.
#pragma once

#include <string>
#include <vector>

namespace fsbnet {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<CheckResult> selfcheck_stft();
std::vector<CheckResult> selfcheck_grad();
std::vector<CheckResult> selfcheck_stream();
std::vector<CheckResult> selfcheck_deconv();

// Runs one of "stft", "grad", "stream", "deconv" or "all".
std::vector<CheckResult> run_selfcheck(const std::string& suite);

}  // namespace fsbnet
