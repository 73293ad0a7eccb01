// Command-line front end: enhancement, complexity analysis, weight
// initialization, toy training and the built-in invariant suites.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fsbnet/complexity.hpp"
#include "fsbnet/config.hpp"
#include "fsbnet/model.hpp"
#include "fsbnet/selfcheck.hpp"
#include "fsbnet/train.hpp"
#include "fsbnet/wav.hpp"
#include "fsbnet/weights.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitInvariant = 3;

fsbnet::ModelConfig resolve_config(const std::string& config_path, const std::string& preset,
                                   int hop_ms) {
  fsbnet::ModelConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config file: " + config_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    cfg = fsbnet::config_from_json(text);
  } else {
    cfg = fsbnet::preset_config(preset.empty() ? "fsb-6ch" : preset);
  }
  if (hop_ms > 0) fsbnet::set_hop_ms(cfg, hop_ms);
  cfg.validate();
  return cfg;
}

int cmd_analyze(const std::string& config_path, const std::string& preset, int hop_ms) {
  const fsbnet::ModelConfig cfg = resolve_config(config_path, preset, hop_ms);
  const fsbnet::ComplexityReport rep = fsbnet::analyze_complexity(cfg);
  std::cout << fsbnet::format_report(rep, cfg);
  return kExitOk;
}

int cmd_init_weights(const std::string& config_path, const std::string& preset, int hop_ms,
                     unsigned long long seed, const std::string& out_path) {
  const fsbnet::ModelConfig cfg = resolve_config(config_path, preset, hop_ms);
  const fsbnet::WeightStore store = fsbnet::init_random(cfg, seed);
  fsbnet::save_weights(store, out_path);
  std::cout << "params=" << store.total_params() << "\n";
  std::cout << "path=" << out_path << "\n";
  return kExitOk;
}

int cmd_enhance(const std::string& weights_path, const std::string& in_path,
                const std::string& out_path, int chunk_ms) {
  const fsbnet::WeightStore store = fsbnet::load_weights(weights_path);
  const fsbnet::ModelConfig& cfg = store.config();
  const fsbnet::WavFile in = fsbnet::read_wav(in_path);
  if (in.sample_rate != cfg.stft.sample_rate)
    throw std::invalid_argument("sample rate mismatch: file has " +
                                std::to_string(in.sample_rate) + " Hz, model expects " +
                                std::to_string(cfg.stft.sample_rate));
  if (in.channels != cfg.P)
    throw std::invalid_argument("channel count mismatch: file has " +
                                std::to_string(in.channels) + ", model expects " +
                                std::to_string(cfg.P));

  std::vector<std::vector<float>> mics(static_cast<size_t>(cfg.P));
  for (int p = 0; p < cfg.P; ++p) mics[p] = in.channel(p);
  const long long frames = in.frames();
  const int chunk = std::max(1, chunk_ms) * cfg.stft.sample_rate / 1000;

  fsbnet::StreamEnhancer enhancer(cfg, store);
  std::vector<float> out;
  out.reserve(static_cast<size_t>(frames));
  double compute_seconds = 0.0;
  for (long long pos = 0; pos < frames; pos += chunk) {
    const long long n = std::min<long long>(chunk, frames - pos);
    std::vector<std::vector<float>> chunks(static_cast<size_t>(cfg.P));
    for (int p = 0; p < cfg.P; ++p)
      chunks[p].assign(mics[p].begin() + pos, mics[p].begin() + pos + n);
    const auto t0 = std::chrono::steady_clock::now();
    auto o = enhancer.push(chunks);
    compute_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.insert(out.end(), o.begin(), o.end());
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    auto o = enhancer.flush();
    compute_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.insert(out.end(), o.begin(), o.end());
  }

  fsbnet::WavFile result;
  result.sample_rate = in.sample_rate;
  result.channels = 1;
  result.format = in.format;
  result.samples = std::move(out);
  fsbnet::write_wav(result, out_path);

  const double audio_seconds = static_cast<double>(frames) / cfg.stft.sample_rate;
  const double rtf = compute_seconds / audio_seconds;
  const double per_frame_ms =
      enhancer.frames_processed() > 0
          ? compute_seconds * 1000.0 / static_cast<double>(enhancer.frames_processed())
          : 0.0;
  std::cout << "samples=" << result.samples.size() << "\n";
  std::cout << "frames=" << enhancer.frames_processed() << "\n";
  std::cout << "audio_seconds=" << audio_seconds << "\n";
  std::cout << "compute_seconds=" << compute_seconds << "\n";
  std::cout << "real_time_factor=" << rtf << "\n";
  std::cout << "mean_frame_ms=" << per_frame_ms << "\n";
  std::cout << "hop_budget_ms=" << 1000.0 * cfg.stft.hs / cfg.stft.sample_rate << "\n";
  return kExitOk;
}

int cmd_selfcheck(const std::string& suite) {
  const auto results = fsbnet::run_selfcheck(suite);
  bool all_pass = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    all_pass = all_pass && r.pass;
  }
  std::cout << "selfcheck=" << (all_pass ? "pass" : "fail") << "\n";
  return all_pass ? kExitOk : kExitInvariant;
}

int cmd_train_toy(int steps, unsigned long long seed, const std::string& out_path) {
  const fsbnet::ModelConfig cfg = fsbnet::toy_config();
  const fsbnet::ToyPair pair =
      fsbnet::make_toy_pair(seed, cfg.stft.sample_rate, cfg.stft.sample_rate, 5.0);  // 1 s clip
  const fsbnet::ToyResult result = fsbnet::overfit_toy(cfg, pair, steps, seed);

  std::ofstream trace(out_path);
  if (!trace) throw std::runtime_error("cannot open trace file: " + out_path);
  trace << "step,loss\n";
  for (size_t i = 0; i < result.run.loss_trace.size(); ++i)
    trace << i << "," << result.run.loss_trace[i] << "\n";

  if (result.run.diverged_at) {
    std::cout << "diverged_at=" << *result.run.diverged_at << "\n";
    return kExitInvariant;
  }
  const double initial = result.run.loss_trace.empty() ? 0.0 : result.run.loss_trace.front();
  const double final_loss = result.run.loss_trace.empty() ? 0.0 : result.run.loss_trace.back();
  std::cout << "steps=" << result.run.loss_trace.size() << "\n";
  std::cout << "initial_loss=" << initial << "\n";
  std::cout << "final_loss=" << final_loss << "\n";
  if (initial > 0.0) std::cout << "loss_ratio=" << final_loss / initial << "\n";
  std::cout << "sisdr_noisy_db=" << result.sisdr_noisy_db << "\n";
  std::cout << "sisdr_est_db=" << result.sisdr_est_db << "\n";
  std::cout << "trace=" << out_path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frame-online speech enhancement engine"};
  app.require_subcommand(1);

  std::string config_path, preset, weights_path, in_path, out_path, suite = "all";
  int hop_ms = 0, chunk_ms = 2, steps = 500;
  unsigned long long seed = 1;

  auto* analyze = app.add_subcommand("analyze", "Print parameter/MAC/buffer figures");
  analyze->add_option("--config", config_path, "JSON config file");
  analyze->add_option("--preset", preset, "One of: fsb-6ch fsb-2ch fsb-1ch fb6-6ch fb9-6ch");
  analyze->add_option("--hop-ms", hop_ms, "Override hop size in ms (1, 2, 4 or 8)");

  auto* init = app.add_subcommand("init-weights", "Write deterministically initialized weights");
  init->add_option("--config", config_path, "JSON config file");
  init->add_option("--preset", preset, "Preset name");
  init->add_option("--hop-ms", hop_ms, "Override hop size in ms");
  init->add_option("--seed", seed, "RNG seed");
  init->add_option("--out", out_path, "Output FSBW path")->required();

  auto* enhance = app.add_subcommand("enhance", "Stream a WAV file through the model");
  enhance->add_option("--weights", weights_path, "FSBW weight file")->required();
  enhance->add_option("--in", in_path, "Input WAV (channels must match config)")->required();
  enhance->add_option("--out", out_path, "Output mono WAV")->required();
  enhance->add_option("--chunk-ms", chunk_ms, "File read granularity in ms");

  auto* selfcheck = app.add_subcommand("selfcheck", "Run built-in invariant suites");
  selfcheck->add_option("--suite", suite, "stft | grad | stream | deconv | all");

  auto* train = app.add_subcommand("train-toy", "Overfit the toy model on one synthetic clip");
  train->add_option("--steps", steps, "Optimizer steps");
  train->add_option("--seed", seed, "RNG seed");
  train->add_option("--out", out_path, "Loss trace CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (app.got_subcommand(analyze)) return cmd_analyze(config_path, preset, hop_ms);
    if (app.got_subcommand(init))
      return cmd_init_weights(config_path, preset, hop_ms, seed, out_path);
    if (app.got_subcommand(enhance)) return cmd_enhance(weights_path, in_path, out_path, chunk_ms);
    if (app.got_subcommand(selfcheck)) return cmd_selfcheck(suite);
    if (app.got_subcommand(train)) return cmd_train_toy(steps, seed, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitUsage;
}
