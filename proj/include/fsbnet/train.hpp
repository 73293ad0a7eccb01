// Loss, metric, optimizer and a desk-scale overfit harness.
#pragma once

#include <optional>
#include <vector>

#include "fsbnet/config.hpp"
#include "fsbnet/model.hpp"
#include "fsbnet/weights.hpp"

namespace fsbnet {

// Mean absolute error on the waveforms plus mean absolute error on the STFT
// magnitudes, equally weighted.
double wav_mag_loss(const std::vector<double>& est, const std::vector<double>& ref,
                    const StftConfig& cfg);

// Scale-invariant signal-to-distortion ratio in dB, capped at +/- kSiSdrCapDb.
inline constexpr double kSiSdrCapDb = 300.0;
double si_sdr_db(const std::vector<double>& est, const std::vector<double>& ref);

// Per-tensor first/second moment state for adaptive-moment gradient descent.
class AdamOptimizer {
 public:
  AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<TensorD*>& params, const std::vector<const TensorD*>& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<TensorD> m_, v_;
};

struct TrainRun {
  unsigned long long seed = 0;
  int steps = 0;
  double learning_rate = 0.0;
  std::vector<double> loss_trace;           // one entry per step
  std::optional<int> diverged_at;           // step index of first non-finite loss
};

struct ToyPair {
  std::vector<double> noisy;  // single microphone
  std::vector<double> clean;
};

// Sinusoid mixture target plus white noise at the given SNR.
ToyPair make_toy_pair(unsigned long long seed, int num_samples, int sample_rate, double snr_db);

// Small configuration used by the overfit harness.
ModelConfig toy_config();

struct ToyResult {
  TrainRun run;
  double sisdr_noisy_db = 0.0;  // mixture vs clean
  double sisdr_est_db = 0.0;    // estimate vs clean after training
  WeightStore final_weights;
};

// Overfits the model on one synthetic pair; differentiates the whole pipeline
// (network, inverse transform, loss) per step.
ToyResult overfit_toy(const ModelConfig& cfg, const ToyPair& pair, int steps,
                      unsigned long long seed);

// Records the loss for given weights on a pair without updating; used to
// evaluate the trained model and by tests.
double toy_eval_loss(const ModelConfig& cfg, const WeightStore& store, const ToyPair& pair);

// Runs the estimate of the pair's noisy input through the offline pipeline.
std::vector<double> toy_estimate(const ModelConfig& cfg, const WeightStore& store,
                                 const ToyPair& pair);

}  // namespace fsbnet
