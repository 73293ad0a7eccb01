#include "fsbnet/train.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "fsbnet/autodiff.hpp"

namespace fsbnet {

double wav_mag_loss(const std::vector<double>& est, const std::vector<double>& ref,
                    const StftConfig& cfg) {
  if (est.size() != ref.size()) throw std::invalid_argument("wav_mag_loss: length mismatch");
  double wav = 0.0;
  for (size_t i = 0; i < est.size(); ++i) wav += std::abs(est[i] - ref[i]);
  wav /= static_cast<double>(est.size());

  const TensorD se = offline_stft(est, cfg);
  const TensorD sr = offline_stft(ref, cfg);
  double mag = 0.0;
  const int t_len = se.dim(1), bins = se.dim(2);
  for (int t = 0; t < t_len; ++t)
    for (int f = 0; f < bins; ++f)
      mag += std::abs(std::hypot(se(0, t, f), se(1, t, f)) - std::hypot(sr(0, t, f), sr(1, t, f)));
  mag /= static_cast<double>(t_len) * bins;
  return wav + mag;
}

double si_sdr_db(const std::vector<double>& est, const std::vector<double>& ref) {
  if (est.size() != ref.size()) throw std::invalid_argument("si_sdr: length mismatch");
  double ref_energy = 0.0, inner = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    ref_energy += ref[i] * ref[i];
    inner += est[i] * ref[i];
  }
  if (ref_energy == 0.0) throw std::invalid_argument("si_sdr: reference is all zeros");
  const double alpha = inner / ref_energy;
  double sig = 0.0, dist = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    const double s = alpha * ref[i];
    sig += s * s;
    const double d = s - est[i];
    dist += d * d;
  }
  if (dist == 0.0) return kSiSdrCapDb;
  if (sig == 0.0) return -kSiSdrCapDb;
  const double v = 10.0 * std::log10(sig / dist);
  return std::min(kSiSdrCapDb, std::max(-kSiSdrCapDb, v));
}

void AdamOptimizer::step(std::vector<TensorD*>& params, const std::vector<const TensorD*>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam: param/grad count mismatch");
  if (m_.empty()) {
    for (const TensorD* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    TensorD& p = *params[i];
    const TensorD& g = *grads[i];
    for (long long j = 0; j < p.size(); ++j) {
      const double gj = g.data()[j];
      m_[i].data()[j] = beta1_ * m_[i].data()[j] + (1.0 - beta1_) * gj;
      v_[i].data()[j] = beta2_ * v_[i].data()[j] + (1.0 - beta2_) * gj * gj;
      const double mh = m_[i].data()[j] / bc1;
      const double vh = v_[i].data()[j] / bc2;
      p.data()[j] -= lr_ * mh / (std::sqrt(vh) + eps_);
    }
  }
}

ToyPair make_toy_pair(unsigned long long seed, int num_samples, int sample_rate, double snr_db) {
  std::mt19937_64 rng(seed);
  auto unit = [&rng]() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

  ToyPair pair;
  pair.clean.resize(static_cast<size_t>(num_samples));
  const int tones = 3;
  for (int k = 0; k < tones; ++k) {
    const double freq = 200.0 + unit() * 2000.0;
    const double phase = unit() * 2.0 * std::numbers::pi;
    const double amp = 0.25 / tones + unit() * 0.5 / tones;
    for (int n = 0; n < num_samples; ++n)
      pair.clean[n] += amp * std::sin(2.0 * std::numbers::pi * freq * n / sample_rate + phase);
  }

  double sig_energy = 0.0;
  for (double v : pair.clean) sig_energy += v * v;
  std::vector<double> noise(static_cast<size_t>(num_samples));
  double noise_energy = 0.0;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& v : noise) {
    v = gauss(rng);
    noise_energy += v * v;
  }
  const double target_noise = sig_energy / std::pow(10.0, snr_db / 10.0);
  const double scale = std::sqrt(target_noise / noise_energy);
  pair.noisy.resize(static_cast<size_t>(num_samples));
  for (int n = 0; n < num_samples; ++n) pair.noisy[n] = pair.clean[n] + scale * noise[n];
  return pair;
}

ModelConfig toy_config() {
  ModelConfig c;
  c.variant = Variant::FSB;
  c.B = 1;
  c.D = 8;
  c.E = 4;
  c.I = 8;
  c.J = 4;
  c.H = 32;
  c.Ep = 8;
  c.Ip = 5;
  c.Jp = 5;
  c.Hp = 8;
  c.P = 1;
  c.validate();
  return c;
}

namespace {

// Builds the loss graph for one step: weights and the mixture spectra go on
// the tape, the estimate is re-synthesized and scored against the reference.
struct StepGraph {
  ad::Tape tape;
  int loss = -1;
  std::vector<int> weight_vars;
};

void collect_weight_vars(const ModelVars& vars, std::vector<int>& out) {
  out.push_back(vars.in_w);
  out.push_back(vars.in_b);
  for (const auto& blk : vars.blocks) {
    const auto& fb = blk.fb;
    for (int id : {fb.conv_w, fb.conv_b, fb.prelu1, fb.norm1_g, fb.norm1_b, fb.lstm.wi,
                   fb.lstm.wh, fb.lstm.bi, fb.lstm.bh, fb.lin_w, fb.lin_b, fb.norm2_g,
                   fb.norm2_b, fb.prelu2, fb.deconv_w, fb.deconv_b})
      out.push_back(id);
    if (blk.sb) {
      const auto& sb = *blk.sb;
      for (int id : {sb.conv_w, sb.conv_b, sb.prelu1, sb.norm1_g, sb.norm1_b, sb.lstm.wi,
                     sb.lstm.wh, sb.lstm.bi, sb.lstm.bh, sb.deconv_w, sb.deconv_b})
        out.push_back(id);
    }
  }
  out.push_back(vars.out_w);
  out.push_back(vars.out_b);
}

StepGraph build_step(const ModelConfig& cfg, ModelWeights<double>& w, const TensorD& mix_ri,
                     const TensorD& ref_wave, const TensorD& ref_mag) {
  StepGraph g;
  ModelVars vars = push_weights(g.tape, cfg, w);
  collect_weight_vars(vars, g.weight_vars);
  const int x = g.tape.input(mix_ri);
  const int est_ri = forward_on_tape(g.tape, cfg, vars, x);
  const int est_wave = ad::istft(g.tape, est_ri, cfg.stft, ref_wave.size());
  const int ref_wave_var = g.tape.input(ref_wave);
  const int wav_term = ad::l1_mean(g.tape, est_wave, ref_wave_var);
  const int est_mag = ad::magnitude(g.tape, ad::stft(g.tape, est_wave, cfg.stft));
  const int ref_mag_var = g.tape.input(ref_mag);
  const int mag_term = ad::l1_mean(g.tape, est_mag, ref_mag_var);
  g.loss = ad::add(g.tape, wav_term, mag_term);
  return g;
}

TensorD ref_magnitudes(const std::vector<double>& ref, const StftConfig& cfg) {
  const TensorD sr = offline_stft(ref, cfg);
  TensorD mag({sr.dim(1), sr.dim(2)});
  for (int t = 0; t < sr.dim(1); ++t)
    for (int f = 0; f < sr.dim(2); ++f) mag(t, f) = std::hypot(sr(0, t, f), sr(1, t, f));
  return mag;
}

WeightStore weights_to_store(const ModelConfig& cfg, ModelWeights<double>& w) {
  std::vector<Tensor> tensors;
  for_each_tensor<double>(w, [&](TensorD& t) { tensors.push_back(t.cast<float>()); });
  return WeightStore(cfg, std::move(tensors));
}

}  // namespace

ToyResult overfit_toy(const ModelConfig& cfg, const ToyPair& pair, int steps,
                      unsigned long long seed) {
  cfg.validate();
  if (cfg.P != 1) throw std::invalid_argument("overfit_toy: expects a single microphone");
  if (pair.noisy.size() != pair.clean.size())
    throw std::invalid_argument("overfit_toy: pair length mismatch");

  ModelWeights<double> w = bind_weights<double>(init_random(cfg, seed));
  const TensorD mix_ri = offline_stft(pair.noisy, cfg.stft);
  const TensorD ref_wave = TensorD::vec(std::vector<double>(pair.clean));
  const TensorD ref_mag = ref_magnitudes(pair.clean, cfg.stft);

  ToyResult result;
  result.run.seed = seed;
  result.run.steps = steps;
  result.run.learning_rate = 1e-3;
  result.sisdr_noisy_db = si_sdr_db(pair.noisy, pair.clean);

  AdamOptimizer opt(result.run.learning_rate);
  for (int step = 0; step < steps; ++step) {
    StepGraph g = build_step(cfg, w, mix_ri, ref_wave, ref_mag);
    const double loss = g.tape.val(g.loss)(0);
    result.run.loss_trace.push_back(loss);
    if (!std::isfinite(loss)) {
      result.run.diverged_at = step;
      break;
    }
    g.tape.backward(g.loss);

    std::vector<TensorD*> params;
    std::vector<const TensorD*> grads;
    for_each_tensor<double>(w, [&](TensorD& t) { params.push_back(&t); });
    grads.reserve(g.weight_vars.size());
    for (int id : g.weight_vars) grads.push_back(&g.tape.grad(id));
    opt.step(params, grads);
  }

  result.final_weights = weights_to_store(cfg, w);
  const std::vector<double> est = toy_estimate(cfg, result.final_weights, pair);
  result.sisdr_est_db = si_sdr_db(est, pair.clean);
  return result;
}

std::vector<double> toy_estimate(const ModelConfig& cfg, const WeightStore& store,
                                 const ToyPair& pair) {
  ModelWeights<double> w = bind_weights<double>(store);
  const TensorD mix_ri = offline_stft(pair.noisy, cfg.stft);
  const TensorD est_ri = forward_offline(cfg, w, mix_ri);
  return offline_istft(est_ri, cfg.stft, static_cast<long long>(pair.noisy.size()));
}

double toy_eval_loss(const ModelConfig& cfg, const WeightStore& store, const ToyPair& pair) {
  return wav_mag_loss(toy_estimate(cfg, store, pair), pair.clean, cfg.stft);
}

}  // namespace fsbnet
