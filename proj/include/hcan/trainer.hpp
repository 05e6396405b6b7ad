#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hcan/metrics.hpp"
#include "hcan/model.hpp"

namespace hcan {

struct TrainConfig {
  double learning_rate = 1e-2;
  int batch_size = 32;            // whole conversations per batch
  double dropout = 0.2;
  int lstm_layers = 1;
  int ece_heads = 8;
  int ia_heads = 4;
  double alpha = 0.2;
  double beta = 0.05;
  double epsilon = 0.1;           // FGV radius
  int epochs = 30;
  int patience = 10;
  std::uint64_t seed = 0;
  double grad_clip_norm = 5.0;
  int precision = 32;             // 32: params/moments quantized to float
  bool no_ece = false;
  bool no_eae = false;
  bool no_kl = false;
  bool no_adv = false;
  FgvNorm fgv_norm = FgvNorm::kGlobal;
  DistanceMode distance_mode = DistanceMode::kIndex;
  bool scale_ia_logits = true;

  void validate() const;
  ModelConfig model_config(int feature_dim, int num_labels) const;
  LossConfig loss_config() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;   // utterance-weighted mean L_EC over the epoch
  Metrics val;
};

// Everything a checkpoint round-trips: current params live in `model`,
// the best-val snapshot in `best_values` (manifest order of model.params()).
struct TrainerState {
  TrainConfig config;
  std::vector<std::string> label_set;
  HcanModel model;
  std::mt19937_64 rng;
  long adam_step = 0;
  int epoch = 0;
  double best_f1 = -1.0;
  int best_epoch = -1;
  int epochs_since_improvement = 0;
  std::vector<std::vector<double>> best_values;

  void apply_best();   // copy best_values into model params (no-op if none)
};

struct TrainResult {
  std::vector<EpochStats> history;
};

// Initializes a fresh state (seeded init, float quantization if configured).
TrainerState init_trainer(const Corpus& corpus, const TrainConfig& config);

// Runs epochs until config.epochs or early stopping; resumable. The model
// keeps its current (last-step) parameters; call state.apply_best() for
// inference-quality parameters.
TrainResult train(TrainerState& state, const Corpus& corpus);

// Global-norm clip then Adam (0.9/0.999, eps 1e-8).
void adam_step(std::vector<Param*>& params, double lr, long& t,
               double clip_norm, bool quantize32);
void quantize_params(std::vector<Param*>& params);

struct AblationRow {
  std::string variant;   // "full" | "no_ece" | "no_eae" | "no_kl" | "no_adv"
  std::string label;     // table label, e.g. "w/o EAE"
  std::vector<double> test_f1;
  double mean_f1 = 0.0;
  double std_f1 = 0.0;
};

TrainConfig apply_ablation(const TrainConfig& base, const std::string& variant);
std::string ablation_label(const std::string& variant);

std::vector<AblationRow> run_ablation(const Corpus& corpus, const TrainConfig& base,
                                      const std::vector<std::string>& variants,
                                      const std::vector<std::uint64_t>& seeds);

}  // namespace hcan
