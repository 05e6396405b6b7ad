#pragma once

#include <random>
#include <vector>

#include "hcan/dataio.hpp"
#include "hcan/eae.hpp"
#include "hcan/ece.hpp"
#include "hcan/loss.hpp"

namespace hcan {

struct ModelConfig {
  int feature_dim = 0;
  int num_labels = 0;
  int lstm_layers = 1;
  int ece_heads = 8;
  int ia_heads = 4;
  double dropout = 0.2;
  bool no_ece = false;   // ECE replaced by a learned linear map d_u -> 2d_u
  bool no_eae = false;   // V_hat forced to zero
  DistanceMode distance_mode = DistanceMode::kIndex;
  bool scale_ia_logits = true;
};

class HcanModel {
 public:
  ModelConfig cfg;
  EceParams ece;
  EaeParams eae;
  HeadParams heads;
  Param no_ece_proj;   // d_u x 2d_u, only leased when cfg.no_ece

  void init(const ModelConfig& config, std::uint64_t seed);
  std::vector<Param*> params();
  void zero_grad();

  struct ForwardResult {
    Tensor g;
    Tensor vhat;   // invalid when cfg.no_eae
    EmotionDistributions dist;
    AttributionTrace trace;
  };
  ForwardResult forward(Tape& tape, Tensor features, const std::vector<int>& speakers,
                        bool training, std::mt19937_64& rng);

  // Inference pass over one conversation; returns argmax labels and y_hat rows.
  struct Prediction {
    std::vector<int> labels;
    std::vector<std::vector<double>> y_hat;
    std::vector<std::vector<double>> d_src;
    std::vector<std::vector<double>> d_tmp;
    AttributionTrace trace;
  };
  Prediction predict(const Conversation& conv);
};

struct ConvLoss {
  double l_cross = 0.0;
  double l_kl = 0.0;
  double l_adv = 0.0;
  double l_ec = 0.0;
  int utterances = 0;
};

struct ConvLossOptions {
  LossConfig loss;
  bool training = false;
  // 0 disables gradient accumulation; otherwise param.grad += scale * dL/dp.
  double grad_scale = 0.0;
  // When set, the FGV noise is frozen to this vector instead of being
  // recomputed (used by the finite-difference harness).
  const std::vector<double>* fixed_noise = nullptr;
};

// Full per-conversation loss: clean pass (CE + KL), FGV noise from the clean
// CE gradient w.r.t. input features, then a second pass on perturbed
// features with the noise treated as a constant.
ConvLoss conversation_loss(HcanModel& model, const Conversation& conv,
                           const ConvLossOptions& opts, std::mt19937_64& rng);

std::vector<double> conversation_features(const Conversation& conv);

}  // namespace hcan
