#pragma once

#include <random>
#include <vector>

#include "hcan/tensor.hpp"

namespace hcan {

enum class DistanceMode { kIndex, kTurnTaking };

// Emotional Attribution Encoding: causal attention with separate
// intra-speaker and inter-speaker query subspaces, then a learnable
// Gaussian turn-distance reweighting.
struct EaeParams {
  Param w_qa, w_qe;      // 2d x 4d
  Param w_k, w_v;        // 2d x 4d
  Param mu;              // 1x1, Gaussian mean
  Param rho;             // 1x1, sigma = exp(rho) keeps sigma > 0
  int d_u = 0;
  int head_count = 4;
  DistanceMode distance_mode = DistanceMode::kIndex;
  bool scale_logits = true;   // 1/sqrt(subspace width); off for strict fidelity

  void init(int feature_dim, int heads, std::mt19937_64& rng);
  std::vector<Param*> all();
  double sigma() const;
};

struct AttributionTrace {
  struct Row {
    std::vector<double> mixed_weights;               // head-averaged, over j<i
    std::vector<std::vector<double>> head_weights;   // [head][j]
    std::vector<bool> intra;                         // speakers[j] == speakers[i]
    std::vector<double> gaussian;                    // phi(d_{i,j})
  };
  std::vector<Row> rows;   // rows[0] has empty lists
};

// Conversational distance d_{i,j}: index -> i-j; turn-taking -> number of
// speaker changes in positions (j, i].
int attribution_distance(const std::vector<int>& speakers, int i, int j, DistanceMode mode);

std::pair<Tensor, AttributionTrace> ia_attention(Tape& tape, Tensor g,
                                                 const std::vector<int>& speakers,
                                                 EaeParams& params);
Tensor gaussian_reweight(Tape& tape, Tensor vtilde, const std::vector<int>& speakers,
                         EaeParams& params, AttributionTrace* trace);
std::pair<Tensor, AttributionTrace> eae_forward(Tape& tape, Tensor g,
                                                const std::vector<int>& speakers,
                                                EaeParams& params);

}  // namespace hcan
