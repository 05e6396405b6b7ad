#pragma once

#include <random>
#include <vector>

#include "hcan/tensor.hpp"

namespace hcan {

enum class FgvNorm { kGlobal, kPerUtterance };

// Recognition/prediction heads. W_D is shared between the recognized and
// predicted distributions by construction (one Param).
struct HeadParams {
  Param lambda_theta;   // 4d x 2d, emotional state generation map
  Param w_d;            // 2d x |E|
  Param w_o;            // |E| x |E|
  Param b_o;            // 1 x |E|
  int d_u = 0;
  int num_labels = 0;

  void init(int feature_dim, int labels, std::mt19937_64& rng);
  std::vector<Param*> all();
};

struct EmotionDistributions {
  Tensor d_src;   // n x |E|
  Tensor d_tmp;   // n x |E|
  Tensor y_hat;   // n x |E|
};

struct LossConfig {
  double alpha = 0.2;
  double beta = 0.05;
  double epsilon = 0.1;
  FgvNorm fgv_norm = FgvNorm::kGlobal;
  bool ablate_kl = false;
  bool ablate_adv = false;
  bool ablate_eae = false;
};

EmotionDistributions heads_forward(Tape& tape, Tensor vhat, Tensor g, HeadParams& params);

// Mean of -log(y_hat[i, labels[i]]) over rows.
Tensor cross_entropy(Tape& tape, Tensor y_hat, const std::vector<int>& labels);

// Mean over rows of KL(d_tmp || d_src); gradients flow into both sides.
Tensor kl_loss(Tape& tape, Tensor d_tmp, Tensor d_src);

// v_noise = eps * g / ||g||; zero when ||g|| < 1e-12. Global mode normalizes
// over the whole conversation gradient, per-utterance mode row by row.
std::vector<double> fgv_perturbation(const std::vector<double>& grad, int rows, int cols,
                                     double epsilon, FgvNorm mode);

// L_EC = L_cross + alpha*L_KL + beta*L_adv; ablated terms contribute 0.
double total_loss(double l_cross, double l_kl, double l_adv, const LossConfig& config);

}  // namespace hcan
