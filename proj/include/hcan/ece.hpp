#pragma once

#include <random>
#include <vector>

#include "hcan/tensor.hpp"

namespace hcan {

// Emotional Continuation Encoding: stacked bidirectional LSTM over utterance
// features, then residual multi-head self-attention over all positions.
struct EceParams {
  // One direction of one layer. Row-vector convention: gates = x.W_ih +
  // h.W_hh + b, with gate order [input, forget, output, candidate].
  struct LstmDirection {
    Param w_ih;   // in x 4d
    Param w_hh;   // d x 4d
    Param b;      // 1 x 4d
  };
  struct LstmLayer {
    LstmDirection fwd;
    LstmDirection bwd;
  };

  std::vector<LstmLayer> lstm;
  Param w_q, w_k, w_v;   // 2d x 2d, split across heads by column blocks
  int d_u = 0;
  int layer_count = 1;
  int head_count = 8;

  void init(int feature_dim, int layers, int heads, std::mt19937_64& rng);
  std::vector<Param*> all();
};

// Stage-level pieces; features is n x d_u.
Tensor bilstm_forward(Tape& tape, Tensor features, EceParams& params,
                      bool training, double dropout_rate, std::mt19937_64& rng);
Tensor global_attention(Tape& tape, Tensor gl, EceParams& params,
                        bool training, double dropout_rate, std::mt19937_64& rng);
Tensor ece_forward(Tape& tape, Tensor features, EceParams& params,
                   bool training, double dropout_rate, std::mt19937_64& rng);

}  // namespace hcan
