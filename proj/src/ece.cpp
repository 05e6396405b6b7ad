#include "hcan/ece.hpp"

#include <cmath>

namespace hcan {

void EceParams::init(int feature_dim, int layers, int heads, std::mt19937_64& rng) {
  d_u = feature_dim;
  layer_count = layers;
  head_count = heads;
  if (layer_count < 1) throw ConfigError("ece: layer_count must be >= 1");
  if ((2 * d_u) % head_count != 0)
    throw ConfigError("ece: 2*d_u=" + std::to_string(2 * d_u) +
                      " not divisible by head_count=" + std::to_string(head_count));
  int d = d_u;
  lstm.clear();
  for (int l = 0; l < layer_count; ++l) {
    int in = l == 0 ? d : 2 * d;
    LstmLayer layer;
    for (LstmDirection* dir : {&layer.fwd, &layer.bwd}) {
      std::string prefix = "ece.lstm" + std::to_string(l) + (dir == &layer.fwd ? ".f" : ".b");
      dir->w_ih = Param(prefix + ".w_ih", {in, 4 * d});
      dir->w_hh = Param(prefix + ".w_hh", {d, 4 * d});
      dir->b = Param(prefix + ".b", {1, 4 * d});
      dir->w_ih.init_uniform(in, rng);
      dir->w_hh.init_uniform(d, rng);
      // Forget-gate bias 1, rest 0.
      for (int j = d; j < 2 * d; ++j) dir->b.value[static_cast<std::size_t>(j)] = 1.0;
    }
    lstm.push_back(std::move(layer));
  }
  w_q = Param("ece.w_q", {2 * d, 2 * d});
  w_k = Param("ece.w_k", {2 * d, 2 * d});
  w_v = Param("ece.w_v", {2 * d, 2 * d});
  w_q.init_uniform(2 * d, rng);
  w_k.init_uniform(2 * d, rng);
  w_v.init_uniform(2 * d, rng);
}

std::vector<Param*> EceParams::all() {
  std::vector<Param*> out;
  for (LstmLayer& layer : lstm)
    for (LstmDirection* dir : {&layer.fwd, &layer.bwd}) {
      out.push_back(&dir->w_ih);
      out.push_back(&dir->w_hh);
      out.push_back(&dir->b);
    }
  out.push_back(&w_q);
  out.push_back(&w_k);
  out.push_back(&w_v);
  return out;
}

namespace {

// Runs one LSTM direction over the rows of x (already reversed for the
// backward direction); returns n x d hidden states in step order.
std::vector<Tensor> lstm_direction(Tape& tape, const std::vector<Tensor>& steps,
                                   EceParams::LstmDirection& dir, int d) {
  Tensor w_ih = tape.leaf(dir.w_ih);
  Tensor w_hh = tape.leaf(dir.w_hh);
  Tensor b = tape.leaf(dir.b);
  Tensor h = tape.zeros(1, d);
  Tensor c = tape.zeros(1, d);
  std::vector<Tensor> out;
  out.reserve(steps.size());
  for (const Tensor& x : steps) {
    Tensor gates = tape.add(tape.add(tape.matmul(x, w_ih), tape.matmul(h, w_hh)), b);
    Tensor i = tape.sigmoid_(tape.slice_cols(gates, 0, d));
    Tensor f = tape.sigmoid_(tape.slice_cols(gates, d, 2 * d));
    Tensor o = tape.sigmoid_(tape.slice_cols(gates, 2 * d, 3 * d));
    Tensor g = tape.tanh_(tape.slice_cols(gates, 3 * d, 4 * d));
    c = tape.add(tape.mul(f, c), tape.mul(i, g));
    h = tape.mul(o, tape.tanh_(c));
    out.push_back(h);
  }
  return out;
}

}  // namespace

Tensor bilstm_forward(Tape& tape, Tensor features, EceParams& params,
                      bool training, double dropout_rate, std::mt19937_64& rng) {
  if (features.cols() != params.d_u)
    throw DimensionError("bilstm_forward: feature width " + std::to_string(features.cols()) +
                         " != d_u " + std::to_string(params.d_u));
  int n = features.rows();
  int d = params.d_u;
  Tensor layer_in = features;
  for (int l = 0; l < params.layer_count; ++l) {
    std::vector<Tensor> steps, steps_rev;
    for (int i = 0; i < n; ++i) steps.push_back(tape.slice_rows(layer_in, i, i + 1));
    for (int i = n - 1; i >= 0; --i) steps_rev.push_back(tape.slice_rows(layer_in, i, i + 1));

    std::vector<Tensor> h_fwd = lstm_direction(tape, steps, params.lstm[l].fwd, d);
    std::vector<Tensor> h_bwd = lstm_direction(tape, steps_rev, params.lstm[l].bwd, d);

    std::vector<Tensor> rows;
    rows.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      rows.push_back(tape.concat({h_fwd[static_cast<std::size_t>(i)],
                                  h_bwd[static_cast<std::size_t>(n - 1 - i)]}, 1));
    Tensor out = n == 1 ? rows[0] : tape.concat(rows, 0);
    if (l + 1 < params.layer_count)
      out = tape.dropout(out, dropout_rate, training, rng);
    layer_in = out;
  }
  return layer_in;
}

Tensor global_attention(Tape& tape, Tensor gl, EceParams& params,
                        bool training, double dropout_rate, std::mt19937_64& rng) {
  int width = 2 * params.d_u;
  if (gl.cols() != width)
    throw DimensionError("global_attention: width " + std::to_string(gl.cols()) +
                         " != 2*d_u " + std::to_string(width));
  int heads = params.head_count;
  int hw = width / heads;
  Tensor q = tape.matmul(gl, tape.leaf(params.w_q));
  Tensor k = tape.matmul(gl, tape.leaf(params.w_k));
  Tensor v = tape.matmul(gl, tape.leaf(params.w_v));
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hw));
  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = tape.slice_cols(q, h * hw, (h + 1) * hw);
    Tensor kh = tape.slice_cols(k, h * hw, (h + 1) * hw);
    Tensor vh = tape.slice_cols(v, h * hw, (h + 1) * hw);
    Tensor logits = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt);
    Tensor weights = tape.softmax(logits);
    head_outs.push_back(tape.matmul(weights, vh));
  }
  Tensor attn = heads == 1 ? head_outs[0] : tape.concat(head_outs, 1);
  attn = tape.dropout(attn, dropout_rate, training, rng);
  return tape.add(attn, gl);
}

Tensor ece_forward(Tape& tape, Tensor features, EceParams& params,
                   bool training, double dropout_rate, std::mt19937_64& rng) {
  Tensor gl = bilstm_forward(tape, features, params, training, dropout_rate, rng);
  return global_attention(tape, gl, params, training, dropout_rate, rng);
}

}  // namespace hcan
