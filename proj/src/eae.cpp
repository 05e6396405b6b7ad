#include "hcan/eae.hpp"

#include <cmath>
#include <map>

namespace hcan {

void EaeParams::init(int feature_dim, int heads, std::mt19937_64& rng) {
  d_u = feature_dim;
  head_count = heads;
  if ((4 * d_u) % head_count != 0)
    throw ConfigError("eae: 4*d_u=" + std::to_string(4 * d_u) +
                      " not divisible by head_count=" + std::to_string(head_count));
  int in = 2 * d_u, out = 4 * d_u;
  w_qa = Param("eae.w_qa", {in, out});
  w_qe = Param("eae.w_qe", {in, out});
  w_k = Param("eae.w_k", {in, out});
  w_v = Param("eae.w_v", {in, out});
  for (Param* p : {&w_qa, &w_qe, &w_k, &w_v}) p->init_uniform(in, rng);
  // mu=1, sigma=1 (rho=0): the nearest turn is the attribution mode at start.
  mu = Param("eae.mu", {1, 1});
  mu.value[0] = 1.0;
  rho = Param("eae.rho", {1, 1});
  rho.value[0] = 0.0;
}

std::vector<Param*> EaeParams::all() { return {&w_qa, &w_qe, &w_k, &w_v, &mu, &rho}; }

double EaeParams::sigma() const { return std::exp(rho.value[0]); }

int attribution_distance(const std::vector<int>& speakers, int i, int j, DistanceMode mode) {
  if (mode == DistanceMode::kIndex) return i - j;
  int changes = 0;
  for (int t = j + 1; t <= i; ++t)
    if (speakers[static_cast<std::size_t>(t)] != speakers[static_cast<std::size_t>(t - 1)])
      ++changes;
  return changes;
}

std::pair<Tensor, AttributionTrace> ia_attention(Tape& tape, Tensor g,
                                                 const std::vector<int>& speakers,
                                                 EaeParams& params) {
  int n = g.rows();
  if (static_cast<int>(speakers.size()) != n)
    throw DimensionError("ia_attention: " + std::to_string(speakers.size()) +
                         " speakers for " + std::to_string(n) + " utterances");
  if (g.cols() != 2 * params.d_u)
    throw DimensionError("ia_attention: width " + std::to_string(g.cols()) +
                         " != 2*d_u " + std::to_string(2 * params.d_u));
  int heads = params.head_count;
  int width = 4 * params.d_u;
  int hw = width / heads;
  double logit_scale = params.scale_logits ? 1.0 / std::sqrt(static_cast<double>(hw)) : 1.0;

  Tensor qa = tape.matmul(g, tape.leaf(params.w_qa));
  Tensor qe = tape.matmul(g, tape.leaf(params.w_qe));
  Tensor k = tape.matmul(g, tape.leaf(params.w_k));
  Tensor v = tape.matmul(g, tape.leaf(params.w_v));

  AttributionTrace trace;
  trace.rows.resize(static_cast<std::size_t>(n));
  for (int i = 1; i < n; ++i) {
    auto& row = trace.rows[static_cast<std::size_t>(i)];
    for (int j = 0; j < i; ++j) row.intra.push_back(speakers[j] == speakers[i]);
    row.head_weights.resize(static_cast<std::size_t>(heads));
    row.mixed_weights.assign(static_cast<std::size_t>(i), 0.0);
  }

  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(n));
  rows.push_back(tape.zeros(1, width));   // empty causal set at i=0
  for (int i = 1; i < n; ++i) {
    auto& trow = trace.rows[static_cast<std::size_t>(i)];
    // delta mask over j<i, shared by all heads.
    std::vector<double> mask_same(static_cast<std::size_t>(i)), mask_diff(static_cast<std::size_t>(i));
    for (int j = 0; j < i; ++j) {
      bool same = speakers[j] == speakers[i];
      mask_same[static_cast<std::size_t>(j)] = same ? 1.0 : 0.0;
      mask_diff[static_cast<std::size_t>(j)] = same ? 0.0 : 1.0;
    }
    Tensor m_same = tape.constant({1, i}, mask_same);
    Tensor m_diff = tape.constant({1, i}, mask_diff);

    std::vector<Tensor> head_outs;
    head_outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Tensor qa_i = tape.slice_cols(tape.slice_rows(qa, i, i + 1), h * hw, (h + 1) * hw);
      Tensor qe_i = tape.slice_cols(tape.slice_rows(qe, i, i + 1), h * hw, (h + 1) * hw);
      Tensor k_h = tape.slice_cols(tape.slice_rows(k, 0, i), h * hw, (h + 1) * hw);
      Tensor v_h = tape.slice_cols(tape.slice_rows(v, 0, i), h * hw, (h + 1) * hw);
      Tensor logits_a = tape.matmul(qa_i, tape.transpose(k_h));
      Tensor logits_e = tape.matmul(qe_i, tape.transpose(k_h));
      // One shared normalizer: the mixed logits go through a single softmax.
      Tensor mixed = tape.add(tape.mul(m_same, logits_a), tape.mul(m_diff, logits_e));
      Tensor weights = tape.softmax(tape.scale(mixed, logit_scale));
      head_outs.push_back(tape.matmul(weights, v_h));

      const auto& wv = weights.values();
      trow.head_weights[static_cast<std::size_t>(h)] = wv;
      for (int j = 0; j < i; ++j)
        trow.mixed_weights[static_cast<std::size_t>(j)] +=
            wv[static_cast<std::size_t>(j)] / static_cast<double>(heads);
    }
    rows.push_back(heads == 1 ? head_outs[0] : tape.concat(head_outs, 1));
  }
  Tensor vtilde = n == 1 ? rows[0] : tape.concat(rows, 0);
  return {vtilde, std::move(trace)};
}

Tensor gaussian_reweight(Tape& tape, Tensor vtilde, const std::vector<int>& speakers,
                         EaeParams& params, AttributionTrace* trace) {
  int n = vtilde.rows();
  int width = vtilde.cols();
  if (static_cast<int>(speakers.size()) != n)
    throw DimensionError("gaussian_reweight: speakers length mismatch");
  Tensor mu = tape.leaf(params.mu);
  Tensor rho = tape.leaf(params.rho);
  // phi(d) = exp(-0.5*(d-mu)^2*exp(-2rho) - rho) / sqrt(2pi), sigma = exp(rho).
  std::map<int, Tensor> phi_cache;
  auto phi = [&](int d) -> Tensor {
    auto it = phi_cache.find(d);
    if (it != phi_cache.end()) return it->second;
    Tensor diff = tape.add_const(tape.scale(mu, -1.0), static_cast<double>(d));
    Tensor quad = tape.scale(tape.mul(tape.mul(diff, diff), tape.exp_(tape.scale(rho, -2.0))), -0.5);
    Tensor t = tape.scale(tape.exp_(tape.sub(quad, rho)), 1.0 / std::sqrt(2.0 * M_PI));
    phi_cache.emplace(d, t);
    return t;
  };

  if (trace && trace->rows.size() != static_cast<std::size_t>(n))
    trace->rows.resize(static_cast<std::size_t>(n));

  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(n));
  rows.push_back(tape.zeros(1, width));   // empty sum at i=0
  for (int i = 1; i < n; ++i) {
    std::vector<Tensor> phis;
    phis.reserve(static_cast<std::size_t>(i));
    for (int j = 0; j < i; ++j) {
      Tensor p = phi(attribution_distance(speakers, i, j, params.distance_mode));
      phis.push_back(p);
      if (trace) trace->rows[static_cast<std::size_t>(i)].gaussian.push_back(p.scalar());
    }
    Tensor weight_row = i == 1 ? phis[0] : tape.concat(phis, 1);
    rows.push_back(tape.matmul(weight_row, tape.slice_rows(vtilde, 0, i)));
  }
  return n == 1 ? rows[0] : tape.concat(rows, 0);
}

std::pair<Tensor, AttributionTrace> eae_forward(Tape& tape, Tensor g,
                                                const std::vector<int>& speakers,
                                                EaeParams& params) {
  auto [vtilde, trace] = ia_attention(tape, g, speakers, params);
  Tensor vhat = gaussian_reweight(tape, vtilde, speakers, params, &trace);
  return {vhat, std::move(trace)};
}

}  // namespace hcan
