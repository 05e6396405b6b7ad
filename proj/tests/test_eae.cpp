#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "hcan/eae.hpp"

using namespace hcan;

namespace {

double uniform(std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = uniform(rng);
  return v;
}

EaeParams make_params(int d_u, int heads, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  EaeParams p;
  p.init(d_u, heads, rng);
  return p;
}

// Standard causal attention oracle (single query map q), per head, with the
// same logit scaling as the implementation.
std::vector<double> causal_attention_oracle(const std::vector<double>& g, int n, int d_u,
                                            const EaeParams& p) {
  int in = 2 * d_u, width = 4 * d_u, heads = p.head_count, hw = width / heads;
  auto proj = [&](const Param& w, int i, int j) {
    double s = 0.0;
    for (int k = 0; k < in; ++k)
      s += g[static_cast<std::size_t>(i * in + k)] * w.value[static_cast<std::size_t>(k * width + j)];
    return s;
  };
  std::vector<double> out(static_cast<std::size_t>(n * width), 0.0);
  for (int i = 1; i < n; ++i)
    for (int h = 0; h < heads; ++h) {
      std::vector<double> logits(static_cast<std::size_t>(i), 0.0);
      for (int j = 0; j < i; ++j) {
        double s = 0.0;
        for (int k = 0; k < hw; ++k)
          s += proj(p.w_qa, i, h * hw + k) * proj(p.w_k, j, h * hw + k);
        logits[static_cast<std::size_t>(j)] =
            p.scale_logits ? s / std::sqrt(static_cast<double>(hw)) : s;
      }
      double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double& l : logits) { l = std::exp(l - mx); z += l; }
      for (int j = 0; j < i; ++j)
        for (int k = 0; k < hw; ++k)
          out[static_cast<std::size_t>(i * width + h * hw + k)] +=
              logits[static_cast<std::size_t>(j)] / z * proj(p.w_v, j, h * hw + k);
    }
  return out;
}

}  // namespace

TEST_CASE("attribution distance modes") {
  std::vector<int> speakers{0, 1, 1, 0, 1};
  CHECK(attribution_distance(speakers, 4, 1, DistanceMode::kIndex) == 3);
  CHECK(attribution_distance(speakers, 3, 2, DistanceMode::kIndex) == 1);
  // Turn-taking counts speaker changes in (j, i].
  CHECK(attribution_distance(speakers, 4, 1, DistanceMode::kTurnTaking) == 2);
  CHECK(attribution_distance(speakers, 2, 1, DistanceMode::kTurnTaking) == 0);
  CHECK(attribution_distance(speakers, 4, 0, DistanceMode::kTurnTaking) == 3);
}

TEST_CASE("n=1 rows are zero") {
  EaeParams p = make_params(3, 2, 1);
  Tape t;
  std::mt19937_64 rng(0);
  Tensor g = t.constant({1, 6}, random_values(6, rng));
  auto [vhat, trace] = eae_forward(t, g, {0}, p);
  CHECK(vhat.shape() == std::vector<int>{1, 12});
  for (double v : vhat.values()) CHECK(v == 0.0);
  CHECK(trace.rows[0].mixed_weights.empty());
  CHECK(trace.rows[0].gaussian.empty());
}

TEST_CASE("n=2 weight on the single predecessor is 1") {
  EaeParams p = make_params(3, 2, 2);
  Tape t;
  std::mt19937_64 rng(3);
  std::vector<double> g = random_values(12, rng);
  Tensor gt = t.constant({2, 6}, g);
  auto [vtilde, trace] = ia_attention(t, gt, {0, 1}, p);
  CHECK(trace.rows[1].mixed_weights.size() == 1);
  CHECK(trace.rows[1].mixed_weights[0] == doctest::Approx(1.0).epsilon(1e-12));
  // v~_2 equals the projected value of position 0.
  Tensor v = t.matmul(gt, t.leaf(p.w_v));
  for (int k = 0; k < 12; ++k)
    CHECK(vtilde.values()[static_cast<std::size_t>(12 + k)] ==
          doctest::Approx(v.values()[static_cast<std::size_t>(k)]).epsilon(1e-12));
}

TEST_CASE("W_Qa == W_Qe reduces to standard causal attention") {
  const int d = 4, n = 6;
  EaeParams p = make_params(d, 4, 4);
  p.w_qe.value = p.w_qa.value;
  std::mt19937_64 rng(5);
  std::vector<double> g = random_values(static_cast<std::size_t>(n * 2 * d), rng);
  std::vector<int> speakers{0, 1, 0, 0, 1, 1};
  Tape t;
  auto [vtilde, trace] = ia_attention(t, t.constant({n, 2 * d}, g), speakers, p);
  std::vector<double> oracle = causal_attention_oracle(g, n, d, p);
  for (std::size_t i = 0; i < oracle.size(); ++i)
    CHECK(std::abs(vtilde.values()[i] - oracle[i]) < 1e-10);
}

TEST_CASE("intra flags match speaker equality") {
  EaeParams p = make_params(3, 2, 6);
  std::vector<int> speakers{2, 0, 2, 1, 0};
  Tape t;
  std::mt19937_64 rng(0);
  auto [vtilde, trace] = ia_attention(t, t.constant({5, 6}, random_values(30, rng)), speakers, p);
  for (int i = 1; i < 5; ++i)
    for (int j = 0; j < i; ++j)
      CHECK(trace.rows[static_cast<std::size_t>(i)].intra[static_cast<std::size_t>(j)] ==
            (speakers[static_cast<std::size_t>(j)] == speakers[static_cast<std::size_t>(i)]));
}

TEST_CASE("mixed weights sum to 1 for every i >= 2 and every head") {
  EaeParams p = make_params(4, 4, 7);
  std::vector<int> speakers{0, 1, 1, 0, 1, 0, 0};
  Tape t;
  std::mt19937_64 rng(8);
  auto [vtilde, trace] = ia_attention(t, t.constant({7, 8}, random_values(56, rng)), speakers, p);
  for (int i = 1; i < 7; ++i) {
    const auto& row = trace.rows[static_cast<std::size_t>(i)];
    double mixed_sum = 0.0;
    for (double w : row.mixed_weights) {
      CHECK(w > 0.0);
      mixed_sum += w;
    }
    CHECK(std::abs(mixed_sum - 1.0) < 1e-9);
    for (const auto& hw : row.head_weights) {
      double s = 0.0;
      for (double w : hw) s += w;
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("causal cone: rows before a perturbation are bit-identical") {
  const int d = 4, n = 7, k = 3;
  EaeParams p = make_params(d, 4, 9);
  std::mt19937_64 rng(10);
  std::vector<double> g = random_values(static_cast<std::size_t>(n * 2 * d), rng);
  std::vector<int> speakers{0, 1, 0, 1, 1, 0, 1};

  Tape t1;
  auto [vhat1, tr1] = eae_forward(t1, t1.constant({n, 2 * d}, g), speakers, p);
  std::vector<double> perturbed = g;
  for (int c = 0; c < 2 * d; ++c) perturbed[static_cast<std::size_t>(k * 2 * d + c)] += 0.37;
  Tape t2;
  auto [vhat2, tr2] = eae_forward(t2, t2.constant({n, 2 * d}, perturbed), speakers, p);

  int width = 4 * d;
  for (int i = 0; i < k; ++i)
    for (int c = 0; c < width; ++c)
      CHECK(vhat1.values()[static_cast<std::size_t>(i * width + c)] ==
            vhat2.values()[static_cast<std::size_t>(i * width + c)]);
  double diff_after = 0.0;
  for (int i = k; i < n; ++i)
    for (int c = 0; c < width; ++c)
      diff_after = std::max(diff_after,
                            std::abs(vhat1.values()[static_cast<std::size_t>(i * width + c)] -
                                     vhat2.values()[static_cast<std::size_t>(i * width + c)]));
  CHECK(diff_after > 1e-6);
}

TEST_CASE("speaker permutation degeneracy when W_Qa == W_Qe") {
  EaeParams p = make_params(3, 2, 11);
  p.w_qe.value = p.w_qa.value;
  std::mt19937_64 rng(12);
  std::vector<double> g = random_values(36, rng);
  std::vector<int> speakers{0, 1, 0, 1, 0, 1};
  std::vector<int> relabeled{1, 0, 1, 0, 1, 0};
  Tape t;
  auto [v1, tr1] = ia_attention(t, t.constant({6, 6}, g), speakers, p);
  auto [v2, tr2] = ia_attention(t, t.constant({6, 6}, g), relabeled, p);
  for (int i = 1; i < 6; ++i)
    CHECK(tr1.rows[static_cast<std::size_t>(i)].mixed_weights ==
          tr2.rows[static_cast<std::size_t>(i)].mixed_weights);
}

TEST_CASE("gaussian phi(1|mu=1,sigma=1) = 1/sqrt(2pi)") {
  EaeParams p = make_params(3, 2, 13);
  CHECK(p.mu.value[0] == 1.0);
  CHECK(p.sigma() == 1.0);
  Tape t;
  std::vector<double> vt(24, 0.0);
  for (int k = 0; k < 12; ++k) vt[static_cast<std::size_t>(k)] = 0.5 + 0.1 * k;
  Tensor vtilde = t.constant({2, 12}, vt);
  Tensor vhat = gaussian_reweight(t, vtilde, {0, 1}, p, nullptr);
  double phi1 = 1.0 / std::sqrt(2.0 * M_PI);
  for (int k = 0; k < 12; ++k)
    CHECK(std::abs(vhat.values()[static_cast<std::size_t>(12 + k)] -
                   phi1 * vt[static_cast<std::size_t>(k)]) < 1e-9);
}

TEST_CASE("gaussian reweight linearity oracle") {
  const int n = 6, width = 8;
  EaeParams p = make_params(2, 2, 14);
  p.mu.value[0] = 1.7;
  p.rho.value[0] = 0.3;
  std::mt19937_64 rng(15);
  std::vector<double> common = random_values(width, rng);
  std::vector<double> vt;
  for (int i = 0; i < n; ++i) vt.insert(vt.end(), common.begin(), common.end());
  std::vector<int> speakers{0, 1, 1, 0, 1, 0};
  p.distance_mode = DistanceMode::kTurnTaking;

  Tape t;
  Tensor vhat = gaussian_reweight(t, t.constant({n, width}, vt), speakers, p, nullptr);

  double sigma = std::exp(0.3);
  auto phi = [&](int d) {
    double z = (d - 1.7) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI));
  };
  for (int i = 0; i < n; ++i) {
    double scale = 0.0;
    for (int j = 0; j < i; ++j)
      scale += phi(attribution_distance(speakers, i, j, p.distance_mode));
    for (int k = 0; k < width; ++k)
      CHECK(vhat.values()[static_cast<std::size_t>(i * width + k)] ==
            doctest::Approx(scale * common[static_cast<std::size_t>(k)]).epsilon(1e-10));
  }
}

TEST_CASE("sigma stays positive by construction") {
  EaeParams p = make_params(2, 2, 16);
  for (double rho : {-30.0, -1.0, 0.0, 2.5, 30.0}) {
    p.rho.value[0] = rho;
    CHECK(p.sigma() > 0.0);
  }
}

TEST_CASE("speakers length mismatch raises") {
  EaeParams p = make_params(2, 2, 17);
  Tape t;
  std::mt19937_64 rng(0);
  Tensor g = t.constant({3, 4}, random_values(12, rng));
  CHECK_THROWS_AS(ia_attention(t, g, {0, 1}, p), DimensionError);
}

TEST_CASE("eae_forward gradient vs finite differences including mu and rho") {
  const int d = 8, n = 5;
  EaeParams p = make_params(d, 4, 18);
  std::mt19937_64 rng(19);
  std::vector<double> g = random_values(static_cast<std::size_t>(n * 2 * d), rng);
  std::vector<int> speakers{0, 1, 0, 1, 0};
  auto params = p.all();
  double err = finite_diff_check(params, [&] {
    Tape t;
    auto [vhat, trace] = eae_forward(t, t.constant({n, 2 * d}, g), speakers, p);
    Tensor loss = t.mean(t.mul(vhat, vhat));
    t.backward(loss);
    t.add_param_grads();
    return loss.scalar();
  }, 1e-5);
  CHECK(err < 1e-3);
}
