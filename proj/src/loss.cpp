#include "hcan/loss.hpp"

#include <cmath>

namespace hcan {

void HeadParams::init(int feature_dim, int labels, std::mt19937_64& rng) {
  d_u = feature_dim;
  num_labels = labels;
  lambda_theta = Param("head.lambda_theta", {4 * d_u, 2 * d_u});
  w_d = Param("head.w_d", {2 * d_u, num_labels});
  w_o = Param("head.w_o", {num_labels, num_labels});
  b_o = Param("head.b_o", {1, num_labels});
  lambda_theta.init_uniform(4 * d_u, rng);
  w_d.init_uniform(2 * d_u, rng);
  w_o.init_uniform(num_labels, rng);
}

std::vector<Param*> HeadParams::all() { return {&lambda_theta, &w_d, &w_o, &b_o}; }

EmotionDistributions heads_forward(Tape& tape, Tensor vhat, Tensor g, HeadParams& params) {
  if (vhat.cols() != 4 * params.d_u || g.cols() != 2 * params.d_u ||
      vhat.rows() != g.rows())
    throw DimensionError("heads_forward: got vhat " + std::to_string(vhat.rows()) + "x" +
                         std::to_string(vhat.cols()) + ", g " + std::to_string(g.rows()) +
                         "x" + std::to_string(g.cols()) + " for d_u " +
                         std::to_string(params.d_u));
  int n = vhat.rows();
  Tensor lambda = tape.leaf(params.lambda_theta);
  Tensor w_d = tape.leaf(params.w_d);
  Tensor state = tape.matmul(vhat, lambda);   // lambda_theta(v_hat), n x 2d

  EmotionDistributions out;
  out.d_src = tape.softmax(tape.matmul(tape.add(state, g), w_d));
  out.d_tmp = tape.softmax(tape.matmul(state, w_d));
  // Bias broadcast via ones-column outer product (no implicit broadcasting).
  Tensor ones = tape.constant({n, 1}, std::vector<double>(static_cast<std::size_t>(n), 1.0));
  Tensor bias = tape.matmul(ones, tape.leaf(params.b_o));
  out.y_hat = tape.softmax(tape.add(tape.matmul(out.d_src, tape.leaf(params.w_o)), bias));
  return out;
}

Tensor cross_entropy(Tape& tape, Tensor y_hat, const std::vector<int>& labels) {
  int n = y_hat.rows(), e = y_hat.cols();
  if (static_cast<int>(labels.size()) != n)
    throw DataError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(n) + " rows");
  std::vector<double> onehot(static_cast<std::size_t>(n) * e, 0.0);
  for (int i = 0; i < n; ++i) {
    if (labels[static_cast<std::size_t>(i)] < 0 || labels[static_cast<std::size_t>(i)] >= e)
      throw DataError("cross_entropy: label out of range at row " + std::to_string(i));
    onehot[static_cast<std::size_t>(i) * e + labels[static_cast<std::size_t>(i)]] = 1.0;
  }
  // Select the gold probability per row before the log so exact one-hot
  // rows (zero off-gold entries) are valid inputs.
  Tensor mask = tape.constant({n, e}, std::move(onehot));
  Tensor ones = tape.constant({e, 1}, std::vector<double>(static_cast<std::size_t>(e), 1.0));
  Tensor gold = tape.matmul(tape.mul(mask, y_hat), ones);   // n x 1
  return tape.scale(tape.sum(tape.log_(gold)), -1.0 / n);
}

Tensor kl_loss(Tape& tape, Tensor d_tmp, Tensor d_src) {
  if (d_tmp.shape() != d_src.shape())
    throw DimensionError("kl_loss: shape mismatch");
  int n = d_tmp.rows();
  Tensor terms = tape.mul(d_tmp, tape.sub(tape.log_(d_tmp), tape.log_(d_src)));
  return tape.scale(tape.sum(terms), 1.0 / n);
}

std::vector<double> fgv_perturbation(const std::vector<double>& grad, int rows, int cols,
                                     double epsilon, FgvNorm mode) {
  if (epsilon < 0.0) throw ConfigError("fgv_perturbation: epsilon must be non-negative");
  if (grad.size() != static_cast<std::size_t>(rows) * cols)
    throw DimensionError("fgv_perturbation: grad size mismatch");
  std::vector<double> noise(grad.size(), 0.0);
  if (mode == FgvNorm::kGlobal) {
    double norm = 0.0;
    for (double x : grad) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-12) return noise;
    for (std::size_t i = 0; i < grad.size(); ++i) noise[i] = epsilon * grad[i] / norm;
  } else {
    for (int r = 0; r < rows; ++r) {
      const double* g = &grad[static_cast<std::size_t>(r) * cols];
      double norm = 0.0;
      for (int c = 0; c < cols; ++c) norm += g[c] * g[c];
      norm = std::sqrt(norm);
      if (norm < 1e-12) continue;
      double* nr = &noise[static_cast<std::size_t>(r) * cols];
      for (int c = 0; c < cols; ++c) nr[c] = epsilon * g[c] / norm;
    }
  }
  return noise;
}

double total_loss(double l_cross, double l_kl, double l_adv, const LossConfig& config) {
  double total = l_cross;
  if (!config.ablate_kl && !config.ablate_eae) total += config.alpha * l_kl;
  if (!config.ablate_adv) total += config.beta * l_adv;
  return total;
}

}  // namespace hcan
