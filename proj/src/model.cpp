#include "hcan/model.hpp"

#include <cmath>

namespace hcan {

void HcanModel::init(const ModelConfig& config, std::uint64_t seed) {
  cfg = config;
  if (cfg.feature_dim < 1 || cfg.num_labels < 1)
    throw ConfigError("model: feature_dim and num_labels must be positive");
  std::mt19937_64 rng(seed);
  ece.init(cfg.feature_dim, cfg.lstm_layers, cfg.ece_heads, rng);
  eae.init(cfg.feature_dim, cfg.ia_heads, rng);
  eae.distance_mode = cfg.distance_mode;
  eae.scale_logits = cfg.scale_ia_logits;
  heads.init(cfg.feature_dim, cfg.num_labels, rng);
  no_ece_proj = Param("no_ece_proj", {cfg.feature_dim, 2 * cfg.feature_dim});
  no_ece_proj.init_uniform(cfg.feature_dim, rng);
}

std::vector<Param*> HcanModel::params() {
  std::vector<Param*> out;
  if (cfg.no_ece) {
    out.push_back(&no_ece_proj);
  } else {
    for (Param* p : ece.all()) out.push_back(p);
  }
  if (!cfg.no_eae)
    for (Param* p : eae.all()) out.push_back(p);
  for (Param* p : heads.all()) out.push_back(p);
  return out;
}

void HcanModel::zero_grad() {
  for (Param* p : params()) p->zero_grad();
}

HcanModel::ForwardResult HcanModel::forward(Tape& tape, Tensor features,
                                            const std::vector<int>& speakers,
                                            bool training, std::mt19937_64& rng) {
  ForwardResult out;
  if (cfg.no_ece)
    out.g = tape.matmul(features, tape.leaf(no_ece_proj));
  else
    out.g = ece_forward(tape, features, ece, training, cfg.dropout, rng);
  if (cfg.no_eae) {
    out.vhat = tape.zeros(features.rows(), 4 * cfg.feature_dim);
  } else {
    auto [vhat, trace] = eae_forward(tape, out.g, speakers, eae);
    out.vhat = vhat;
    out.trace = std::move(trace);
  }
  out.dist = heads_forward(tape, out.vhat, out.g, heads);
  return out;
}

HcanModel::Prediction HcanModel::predict(const Conversation& conv) {
  std::mt19937_64 rng(0);   // inference consumes no randomness
  Tape tape;
  Tensor feat = tape.constant({conv.length(), cfg.feature_dim}, conversation_features(conv));
  ForwardResult fw = forward(tape, feat, conv.speakers(), false, rng);

  Prediction pred;
  pred.trace = std::move(fw.trace);
  int n = conv.length(), e = cfg.num_labels;
  auto rows_of = [&](const Tensor& t) {
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < n; ++i)
      rows.emplace_back(t.values().begin() + static_cast<std::size_t>(i) * e,
                        t.values().begin() + static_cast<std::size_t>(i + 1) * e);
    return rows;
  };
  pred.y_hat = rows_of(fw.dist.y_hat);
  pred.d_src = rows_of(fw.dist.d_src);
  pred.d_tmp = rows_of(fw.dist.d_tmp);
  for (int i = 0; i < n; ++i) {
    const auto& row = pred.y_hat[static_cast<std::size_t>(i)];
    int best = 0;
    for (int j = 1; j < e; ++j)
      if (row[static_cast<std::size_t>(j)] > row[static_cast<std::size_t>(best)]) best = j;
    pred.labels.push_back(best);
  }
  return pred;
}

std::vector<double> conversation_features(const Conversation& conv) {
  std::vector<double> flat;
  for (const Utterance& u : conv.utterances)
    for (float x : u.features) flat.push_back(static_cast<double>(x));
  return flat;
}

ConvLoss conversation_loss(HcanModel& model, const Conversation& conv,
                           const ConvLossOptions& opts, std::mt19937_64& rng) {
  int n = conv.length();
  int d = model.cfg.feature_dim;
  std::vector<int> labels;
  for (const Utterance& u : conv.utterances) {
    if (!u.label)
      throw DataError("conversation " + conv.id + ": unlabeled utterance in training data");
    labels.push_back(*u.label);
  }
  std::vector<int> speakers = conv.speakers();
  std::vector<double> flat = conversation_features(conv);

  const LossConfig& lc = opts.loss;
  bool use_kl = !lc.ablate_kl && !model.cfg.no_eae && !lc.ablate_eae;
  bool use_adv = !lc.ablate_adv;

  // Snapshot the rng so the perturbed pass replays identical dropout masks.
  std::mt19937_64 rng_adv = rng;

  Tape t1;
  Tensor feat = t1.input({n, d}, flat);
  auto fw = model.forward(t1, feat, speakers, opts.training, rng);
  Tensor l_cross_t = cross_entropy(t1, fw.dist.y_hat, labels);
  Tensor l_kl_t;
  if (use_kl) l_kl_t = kl_loss(t1, fw.dist.d_tmp, fw.dist.d_src);

  ConvLoss out;
  out.utterances = n;
  out.l_cross = l_cross_t.scalar();
  out.l_kl = use_kl ? l_kl_t.scalar() : 0.0;

  std::vector<double> noise;
  if (use_adv) {
    if (opts.fixed_noise) {
      noise = *opts.fixed_noise;
      if (noise.size() != flat.size())
        throw DimensionError("conversation_loss: fixed noise size mismatch");
    } else {
      t1.backward(l_cross_t);
      noise = fgv_perturbation(feat.grad(), n, d, lc.epsilon, lc.fgv_norm);
      t1.zero_grad();
    }
  }

  if (opts.grad_scale != 0.0) {
    double ce_coef = use_adv ? 1.0 + lc.beta : 1.0;
    Tensor root = t1.scale(l_cross_t, ce_coef);
    if (use_kl && lc.alpha != 0.0) root = t1.add(root, t1.scale(l_kl_t, lc.alpha));
    t1.backward(root);
    t1.add_param_grads(opts.grad_scale);
  }

  if (use_adv) {
    std::vector<double> perturbed(flat.size());
    for (std::size_t i = 0; i < flat.size(); ++i) perturbed[i] = flat[i] + noise[i];
    Tape t2;
    Tensor feat2 = t2.constant({n, d}, std::move(perturbed));
    auto fw2 = model.forward(t2, feat2, speakers, opts.training, rng_adv);
    Tensor l_cross2_t = cross_entropy(t2, fw2.dist.y_hat, labels);
    out.l_adv = out.l_cross + l_cross2_t.scalar();
    if (opts.grad_scale != 0.0 && lc.beta != 0.0) {
      t2.backward(t2.scale(l_cross2_t, lc.beta));
      t2.add_param_grads(opts.grad_scale);
    }
  }

  out.l_ec = total_loss(out.l_cross, out.l_kl, out.l_adv, lc);
  return out;
}

}  // namespace hcan
