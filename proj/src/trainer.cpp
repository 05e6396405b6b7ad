#include "hcan/trainer.hpp"

#include <algorithm>
#include <cmath>

namespace hcan {

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
  if (lstm_layers < 1) throw ConfigError("lstm_layers must be >= 1");
  if (ece_heads < 1 || ia_heads < 1) throw ConfigError("head counts must be positive");
  if (alpha < 0.0 || beta < 0.0) throw ConfigError("alpha/beta must be non-negative");
  if (epsilon < 0.0) throw ConfigError("epsilon must be non-negative");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (patience < 1) throw ConfigError("patience must be positive");
  if (grad_clip_norm <= 0.0) throw ConfigError("grad_clip_norm must be positive");
  if (precision != 32 && precision != 64) throw ConfigError("precision must be 32 or 64");
}

ModelConfig TrainConfig::model_config(int feature_dim, int num_labels) const {
  ModelConfig mc;
  mc.feature_dim = feature_dim;
  mc.num_labels = num_labels;
  mc.lstm_layers = lstm_layers;
  mc.ece_heads = ece_heads;
  mc.ia_heads = ia_heads;
  mc.dropout = dropout;
  mc.no_ece = no_ece;
  mc.no_eae = no_eae;
  mc.distance_mode = distance_mode;
  mc.scale_ia_logits = scale_ia_logits;
  return mc;
}

LossConfig TrainConfig::loss_config() const {
  LossConfig lc;
  lc.alpha = no_kl ? 0.0 : alpha;
  lc.beta = no_adv ? 0.0 : beta;
  lc.epsilon = epsilon;
  lc.fgv_norm = fgv_norm;
  lc.ablate_kl = no_kl;
  lc.ablate_adv = no_adv;
  lc.ablate_eae = no_eae;
  return lc;
}

void TrainerState::apply_best() {
  if (best_values.empty()) return;
  std::vector<Param*> ps = model.params();
  if (ps.size() != best_values.size())
    throw UsageError("apply_best: parameter count mismatch");
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = best_values[i];
}

void quantize_params(std::vector<Param*>& params) {
  for (Param* p : params) {
    for (double& x : p->value) x = static_cast<double>(static_cast<float>(x));
    for (double& x : p->m) x = static_cast<double>(static_cast<float>(x));
    for (double& x : p->v) x = static_cast<double>(static_cast<float>(x));
  }
}

void adam_step(std::vector<Param*>& params, double lr, long& t,
               double clip_norm, bool quantize32) {
  double sq = 0.0;
  for (Param* p : params)
    for (double g : p->grad) sq += g * g;
  double norm = std::sqrt(sq);
  double scale = norm > clip_norm ? clip_norm / norm : 1.0;

  ++t;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double bias1 = 1.0 - std::pow(b1, static_cast<double>(t));
  double bias2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (Param* p : params) {
    for (std::size_t i = 0; i < p->size(); ++i) {
      double g = p->grad[i] * scale;
      p->m[i] = b1 * p->m[i] + (1.0 - b1) * g;
      p->v[i] = b2 * p->v[i] + (1.0 - b2) * g * g;
      double mhat = p->m[i] / bias1;
      double vhat = p->v[i] / bias2;
      p->value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
  if (quantize32) quantize_params(params);
}

TrainerState init_trainer(const Corpus& corpus, const TrainConfig& config) {
  config.validate();
  for (const Conversation& conv : corpus.train)
    if (!conv.fully_labeled())
      throw DataError("training requires labels; conversation " + conv.id + " is unlabeled");

  TrainerState state;
  state.config = config;
  state.label_set = corpus.label_set;
  state.model.init(config.model_config(corpus.feature_dim, corpus.num_labels()), config.seed);
  state.rng.seed(config.seed ^ 0x9e3779b97f4a7c15ull);
  if (config.precision == 32) {
    std::vector<Param*> ps = state.model.params();
    quantize_params(ps);
  }
  return state;
}

namespace {

// Portable Fisher-Yates; std::shuffle is implementation-defined.
void shuffle_indices(std::vector<int>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace

TrainResult train(TrainerState& state, const Corpus& corpus) {
  const TrainConfig& cfg = state.config;
  TrainResult result;
  std::vector<Param*> params = state.model.params();
  LossConfig loss_cfg = cfg.loss_config();

  while (state.epoch < cfg.epochs && state.epochs_since_improvement < cfg.patience) {
    std::vector<int> order(corpus.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    shuffle_indices(order, state.rng);

    double epoch_loss = 0.0;
    long epoch_utts = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      long batch_utts = 0;
      for (std::size_t i = start; i < end; ++i)
        batch_utts += corpus.train[static_cast<std::size_t>(order[i])].length();

      for (Param* p : params) p->zero_grad();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const Conversation& conv = corpus.train[static_cast<std::size_t>(order[i])];
        ConvLossOptions opts;
        opts.loss = loss_cfg;
        opts.training = true;
        opts.grad_scale = static_cast<double>(conv.length()) / static_cast<double>(batch_utts);
        ConvLoss cl = conversation_loss(state.model, conv, opts, state.rng);
        batch_loss += opts.grad_scale * cl.l_ec;
      }
      if (!std::isfinite(batch_loss))
        throw Error(ErrorKind::Numeric,
                    "non-finite loss in epoch " + std::to_string(state.epoch) + ", batch " +
                        std::to_string(start / static_cast<std::size_t>(cfg.batch_size)));
      adam_step(params, cfg.learning_rate, state.adam_step, cfg.grad_clip_norm,
                cfg.precision == 32);
      epoch_loss += batch_loss * static_cast<double>(batch_utts);
      epoch_utts += batch_utts;
    }

    EpochStats stats;
    stats.epoch = state.epoch;
    stats.train_loss = epoch_utts > 0 ? epoch_loss / static_cast<double>(epoch_utts) : 0.0;
    double val_f1;
    if (!corpus.val.empty()) {
      stats.val = evaluate(state.model, corpus.val);
      val_f1 = stats.val.weighted_f1;
    } else {
      // No validation split: treat decreasing train loss as improvement.
      val_f1 = -stats.train_loss;
    }
    result.history.push_back(stats);

    if (val_f1 > state.best_f1) {
      state.best_f1 = val_f1;
      state.best_epoch = state.epoch;
      state.epochs_since_improvement = 0;
      state.best_values.clear();
      for (Param* p : params) state.best_values.push_back(p->value);
    } else {
      ++state.epochs_since_improvement;
    }
    ++state.epoch;
  }
  return result;
}

TrainConfig apply_ablation(const TrainConfig& base, const std::string& variant) {
  TrainConfig cfg = base;
  if (variant == "full") {
  } else if (variant == "no_ece") {
    cfg.no_ece = true;
  } else if (variant == "no_eae") {
    cfg.no_eae = true;
  } else if (variant == "no_kl") {
    cfg.no_kl = true;
  } else if (variant == "no_adv") {
    cfg.no_adv = true;
  } else {
    throw ConfigError("unknown ablation variant: " + variant +
                      " (expected full|no_ece|no_eae|no_kl|no_adv)");
  }
  return cfg;
}

std::string ablation_label(const std::string& variant) {
  if (variant == "full") return "HCAN";
  if (variant == "no_ece") return "w/o ECE";
  if (variant == "no_eae") return "w/o EAE";
  if (variant == "no_kl") return "w/o L_KL";
  if (variant == "no_adv") return "w/o L_adv";
  return variant;
}

std::vector<AblationRow> run_ablation(const Corpus& corpus, const TrainConfig& base,
                                      const std::vector<std::string>& variants,
                                      const std::vector<std::uint64_t>& seeds) {
  std::vector<std::string> all = {"full"};
  for (const std::string& v : variants)
    if (v != "full") all.push_back(v);

  std::vector<AblationRow> rows;
  for (const std::string& variant : all) {
    AblationRow row;
    row.variant = variant;
    row.label = ablation_label(variant);
    TrainConfig cfg = apply_ablation(base, variant);
    for (std::uint64_t seed : seeds) {
      cfg.seed = seed;
      TrainerState state = init_trainer(corpus, cfg);
      train(state, corpus);
      state.apply_best();
      Metrics m = evaluate(state.model, corpus.test.empty() ? corpus.val : corpus.test);
      row.test_f1.push_back(m.weighted_f1);
    }
    double sum = 0.0;
    for (double f : row.test_f1) sum += f;
    row.mean_f1 = row.test_f1.empty() ? 0.0 : sum / static_cast<double>(row.test_f1.size());
    double var = 0.0;
    for (double f : row.test_f1) var += (f - row.mean_f1) * (f - row.mean_f1);
    row.std_f1 = row.test_f1.size() > 1
                     ? std::sqrt(var / static_cast<double>(row.test_f1.size() - 1))
                     : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace hcan
