#include "hcan/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <random>

namespace hcan {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

Param random_param(const std::string& name, int r, int c, std::mt19937_64& rng,
                   double lo = -2.0, double hi = 2.0) {
  Param p(name, {r, c});
  for (double& x : p.value) x = uniform(rng, lo, hi);
  return p;
}

GradCheckEntry check(const std::string& name, std::vector<Param*> params,
                     const std::function<double()>& loss_and_grad,
                     double step, double threshold) {
  GradCheckEntry e;
  e.name = name;
  e.max_rel_err = finite_diff_check(params, loss_and_grad, step);
  e.threshold = threshold;
  e.pass = e.max_rel_err < threshold;
  return e;
}

}  // namespace

std::vector<double> compute_fgv_noise(HcanModel& model, const Conversation& conv,
                                      const LossConfig& loss_cfg) {
  std::mt19937_64 rng(0);
  Tape tape;
  Tensor feat = tape.input({conv.length(), model.cfg.feature_dim},
                           conversation_features(conv));
  auto fw = model.forward(tape, feat, conv.speakers(), false, rng);
  std::vector<int> labels;
  for (const Utterance& u : conv.utterances) labels.push_back(*u.label);
  Tensor l_cross = cross_entropy(tape, fw.dist.y_hat, labels);
  tape.backward(l_cross);
  return fgv_perturbation(feat.grad(), conv.length(), model.cfg.feature_dim,
                          loss_cfg.epsilon, loss_cfg.fgv_norm);
}

std::vector<GradCheckEntry> run_gradcheck(bool full_size, std::uint64_t seed) {
  std::vector<GradCheckEntry> out;
  const double kPrimStep = 1e-5;
  const double kPrimThreshold = 1e-5;
  int instances = full_size ? 3 : 1;

  for (int inst = 0; inst < instances; ++inst) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(inst) * 1000);
    std::string tag = instances > 1 ? "#" + std::to_string(inst) : "";

    {
      Param a = random_param("a", 3, 4, rng);
      Param b = random_param("b", 4, 2, rng);
      out.push_back(check("matmul" + tag, {&a, &b}, [&] {
        Tape t;
        Tensor loss = t.sum(t.matmul(t.leaf(a), t.leaf(b)));
        t.backward(loss);
        t.add_param_grads();
        return loss.scalar();
      }, kPrimStep, kPrimThreshold));
    }
    {
      Param a = random_param("a", 2, 3, rng);
      out.push_back(check("transpose" + tag, {&a}, [&] {
        Tape t;
        Tensor w = t.constant({2, 3}, {1, -2, 0.5, 3, -1, 2});
        Tensor loss = t.sum(t.matmul(t.transpose(t.leaf(a)), w));
        t.backward(loss);
        t.add_param_grads();
        return loss.scalar();
      }, kPrimStep, kPrimThreshold));
    }

    struct Binary {
      const char* name;
      std::function<Tensor(Tape&, Tensor, Tensor)> apply;
    };
    std::vector<Binary> binaries = {
        {"add", [](Tape& t, Tensor a, Tensor b) { return t.add(a, b); }},
        {"sub", [](Tape& t, Tensor a, Tensor b) { return t.sub(a, b); }},
        {"mul", [](Tape& t, Tensor a, Tensor b) { return t.mul(a, b); }},
    };
    for (auto& op : binaries) {
      Param a = random_param("a", 2, 3, rng);
      Param b = random_param("b", 2, 3, rng);
      // Squaring makes the loss nonlinear so wrong pass-through rules show up.
      out.push_back(check(std::string(op.name) + tag, {&a, &b}, [&] {
        Tape t;
        Tensor y = op.apply(t, t.leaf(a), t.leaf(b));
        Tensor loss = t.sum(t.mul(y, y));
        t.backward(loss);
        t.add_param_grads();
        return loss.scalar();
      }, kPrimStep, kPrimThreshold));
    }

    struct Unary {
      const char* name;
      std::function<Tensor(Tape&, Tensor)> apply;
      double lo, hi;
    };
    std::vector<Unary> unaries = {
        {"tanh", [](Tape& t, Tensor a) { return t.tanh_(a); }, -2.0, 2.0},
        {"sigmoid", [](Tape& t, Tensor a) { return t.sigmoid_(a); }, -2.0, 2.0},
        {"exp", [](Tape& t, Tensor a) { return t.exp_(a); }, -2.0, 2.0},
        {"log", [](Tape& t, Tensor a) { return t.log_(a); }, 0.5, 2.0},
        {"scale", [](Tape& t, Tensor a) { return t.scale(a, -1.7); }, -2.0, 2.0},
    };
    for (auto& op : unaries) {
      Param a = random_param("a", 2, 3, rng, op.lo, op.hi);
      out.push_back(check(std::string(op.name) + tag, {&a}, [&] {
        Tape t;
        Tensor y = op.apply(t, t.leaf(a));
        Tensor loss = t.sum(t.mul(y, y));
        t.backward(loss);
        t.add_param_grads();
        return loss.scalar();
      }, kPrimStep, kPrimThreshold));
    }

    {
      Param a = random_param("a", 2, 6, rng);
      out.push_back(check("softmax" + tag, {&a}, [&] {
        Tape t;
        Tensor y = t.softmax(t.leaf(a));
        Tensor w = t.constant({2, 6}, {1, -1, 2, 0.5, -2, 1, 0.3, 1, -1, 2, 0.7, -0.2});
        Tensor loss = t.sum(t.mul(w, y));
        t.backward(loss);
        t.add_param_grads();
        return loss.scalar();
      }, kPrimStep, kPrimThreshold));
    }
    {
      Param a = random_param("a", 1, 2, rng);
      Param b = random_param("b", 1, 3, rng);
      out.push_back(check("concat" + tag, {&a, &b}, [&] {
        Tape t;
        Tensor y = t.concat({t.leaf(a), t.leaf(b)}, 1);
        Tensor loss = t.sum(t.mul(y, y));
        t.backward(loss);
        t.add_param_grads();
        return loss.scalar();
      }, kPrimStep, kPrimThreshold));
    }
    {
      Param a = random_param("a", 4, 3, rng);
      out.push_back(check("slice" + tag, {&a}, [&] {
        Tape t;
        Tensor y = t.slice_cols(t.slice_rows(t.leaf(a), 1, 3), 0, 2);
        Tensor loss = t.sum(t.mul(y, y));
        t.backward(loss);
        t.add_param_grads();
        return loss.scalar();
      }, kPrimStep, kPrimThreshold));
    }
    {
      Param a = random_param("a", 5, 4, rng);
      out.push_back(check("dropout" + tag, {&a}, [&] {
        Tape t;
        std::mt19937_64 mask_rng(7);   // fixed mask so the function is smooth
        Tensor y = t.dropout(t.leaf(a), 0.3, true, mask_rng);
        Tensor loss = t.sum(t.mul(y, y));
        t.backward(loss);
        t.add_param_grads();
        return loss.scalar();
      }, kPrimStep, kPrimThreshold));
    }
    {
      // Composite chain: matmul -> tanh -> softmax -> log -> sum.
      Param a = random_param("a", 3, 4, rng);
      Param b = random_param("b", 4, 5, rng);
      out.push_back(check("composite" + tag, {&a, &b}, [&] {
        Tape t;
        Tensor y = t.log_(t.softmax(t.tanh_(t.matmul(t.leaf(a), t.leaf(b)))));
        Tensor loss = t.sum(y);
        t.backward(loss);
        t.add_param_grads();
        return loss.scalar();
      }, kPrimStep, kPrimThreshold));
    }
  }

  // Full model: all loss terms active, FGV noise frozen at the base point so
  // the finite differences see the same function the backward pass
  // differentiates (the perturbation is a constant in the second pass).
  {
    std::mt19937_64 rng(seed);
    ModelConfig mc;
    mc.feature_dim = 8;
    mc.num_labels = 3;
    mc.dropout = 0.0;
    HcanModel model;
    model.init(mc, seed);

    Conversation conv;
    conv.id = "gradcheck";
    for (int i = 0; i < 5; ++i) {
      Utterance u;
      u.speaker_id = i % 2;
      u.label = static_cast<int>(rng() % 3);
      for (int d = 0; d < 8; ++d)
        u.features.push_back(static_cast<float>(uniform(rng, -2.0, 2.0)));
      conv.utterances.push_back(std::move(u));
    }

    LossConfig lc;
    lc.alpha = 0.2;
    lc.beta = 0.05;
    lc.epsilon = 0.1;
    std::vector<double> noise = compute_fgv_noise(model, conv, lc);

    // Larger step than the primitives: roundoff (~eps*|L|/h) would swamp the
    // smallest coordinate gradients (~1e-9) at h=1e-5.
    out.push_back(check("full_model_l_ec", model.params(), [&] {
      ConvLossOptions opts;
      opts.loss = lc;
      opts.training = false;
      opts.grad_scale = 1.0;
      opts.fixed_noise = &noise;
      std::mt19937_64 loss_rng(0);
      return conversation_loss(model, conv, opts, loss_rng).l_ec;
    }, 1e-4, 1e-3));
  }

  return out;
}

}  // namespace hcan
