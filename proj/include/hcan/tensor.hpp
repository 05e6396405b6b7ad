#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hcan/errors.hpp"

namespace hcan {

// A learnable parameter living outside any tape. Tapes lease it via
// Tape::leaf(); Tape::add_param_grads() accumulates into `grad`.
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  // Adam moments, owned here so checkpoints can round-trip them.
  std::vector<double> m;
  std::vector<double> v;

  Param() = default;
  Param(std::string name_, std::vector<int> shape_);

  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
  // Uniform init in +-1/sqrt(fan_in).
  void init_uniform(int fan_in, std::mt19937_64& rng);
  void fill(double x) { std::fill(value.begin(), value.end(), x); }
};

class Tape;

// Lightweight handle into a Tape.
struct Tensor {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const std::vector<int>& shape() const;
  const std::vector<double>& values() const;
  const std::vector<double>& grad() const;
  int rows() const { return shape()[0]; }
  int cols() const { return shape()[1]; }
  std::size_t size() const { return values().size(); }
  double scalar() const;
};

// Reverse-mode tape. All tensors are 2D (scalars are 1x1). Eager forward
// evaluation; backward replays the record in reverse.
class Tape {
 public:
  enum class Op {
    kConstant, kInput, kLeaf,
    kMatmul, kTranspose,
    kAdd, kSub, kMul,
    kTanh, kSigmoid, kExp, kLog,
    kScale, kAddConst,
    kSoftmax, kConcat, kSliceRows, kSliceCols,
    kDropout, kSum, kMean,
  };

  // Leaves -------------------------------------------------------------
  Tensor constant(std::vector<int> shape, std::vector<double> values);
  Tensor zeros(int rows, int cols);
  Tensor scalar_const(double v) { return constant({1, 1}, {v}); }
  // Tape-local differentiable input (e.g. utterance features for FGV).
  Tensor input(std::vector<int> shape, std::vector<double> values);
  // Lease a shared parameter; grads flow back via add_param_grads().
  Tensor leaf(Param& p);

  // Ops ----------------------------------------------------------------
  Tensor matmul(Tensor a, Tensor b);
  Tensor transpose(Tensor a);
  Tensor add(Tensor a, Tensor b);
  Tensor sub(Tensor a, Tensor b);
  Tensor mul(Tensor a, Tensor b);
  Tensor tanh_(Tensor a);
  Tensor sigmoid_(Tensor a);
  Tensor exp_(Tensor a);
  Tensor log_(Tensor a);
  Tensor scale(Tensor a, double c);
  Tensor add_const(Tensor a, double c);
  // Row-wise softmax with max subtraction.
  Tensor softmax(Tensor a);
  Tensor concat(const std::vector<Tensor>& parts, int axis);
  Tensor slice_rows(Tensor a, int r0, int r1);
  Tensor slice_cols(Tensor a, int c0, int c1);
  Tensor dropout(Tensor a, double rate, bool training, std::mt19937_64& rng);
  Tensor sum(Tensor a);
  Tensor mean(Tensor a);

  // Gradients ----------------------------------------------------------
  // Accumulates grads (+=) for every node reachable from root. Root must
  // be scalar; its grad is seeded with 1. Repeated calls accumulate.
  void backward(Tensor root);
  void zero_grad();
  // param.grad += scale * tape-local leaf grad, for every leased Param.
  void add_param_grads(double scale = 1.0);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  friend struct Tensor;

  struct Node {
    Op op;
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;
    std::vector<int> in;
    // Op-specific payload.
    double c = 0.0;
    int i0 = 0, i1 = 0;           // slice bounds / concat axis
    std::vector<double> aux;      // dropout mask (scaled)
    Param* param = nullptr;
    bool needs_grad = false;
  };

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Tensor push(Node n);
  void backward_node(int id);

  std::vector<Node> nodes_;
};

// Central finite-difference check of the tape gradient.
//
// `loss_and_grad` must: zero nothing, run a fresh forward/backward and
// accumulate into each param's grad, and return the loss value. The harness
// zeroes param grads around calls. Returns the worst relative error over
// all coordinates with denominator max(|analytic|, |numeric|, 1e-8).
double finite_diff_check(const std::vector<Param*>& params,
                         const std::function<double()>& loss_and_grad,
                         double step);

}  // namespace hcan
