#include "hcan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hcan {

namespace {

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

std::size_t numel(const std::vector<int>& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

void check_2d(const std::vector<int>& s, const char* what) {
  if (s.size() != 2 || s[0] <= 0 || s[1] <= 0)
    throw DimensionError(std::string(what) + ": expected positive 2D shape, got " + shape_str(s));
}

}  // namespace

Param::Param(std::string name_, std::vector<int> shape_)
    : name(std::move(name_)), shape(std::move(shape_)) {
  check_2d(shape, name.c_str());
  std::size_t n = numel(shape);
  value.assign(n, 0.0);
  grad.assign(n, 0.0);
  m.assign(n, 0.0);
  v.assign(n, 0.0);
}

void Param::init_uniform(int fan_in, std::mt19937_64& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& x : value) {
    // 53-bit uniform in [0,1); hand-rolled so replay is portable.
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    x = (2.0 * u - 1.0) * bound;
  }
}

const std::vector<int>& Tensor::shape() const { return tape->node(id).shape; }
const std::vector<double>& Tensor::values() const { return tape->node(id).values; }
const std::vector<double>& Tensor::grad() const { return tape->node(id).grad; }

double Tensor::scalar() const {
  if (size() != 1) throw UsageError("scalar() on tensor of shape " + shape_str(shape()));
  return values()[0];
}

Tensor Tape::push(Node n) {
  n.grad.assign(n.values.size(), 0.0);
  nodes_.push_back(std::move(n));
  return Tensor{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor Tape::constant(std::vector<int> shape, std::vector<double> values) {
  check_2d(shape, "constant");
  if (values.size() != numel(shape))
    throw DimensionError("constant: " + std::to_string(values.size()) +
                         " values for shape " + shape_str(shape));
  Node n;
  n.op = Op::kConstant;
  n.shape = std::move(shape);
  n.values = std::move(values);
  n.needs_grad = false;
  return push(std::move(n));
}

Tensor Tape::zeros(int rows, int cols) {
  return constant({rows, cols}, std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0));
}

Tensor Tape::input(std::vector<int> shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  node(t.id).op = Op::kInput;
  node(t.id).needs_grad = true;
  return t;
}

Tensor Tape::leaf(Param& p) {
  Node n;
  n.op = Op::kLeaf;
  n.shape = p.shape;
  n.values = p.value;
  n.param = &p;
  n.needs_grad = true;
  return push(std::move(n));
}

Tensor Tape::matmul(Tensor a, Tensor b) {
  const Node& na = node(a.id);
  const Node& nb = node(b.id);
  if (na.shape[1] != nb.shape[0])
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(na.shape) +
                         " x " + shape_str(nb.shape));
  int m = na.shape[0], k = na.shape[1], p = nb.shape[1];
  Node n;
  n.op = Op::kMatmul;
  n.shape = {m, p};
  n.values.assign(static_cast<std::size_t>(m) * p, 0.0);
  for (int i = 0; i < m; ++i)
    for (int l = 0; l < k; ++l) {
      double av = na.values[static_cast<std::size_t>(i) * k + l];
      if (av == 0.0) continue;
      const double* brow = &nb.values[static_cast<std::size_t>(l) * p];
      double* orow = &n.values[static_cast<std::size_t>(i) * p];
      for (int j = 0; j < p; ++j) orow[j] += av * brow[j];
    }
  n.in = {a.id, b.id};
  n.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

Tensor Tape::transpose(Tensor a) {
  const Node& na = node(a.id);
  int r = na.shape[0], c = na.shape[1];
  Node n;
  n.op = Op::kTranspose;
  n.shape = {c, r};
  n.values.assign(na.values.size(), 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      n.values[static_cast<std::size_t>(j) * r + i] = na.values[static_cast<std::size_t>(i) * c + j];
  n.in = {a.id};
  n.needs_grad = na.needs_grad;
  return push(std::move(n));
}

static void check_same_shape(const std::vector<int>& a, const std::vector<int>& b, const char* op) {
  if (a != b)
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

Tensor Tape::add(Tensor a, Tensor b) {
  const Node& na = node(a.id);
  const Node& nb = node(b.id);
  check_same_shape(na.shape, nb.shape, "add");
  Node n;
  n.op = Op::kAdd;
  n.shape = na.shape;
  n.values.resize(na.values.size());
  for (std::size_t i = 0; i < n.values.size(); ++i) n.values[i] = na.values[i] + nb.values[i];
  n.in = {a.id, b.id};
  n.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

Tensor Tape::sub(Tensor a, Tensor b) {
  const Node& na = node(a.id);
  const Node& nb = node(b.id);
  check_same_shape(na.shape, nb.shape, "sub");
  Node n;
  n.op = Op::kSub;
  n.shape = na.shape;
  n.values.resize(na.values.size());
  for (std::size_t i = 0; i < n.values.size(); ++i) n.values[i] = na.values[i] - nb.values[i];
  n.in = {a.id, b.id};
  n.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

Tensor Tape::mul(Tensor a, Tensor b) {
  const Node& na = node(a.id);
  const Node& nb = node(b.id);
  check_same_shape(na.shape, nb.shape, "mul");
  Node n;
  n.op = Op::kMul;
  n.shape = na.shape;
  n.values.resize(na.values.size());
  for (std::size_t i = 0; i < n.values.size(); ++i) n.values[i] = na.values[i] * nb.values[i];
  n.in = {a.id, b.id};
  n.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

Tensor Tape::tanh_(Tensor a) {
  const Node& na = node(a.id);
  Node n;
  n.op = Op::kTanh;
  n.shape = na.shape;
  n.values.resize(na.values.size());
  for (std::size_t i = 0; i < n.values.size(); ++i) n.values[i] = std::tanh(na.values[i]);
  n.in = {a.id};
  n.needs_grad = na.needs_grad;
  return push(std::move(n));
}

Tensor Tape::sigmoid_(Tensor a) {
  const Node& na = node(a.id);
  Node n;
  n.op = Op::kSigmoid;
  n.shape = na.shape;
  n.values.resize(na.values.size());
  for (std::size_t i = 0; i < n.values.size(); ++i) {
    double x = na.values[i];
    n.values[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                           : std::exp(x) / (1.0 + std::exp(x));
  }
  n.in = {a.id};
  n.needs_grad = na.needs_grad;
  return push(std::move(n));
}

Tensor Tape::exp_(Tensor a) {
  const Node& na = node(a.id);
  Node n;
  n.op = Op::kExp;
  n.shape = na.shape;
  n.values.resize(na.values.size());
  for (std::size_t i = 0; i < n.values.size(); ++i) n.values[i] = std::exp(na.values[i]);
  n.in = {a.id};
  n.needs_grad = na.needs_grad;
  return push(std::move(n));
}

Tensor Tape::log_(Tensor a) {
  const Node& na = node(a.id);
  Node n;
  n.op = Op::kLog;
  n.shape = na.shape;
  n.values.resize(na.values.size());
  for (std::size_t i = 0; i < n.values.size(); ++i) {
    if (na.values[i] <= 0.0)
      throw DomainError("log: non-positive input " + std::to_string(na.values[i]));
    n.values[i] = std::log(na.values[i]);
  }
  n.in = {a.id};
  n.needs_grad = na.needs_grad;
  return push(std::move(n));
}

Tensor Tape::scale(Tensor a, double c) {
  const Node& na = node(a.id);
  Node n;
  n.op = Op::kScale;
  n.shape = na.shape;
  n.values.resize(na.values.size());
  for (std::size_t i = 0; i < n.values.size(); ++i) n.values[i] = na.values[i] * c;
  n.in = {a.id};
  n.c = c;
  n.needs_grad = na.needs_grad;
  return push(std::move(n));
}

Tensor Tape::add_const(Tensor a, double c) {
  const Node& na = node(a.id);
  Node n;
  n.op = Op::kAddConst;
  n.shape = na.shape;
  n.values.resize(na.values.size());
  for (std::size_t i = 0; i < n.values.size(); ++i) n.values[i] = na.values[i] + c;
  n.in = {a.id};
  n.c = c;
  n.needs_grad = na.needs_grad;
  return push(std::move(n));
}

Tensor Tape::softmax(Tensor a) {
  const Node& na = node(a.id);
  int r = na.shape[0], c = na.shape[1];
  Node n;
  n.op = Op::kSoftmax;
  n.shape = na.shape;
  n.values.resize(na.values.size());
  for (int i = 0; i < r; ++i) {
    const double* row = &na.values[static_cast<std::size_t>(i) * c];
    double* out = &n.values[static_cast<std::size_t>(i) * c];
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < c; ++j) {
      out[j] = std::exp(row[j] - mx);
      z += out[j];
    }
    for (int j = 0; j < c; ++j) out[j] /= z;
  }
  n.in = {a.id};
  n.needs_grad = na.needs_grad;
  return push(std::move(n));
}

Tensor Tape::concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no parts");
  if (axis != 0 && axis != 1) throw DimensionError("concat: axis must be 0 or 1");
  const Node& first = node(parts[0].id);
  int fixed = axis == 0 ? first.shape[1] : first.shape[0];
  int total = 0;
  bool needs = false;
  for (const Tensor& t : parts) {
    const Node& nt = node(t.id);
    int f = axis == 0 ? nt.shape[1] : nt.shape[0];
    if (f != fixed)
      throw DimensionError("concat: incompatible shapes " + shape_str(first.shape) +
                           " vs " + shape_str(nt.shape));
    total += nt.shape[axis];
    needs = needs || nt.needs_grad;
  }
  Node n;
  n.op = Op::kConcat;
  n.shape = axis == 0 ? std::vector<int>{total, fixed} : std::vector<int>{fixed, total};
  n.values.assign(numel(n.shape), 0.0);
  n.i0 = axis;
  int offset = 0;
  for (const Tensor& t : parts) {
    const Node& nt = node(t.id);
    n.in.push_back(t.id);
    if (axis == 0) {
      std::copy(nt.values.begin(), nt.values.end(),
                n.values.begin() + static_cast<std::size_t>(offset) * fixed);
      offset += nt.shape[0];
    } else {
      int r = nt.shape[0], c = nt.shape[1];
      for (int i = 0; i < r; ++i)
        std::copy(nt.values.begin() + static_cast<std::size_t>(i) * c,
                  nt.values.begin() + static_cast<std::size_t>(i + 1) * c,
                  n.values.begin() + static_cast<std::size_t>(i) * total + offset);
      offset += c;
    }
  }
  n.needs_grad = needs;
  return push(std::move(n));
}

Tensor Tape::slice_rows(Tensor a, int r0, int r1) {
  const Node& na = node(a.id);
  if (r0 < 0 || r1 > na.shape[0] || r0 >= r1)
    throw DimensionError("slice_rows: [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ") out of range for " + shape_str(na.shape));
  int c = na.shape[1];
  Node n;
  n.op = Op::kSliceRows;
  n.shape = {r1 - r0, c};
  n.values.assign(na.values.begin() + static_cast<std::size_t>(r0) * c,
                  na.values.begin() + static_cast<std::size_t>(r1) * c);
  n.in = {a.id};
  n.i0 = r0;
  n.i1 = r1;
  n.needs_grad = na.needs_grad;
  return push(std::move(n));
}

Tensor Tape::slice_cols(Tensor a, int c0, int c1) {
  const Node& na = node(a.id);
  if (c0 < 0 || c1 > na.shape[1] || c0 >= c1)
    throw DimensionError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") out of range for " + shape_str(na.shape));
  int r = na.shape[0], c = na.shape[1], w = c1 - c0;
  Node n;
  n.op = Op::kSliceCols;
  n.shape = {r, w};
  n.values.assign(static_cast<std::size_t>(r) * w, 0.0);
  for (int i = 0; i < r; ++i)
    std::copy(na.values.begin() + static_cast<std::size_t>(i) * c + c0,
              na.values.begin() + static_cast<std::size_t>(i) * c + c1,
              n.values.begin() + static_cast<std::size_t>(i) * w);
  n.in = {a.id};
  n.i0 = c0;
  n.i1 = c1;
  n.needs_grad = na.needs_grad;
  return push(std::move(n));
}

Tensor Tape::dropout(Tensor a, double rate, bool training, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout: rate " + std::to_string(rate) + " outside [0,1)");
  const Node& na = node(a.id);
  Node n;
  n.op = Op::kDropout;
  n.shape = na.shape;
  n.values.resize(na.values.size());
  n.aux.assign(na.values.size(), 1.0);
  if (training && rate > 0.0) {
    double keep = 1.0 - rate;
    for (std::size_t i = 0; i < n.values.size(); ++i) {
      double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      n.aux[i] = u < rate ? 0.0 : 1.0 / keep;
    }
  }
  for (std::size_t i = 0; i < n.values.size(); ++i) n.values[i] = na.values[i] * n.aux[i];
  n.in = {a.id};
  n.needs_grad = na.needs_grad;
  return push(std::move(n));
}

Tensor Tape::sum(Tensor a) {
  const Node& na = node(a.id);
  double s = 0.0;
  for (double x : na.values) s += x;
  Node n;
  n.op = Op::kSum;
  n.shape = {1, 1};
  n.values = {s};
  n.in = {a.id};
  n.needs_grad = na.needs_grad;
  return push(std::move(n));
}

Tensor Tape::mean(Tensor a) {
  const Node& na = node(a.id);
  double s = 0.0;
  for (double x : na.values) s += x;
  Node n;
  n.op = Op::kMean;
  n.shape = {1, 1};
  n.values = {s / static_cast<double>(na.values.size())};
  n.in = {a.id};
  n.needs_grad = na.needs_grad;
  return push(std::move(n));
}

void Tape::backward(Tensor root) {
  if (root.tape != this) throw UsageError("backward: root from a different tape");
  Node& r = node(root.id);
  if (r.values.size() != 1)
    throw UsageError("backward: root must be scalar, got " + shape_str(r.shape));
  // Each call is a fresh pass over scratch grads that is then added to the
  // persistent grads, so repeated backward accumulates (doubles) exactly.
  std::vector<std::vector<double>> saved(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    saved[i] = std::move(nodes_[i].grad);
    nodes_[i].grad.assign(nodes_[i].values.size(), 0.0);
  }
  node(root.id).grad[0] = 1.0;
  for (int id = root.id; id >= 0; --id) backward_node(id);
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    for (std::size_t j = 0; j < saved[i].size(); ++j) nodes_[i].grad[j] += saved[i][j];
}

void Tape::backward_node(int id) {
  Node& n = node(id);
  if (!n.needs_grad) return;
  switch (n.op) {
    case Op::kConstant:
    case Op::kInput:
    case Op::kLeaf:
      break;
    case Op::kMatmul: {
      Node& a = node(n.in[0]);
      Node& b = node(n.in[1]);
      int m = a.shape[0], k = a.shape[1], p = b.shape[1];
      if (a.needs_grad) {
        // a.grad += g . b^T
        for (int i = 0; i < m; ++i)
          for (int l = 0; l < k; ++l) {
            double s = 0.0;
            const double* grow = &n.grad[static_cast<std::size_t>(i) * p];
            const double* brow = &b.values[static_cast<std::size_t>(l) * p];
            for (int j = 0; j < p; ++j) s += grow[j] * brow[j];
            a.grad[static_cast<std::size_t>(i) * k + l] += s;
          }
      }
      if (b.needs_grad) {
        // b.grad += a^T . g
        for (int i = 0; i < m; ++i)
          for (int l = 0; l < k; ++l) {
            double av = a.values[static_cast<std::size_t>(i) * k + l];
            if (av == 0.0) continue;
            const double* grow = &n.grad[static_cast<std::size_t>(i) * p];
            double* brow = &b.grad[static_cast<std::size_t>(l) * p];
            for (int j = 0; j < p; ++j) brow[j] += av * grow[j];
          }
      }
      break;
    }
    case Op::kTranspose: {
      Node& a = node(n.in[0]);
      if (!a.needs_grad) break;
      int r = n.shape[0], c = n.shape[1];
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          a.grad[static_cast<std::size_t>(j) * r + i] += n.grad[static_cast<std::size_t>(i) * c + j];
      break;
    }
    case Op::kAdd: {
      Node& a = node(n.in[0]);
      Node& b = node(n.in[1]);
      if (a.needs_grad)
        for (std::size_t i = 0; i < n.grad.size(); ++i) a.grad[i] += n.grad[i];
      if (b.needs_grad)
        for (std::size_t i = 0; i < n.grad.size(); ++i) b.grad[i] += n.grad[i];
      break;
    }
    case Op::kSub: {
      Node& a = node(n.in[0]);
      Node& b = node(n.in[1]);
      if (a.needs_grad)
        for (std::size_t i = 0; i < n.grad.size(); ++i) a.grad[i] += n.grad[i];
      if (b.needs_grad)
        for (std::size_t i = 0; i < n.grad.size(); ++i) b.grad[i] -= n.grad[i];
      break;
    }
    case Op::kMul: {
      Node& a = node(n.in[0]);
      Node& b = node(n.in[1]);
      if (a.needs_grad)
        for (std::size_t i = 0; i < n.grad.size(); ++i) a.grad[i] += n.grad[i] * b.values[i];
      if (b.needs_grad)
        for (std::size_t i = 0; i < n.grad.size(); ++i) b.grad[i] += n.grad[i] * a.values[i];
      break;
    }
    case Op::kTanh: {
      Node& a = node(n.in[0]);
      if (!a.needs_grad) break;
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        a.grad[i] += n.grad[i] * (1.0 - n.values[i] * n.values[i]);
      break;
    }
    case Op::kSigmoid: {
      Node& a = node(n.in[0]);
      if (!a.needs_grad) break;
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        a.grad[i] += n.grad[i] * n.values[i] * (1.0 - n.values[i]);
      break;
    }
    case Op::kExp: {
      Node& a = node(n.in[0]);
      if (!a.needs_grad) break;
      for (std::size_t i = 0; i < n.grad.size(); ++i) a.grad[i] += n.grad[i] * n.values[i];
      break;
    }
    case Op::kLog: {
      Node& a = node(n.in[0]);
      if (!a.needs_grad) break;
      for (std::size_t i = 0; i < n.grad.size(); ++i) a.grad[i] += n.grad[i] / a.values[i];
      break;
    }
    case Op::kScale: {
      Node& a = node(n.in[0]);
      if (!a.needs_grad) break;
      for (std::size_t i = 0; i < n.grad.size(); ++i) a.grad[i] += n.grad[i] * n.c;
      break;
    }
    case Op::kAddConst: {
      Node& a = node(n.in[0]);
      if (!a.needs_grad) break;
      for (std::size_t i = 0; i < n.grad.size(); ++i) a.grad[i] += n.grad[i];
      break;
    }
    case Op::kSoftmax: {
      Node& a = node(n.in[0]);
      if (!a.needs_grad) break;
      int r = n.shape[0], c = n.shape[1];
      for (int i = 0; i < r; ++i) {
        const double* y = &n.values[static_cast<std::size_t>(i) * c];
        const double* g = &n.grad[static_cast<std::size_t>(i) * c];
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += g[j] * y[j];
        double* ag = &a.grad[static_cast<std::size_t>(i) * c];
        for (int j = 0; j < c; ++j) ag[j] += y[j] * (g[j] - dot);
      }
      break;
    }
    case Op::kConcat: {
      int axis = n.i0;
      int offset = 0;
      for (int in_id : n.in) {
        Node& a = node(in_id);
        if (axis == 0) {
          int fixed = n.shape[1];
          if (a.needs_grad)
            for (std::size_t i = 0; i < a.values.size(); ++i)
              a.grad[i] += n.grad[static_cast<std::size_t>(offset) * fixed + i];
          offset += a.shape[0];
        } else {
          int r = a.shape[0], c = a.shape[1], total = n.shape[1];
          if (a.needs_grad)
            for (int i = 0; i < r; ++i)
              for (int j = 0; j < c; ++j)
                a.grad[static_cast<std::size_t>(i) * c + j] +=
                    n.grad[static_cast<std::size_t>(i) * total + offset + j];
          offset += c;
        }
      }
      break;
    }
    case Op::kSliceRows: {
      Node& a = node(n.in[0]);
      if (!a.needs_grad) break;
      int c = a.shape[1];
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        a.grad[static_cast<std::size_t>(n.i0) * c + i] += n.grad[i];
      break;
    }
    case Op::kSliceCols: {
      Node& a = node(n.in[0]);
      if (!a.needs_grad) break;
      int r = n.shape[0], w = n.shape[1], c = a.shape[1];
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j)
          a.grad[static_cast<std::size_t>(i) * c + n.i0 + j] +=
              n.grad[static_cast<std::size_t>(i) * w + j];
      break;
    }
    case Op::kDropout: {
      Node& a = node(n.in[0]);
      if (!a.needs_grad) break;
      for (std::size_t i = 0; i < n.grad.size(); ++i) a.grad[i] += n.grad[i] * n.aux[i];
      break;
    }
    case Op::kSum: {
      Node& a = node(n.in[0]);
      if (!a.needs_grad) break;
      for (std::size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += n.grad[0];
      break;
    }
    case Op::kMean: {
      Node& a = node(n.in[0]);
      if (!a.needs_grad) break;
      double g = n.grad[0] / static_cast<double>(a.grad.size());
      for (std::size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += g;
      break;
    }
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

void Tape::add_param_grads(double scale) {
  for (Node& n : nodes_) {
    if (n.op != Op::kLeaf) continue;
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.param->grad[i] += scale * n.grad[i];
  }
}

double finite_diff_check(const std::vector<Param*>& params,
                         const std::function<double()>& loss_and_grad,
                         double step) {
  if (step <= 0.0) throw ConfigError("finite_diff_check: step must be positive");
  for (Param* p : params) p->zero_grad();
  loss_and_grad();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad);

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param* p = params[pi];
    for (std::size_t i = 0; i < p->size(); ++i) {
      double saved = p->value[i];
      p->value[i] = saved + step;
      p->zero_grad();
      double fp = loss_and_grad();
      p->value[i] = saved - step;
      p->zero_grad();
      double fm = loss_and_grad();
      p->value[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw DomainError("finite_diff_check: non-finite loss at perturbed point");
      double numeric = (fp - fm) / (2.0 * step);
      double a = analytic[pi][i];
      double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    p->grad = analytic[pi];
  }
  return worst;
}

}  // namespace hcan
