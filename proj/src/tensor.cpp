#include "reldyn/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace reldyn::ad {

namespace {
std::atomic<uint64_t> g_tape_serial{1};

void matmul_acc(const double* a, const double* b, double* c, int R, int K,
                int C) {
  // c[R,C] += a[R,K] * b[K,C], row-major, ikj order for locality.
  for (int i = 0; i < R; ++i) {
    const double* arow = a + static_cast<long>(i) * K;
    double* crow = c + static_cast<long>(i) * C;
    for (int k = 0; k < K; ++k) {
      double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b + static_cast<long>(k) * C;
      for (int j = 0; j < C; ++j) crow[j] += aik * brow[j];
    }
  }
}

void matmul_nt_acc(const double* a, const double* b, double* c, int R, int K,
                   int C) {
  // c[R,C] += a[R,K] * b[C,K]^T
  for (int i = 0; i < R; ++i) {
    const double* arow = a + static_cast<long>(i) * K;
    double* crow = c + static_cast<long>(i) * C;
    for (int j = 0; j < C; ++j) {
      const double* brow = b + static_cast<long>(j) * K;
      double acc = 0.0;
      for (int k = 0; k < K; ++k) acc += arow[k] * brow[k];
      crow[j] += acc;
    }
  }
}

// c[K,C] += a[R,K]^T * g[R,C]
void matmul_tn_acc(const double* a, const double* g, double* c, int R, int K,
                   int C) {
  for (int r = 0; r < R; ++r) {
    const double* arow = a + static_cast<long>(r) * K;
    const double* grow = g + static_cast<long>(r) * C;
    for (int k = 0; k < K; ++k) {
      double ark = arow[k];
      if (ark == 0.0) continue;
      double* crow = c + static_cast<long>(k) * C;
      for (int j = 0; j < C; ++j) crow[j] += ark * grow[j];
    }
  }
}

double clip_prob(double p) {
  return std::min(1.0 - kProbClip, std::max(kProbClip, p));
}

struct GramSchmidt {
  bool degenerate = false;
  double b1[3], b2[3], b3[3];
  double a_norm = 0.0, u_norm = 0.0, s = 0.0;
  double a[3], c[3], u[3];
};

GramSchmidt gram_schmidt(const double* in) {
  GramSchmidt g;
  for (int i = 0; i < 3; ++i) {
    g.a[i] = in[i];
    g.c[i] = in[3 + i];
  }
  g.a_norm = std::sqrt(g.a[0] * g.a[0] + g.a[1] * g.a[1] + g.a[2] * g.a[2]);
  if (g.a_norm < 1e-8) {
    g.degenerate = true;
    return g;
  }
  for (int i = 0; i < 3; ++i) g.b1[i] = g.a[i] / g.a_norm;
  g.s = g.b1[0] * g.c[0] + g.b1[1] * g.c[1] + g.b1[2] * g.c[2];
  for (int i = 0; i < 3; ++i) g.u[i] = g.c[i] - g.s * g.b1[i];
  g.u_norm = std::sqrt(g.u[0] * g.u[0] + g.u[1] * g.u[1] + g.u[2] * g.u[2]);
  if (g.u_norm < 1e-8) {
    g.degenerate = true;
    return g;
  }
  for (int i = 0; i < 3; ++i) g.b2[i] = g.u[i] / g.u_norm;
  g.b3[0] = g.b1[1] * g.b2[2] - g.b1[2] * g.b2[1];
  g.b3[1] = g.b1[2] * g.b2[0] - g.b1[0] * g.b2[2];
  g.b3[2] = g.b1[0] * g.b2[1] - g.b1[1] * g.b2[0];
  return g;
}

}  // namespace

std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tape::Tape() : serial_(g_tape_serial.fetch_add(1)) {}

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size() - 1);
}

Tape::Node& Tape::at(Var v) {
  check(v.id >= 0 && v.id < static_cast<int>(nodes_.size()),
        "invalid tape handle ", v.id);
  return nodes_[static_cast<size_t>(v.id)];
}
const Tape::Node& Tape::at(Var v) const {
  check(v.id >= 0 && v.id < static_cast<int>(nodes_.size()),
        "invalid tape handle ", v.id);
  return nodes_[static_cast<size_t>(v.id)];
}

Var Tape::watch(Tensor& t) {
  if (t.requires_grad && t.tape_serial == serial_ && t.tape_id >= 0)
    return Var{t.tape_id};
  Node n;
  n.kind = OpKind::Leaf;
  n.value = t;  // copy; tape owns its values
  n.needs_grad = t.requires_grad;
  int id = push(std::move(n));
  if (t.requires_grad) {
    t.tape_id = id;
    t.tape_serial = serial_;
  }
  return Var{id};
}

Var Tape::constant(const Tensor& t) {
  Node n;
  n.kind = OpKind::Leaf;
  n.value = t;
  n.value.requires_grad = false;
  n.needs_grad = false;
  return Var{push(std::move(n))};
}

Var Tape::matmul(Var a, Var b, bool transpose_b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  check(na.value.shape.size() == 2 && nb.value.shape.size() == 2,
        "matmul needs rank-2 operands, got ", shape_str(na.value.shape), " and ",
        shape_str(nb.value.shape));
  int R = na.value.shape[0], K = na.value.shape[1];
  int C = transpose_b ? nb.value.shape[0] : nb.value.shape[1];
  int Kb = transpose_b ? nb.value.shape[1] : nb.value.shape[0];
  check(K == Kb, "matmul inner dimension mismatch: ", shape_str(na.value.shape),
        transpose_b ? " x T" : " x ", shape_str(nb.value.shape));
  Node n;
  n.kind = OpKind::MatMul;
  n.inputs = {a.id, b.id};
  n.int_arg = transpose_b ? 1 : 0;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.value = Tensor::zeros({R, C});
  if (transpose_b)
    matmul_nt_acc(na.value.data.data(), nb.value.data.data(),
                  n.value.data.data(), R, K, C);
  else
    matmul_acc(na.value.data.data(), nb.value.data.data(),
               n.value.data.data(), R, K, C);
  return Var{push(std::move(n))};
}

Var Tape::add(Var a, Var b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  bool same = na.value.shape == nb.value.shape;
  bool bcast = na.value.shape.size() == 2 && nb.value.shape.size() == 2 &&
               nb.value.shape[0] == 1 &&
               nb.value.shape[1] == na.value.shape[1];
  check(same || bcast, "add shape mismatch: ", shape_str(na.value.shape),
        " vs ", shape_str(nb.value.shape));
  Node n;
  n.kind = OpKind::Add;
  n.inputs = {a.id, b.id};
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.value = na.value;
  n.value.requires_grad = false;
  n.value.tape_id = -1;
  if (same) {
    for (long i = 0; i < n.value.size(); ++i)
      n.value.data[static_cast<size_t>(i)] += nb.value.data[static_cast<size_t>(i)];
  } else {
    int R = na.value.shape[0], D = na.value.shape[1];
    for (int r = 0; r < R; ++r)
      for (int d = 0; d < D; ++d)
        n.value.data[static_cast<size_t>(r) * D + d] += nb.value.data[static_cast<size_t>(d)];
  }
  return Var{push(std::move(n))};
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  check(!parts.empty(), "concat of zero tensors");
  int R = at(parts[0]).value.shape[0];
  int D = 0;
  bool needs = false;
  for (Var p : parts) {
    const Node& np = at(p);
    check(np.value.shape.size() == 2 && np.value.shape[0] == R,
          "concat_cols row mismatch: ", shape_str(np.value.shape), " vs ", R,
          " rows");
    D += np.value.shape[1];
    needs = needs || np.needs_grad;
  }
  Node n;
  n.kind = OpKind::ConcatCols;
  for (Var p : parts) n.inputs.push_back(p.id);
  n.needs_grad = needs;
  n.value = Tensor::zeros({R, D});
  int off = 0;
  for (Var p : parts) {
    const Node& np = at(p);
    int d = np.value.shape[1];
    for (int r = 0; r < R; ++r)
      std::copy_n(np.value.data.data() + static_cast<long>(r) * d, d,
                  n.value.data.data() + static_cast<long>(r) * D + off);
    off += d;
  }
  return Var{push(std::move(n))};
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  check(!parts.empty(), "concat of zero tensors");
  int D = at(parts[0]).value.shape[1];
  int R = 0;
  bool needs = false;
  for (Var p : parts) {
    const Node& np = at(p);
    check(np.value.shape.size() == 2 && np.value.shape[1] == D,
          "concat_rows col mismatch: ", shape_str(np.value.shape), " vs ", D,
          " cols");
    R += np.value.shape[0];
    needs = needs || np.needs_grad;
  }
  Node n;
  n.kind = OpKind::ConcatRows;
  for (Var p : parts) n.inputs.push_back(p.id);
  n.needs_grad = needs;
  n.value = Tensor::zeros({R, D});
  long off = 0;
  for (Var p : parts) {
    const Node& np = at(p);
    std::copy(np.value.data.begin(), np.value.data.end(),
              n.value.data.begin() + off);
    off += np.value.size();
  }
  return Var{push(std::move(n))};
}

Var Tape::slice_cols(Var a, int begin, int len) {
  const Node& na = at(a);
  check(na.value.shape.size() == 2, "slice_cols needs rank-2, got ",
        shape_str(na.value.shape));
  int R = na.value.shape[0], D = na.value.shape[1];
  check(begin >= 0 && len > 0 && begin + len <= D, "slice_cols [", begin, ",",
        begin + len, ") out of range for ", shape_str(na.value.shape));
  Node n;
  n.kind = OpKind::SliceCols;
  n.inputs = {a.id};
  n.scalar_arg = begin;
  n.int_arg = len;
  n.needs_grad = na.needs_grad;
  n.value = Tensor::zeros({R, len});
  for (int r = 0; r < R; ++r)
    std::copy_n(na.value.data.data() + static_cast<long>(r) * D + begin, len,
                n.value.data.data() + static_cast<long>(r) * len);
  return Var{push(std::move(n))};
}

Var Tape::unary(OpKind k, Var a, std::vector<int> out_shape,
                std::vector<double> out_data) {
  Node n;
  n.kind = k;
  n.inputs = {a.id};
  n.needs_grad = at(a).needs_grad;
  n.value = Tensor(std::move(out_shape), std::move(out_data));
  return Var{push(std::move(n))};
}

Var Tape::relu(Var a) {
  const Tensor& x = at(a).value;
  std::vector<double> out(x.data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  return unary(OpKind::Relu, a, x.shape, std::move(out));
}

Var Tape::sigmoid(Var a) {
  const Tensor& x = at(a).value;
  std::vector<double> out(x.data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x.data[i]));
  return unary(OpKind::Sigmoid, a, x.shape, std::move(out));
}

Var Tape::mean_rows(Var a) {
  const Tensor& x = at(a).value;
  check(x.shape.size() == 2, "mean_rows needs rank-2, got ", shape_str(x.shape));
  int R = x.shape[0], D = x.shape[1];
  std::vector<double> out(static_cast<size_t>(D), 0.0);
  for (int r = 0; r < R; ++r)
    for (int d = 0; d < D; ++d) out[static_cast<size_t>(d)] += x.data[static_cast<size_t>(r) * D + d];
  for (double& v : out) v /= R;
  return unary(OpKind::MeanRows, a, {1, D}, std::move(out));
}

Var Tape::max_rows(Var a) {
  const Tensor& x = at(a).value;
  check(x.shape.size() == 2, "max_rows needs rank-2, got ", shape_str(x.shape));
  int R = x.shape[0], D = x.shape[1];
  std::vector<double> out(static_cast<size_t>(D));
  for (int d = 0; d < D; ++d) {
    double best = x.data[static_cast<size_t>(d)];
    for (int r = 1; r < R; ++r) best = std::max(best, x.data[static_cast<size_t>(r) * D + d]);
    out[static_cast<size_t>(d)] = best;
  }
  return unary(OpKind::MaxRows, a, {1, D}, std::move(out));
}

Var Tape::sum(Var a) {
  const Tensor& x = at(a).value;
  double s = 0.0;
  for (double v : x.data) s += v;
  return unary(OpKind::Sum, a, {1}, {s});
}

Var Tape::scale(Var a, double c) {
  const Tensor& x = at(a).value;
  std::vector<double> out(x.data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = c * x.data[i];
  Var v = unary(OpKind::Scale, a, x.shape, std::move(out));
  at(v).scalar_arg = c;
  return v;
}

Var Tape::squared_l2(Var a, Var b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  check(na.value.shape == nb.value.shape, "squared_l2 shape mismatch: ",
        shape_str(na.value.shape), " vs ", shape_str(nb.value.shape));
  double s = 0.0;
  for (long i = 0; i < na.value.size(); ++i) {
    double d = na.value.data[static_cast<size_t>(i)] - nb.value.data[static_cast<size_t>(i)];
    s += d * d;
  }
  Node n;
  n.kind = OpKind::SquaredL2;
  n.inputs = {a.id, b.id};
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.value = Tensor::scalar(s);
  return Var{push(std::move(n))};
}

Var Tape::bce(Var probs, const Tensor& labels) {
  const Node& np = at(probs);
  check(np.value.shape == labels.shape, "bce shape mismatch: probs ",
        shape_str(np.value.shape), " vs labels ", shape_str(labels.shape));
  double s = 0.0;
  for (long i = 0; i < labels.size(); ++i) {
    double p = clip_prob(np.value.data[static_cast<size_t>(i)]);
    double y = labels.data[static_cast<size_t>(i)];
    s += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  }
  Node n;
  n.kind = OpKind::Bce;
  n.inputs = {probs.id};
  n.needs_grad = np.needs_grad;
  n.saved = labels;
  n.value = Tensor::scalar(s);
  return Var{push(std::move(n))};
}

Var Tape::rot6d(Var a) {
  const Tensor& x = at(a).value;
  check(x.shape == std::vector<int>({1, 6}), "rot6d needs [1x6], got ",
        shape_str(x.shape));
  GramSchmidt g = gram_schmidt(x.data.data());
  std::vector<double> out(9, 0.0);
  if (g.degenerate) {
    out[0] = out[4] = out[8] = 1.0;  // identity fallback, zero gradient
  } else {
    // rows of R: R[i][j]; columns are b1,b2,b3.
    double* R = out.data();
    for (int i = 0; i < 3; ++i) {
      R[i * 3 + 0] = g.b1[i];
      R[i * 3 + 1] = g.b2[i];
      R[i * 3 + 2] = g.b3[i];
    }
  }
  return unary(OpKind::Rot6d, a, {1, 9}, std::move(out));
}

const Tensor& Tape::value(Var v) const { return at(v).value; }

const Tensor& Tape::grad(Var v) const {
  const Node& n = at(v);
  check(ran_backward_, "grad requested before backward");
  check(n.grad.size() > 0, "node ", v.id, " carries no gradient");
  return n.grad;
}

const Tensor& Tape::grad(const Tensor& t) const {
  check(t.requires_grad, "gradient requested for a requires_grad=false tensor");
  check(t.tape_serial == serial_ && t.tape_id >= 0,
        "tensor is not watched by this tape");
  return grad(Var{t.tape_id});
}

void Tape::backward(Var loss) {
  Node& ln = at(loss);
  check(ln.value.is_scalar(), "backward needs a scalar loss, got ",
        shape_str(ln.value.shape));
  // Allocate grads along the needs_grad subgraph only; requires_grad=false
  // leaves never receive one.
  for (Node& n : nodes_)
    if (n.needs_grad) n.grad = Tensor::zeros(n.value.shape);
  if (!ln.needs_grad) ln.grad = Tensor::zeros(ln.value.shape);
  ln.grad.data[0] = 1.0;
  ran_backward_ = true;

  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs_grad || n.kind == OpKind::Leaf) continue;
    const Tensor& g = n.grad;
    auto in = [&](int k) -> Node& { return nodes_[static_cast<size_t>(n.inputs[static_cast<size_t>(k)])]; };
    auto gbuf = [&](int k) -> double* { return in(k).grad.data.data(); };
    auto needs = [&](int k) { return in(k).needs_grad; };

    switch (n.kind) {
      case OpKind::MatMul: {
        const Tensor& av = in(0).value;
        const Tensor& bv = in(1).value;
        int R = av.shape[0], K = av.shape[1], C = n.value.shape[1];
        if (n.int_arg == 0) {
          // y = a*b: da += g*b^T ; db += a^T*g
          if (needs(0)) matmul_nt_acc(g.data.data(), bv.data.data(), gbuf(0), R, C, K);
          if (needs(1)) matmul_tn_acc(av.data.data(), g.data.data(), gbuf(1), R, K, C);
        } else {
          // y = a*b^T (b is [C,K]): da += g*b ; db += g^T*a
          if (needs(0)) matmul_acc(g.data.data(), bv.data.data(), gbuf(0), R, C, K);
          if (needs(1)) matmul_tn_acc(g.data.data(), av.data.data(), gbuf(1), R, C, K);
        }
        break;
      }
      case OpKind::Add: {
        if (needs(0))
          for (long i = 0; i < g.size(); ++i) gbuf(0)[i] += g.data[static_cast<size_t>(i)];
        if (needs(1)) {
          const Tensor& bv = in(1).value;
          if (bv.shape == n.value.shape) {
            for (long i = 0; i < g.size(); ++i) gbuf(1)[i] += g.data[static_cast<size_t>(i)];
          } else {
            int R = n.value.shape[0], D = n.value.shape[1];
            for (int r = 0; r < R; ++r)
              for (int d = 0; d < D; ++d)
                gbuf(1)[d] += g.data[static_cast<size_t>(r) * D + d];
          }
        }
        break;
      }
      case OpKind::ConcatCols: {
        int R = n.value.shape[0], D = n.value.shape[1];
        int off = 0;
        for (size_t k = 0; k < n.inputs.size(); ++k) {
          Node& src = nodes_[static_cast<size_t>(n.inputs[k])];
          int d = src.value.shape[1];
          if (src.needs_grad)
            for (int r = 0; r < R; ++r)
              for (int j = 0; j < d; ++j)
                src.grad.data[static_cast<size_t>(r) * d + j] +=
                    g.data[static_cast<size_t>(r) * D + off + j];
          off += d;
        }
        break;
      }
      case OpKind::ConcatRows: {
        long off = 0;
        for (size_t k = 0; k < n.inputs.size(); ++k) {
          Node& src = nodes_[static_cast<size_t>(n.inputs[k])];
          if (src.needs_grad)
            for (long i = 0; i < src.value.size(); ++i)
              src.grad.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(off + i)];
          off += src.value.size();
        }
        break;
      }
      case OpKind::SliceCols: {
        if (needs(0)) {
          int R = n.value.shape[0], len = n.int_arg;
          int D = in(0).value.shape[1];
          int begin = static_cast<int>(n.scalar_arg);
          for (int r = 0; r < R; ++r)
            for (int j = 0; j < len; ++j)
              gbuf(0)[static_cast<long>(r) * D + begin + j] +=
                  g.data[static_cast<size_t>(r) * len + j];
        }
        break;
      }
      case OpKind::Relu: {
        if (needs(0)) {
          const Tensor& x = in(0).value;
          for (long i = 0; i < g.size(); ++i)
            if (x.data[static_cast<size_t>(i)] > 0.0) gbuf(0)[i] += g.data[static_cast<size_t>(i)];
        }
        break;
      }
      case OpKind::Sigmoid: {
        if (needs(0)) {
          for (long i = 0; i < g.size(); ++i) {
            double s = n.value.data[static_cast<size_t>(i)];
            gbuf(0)[i] += g.data[static_cast<size_t>(i)] * s * (1.0 - s);
          }
        }
        break;
      }
      case OpKind::MeanRows: {
        if (needs(0)) {
          int R = in(0).value.shape[0], D = in(0).value.shape[1];
          for (int r = 0; r < R; ++r)
            for (int d = 0; d < D; ++d)
              gbuf(0)[static_cast<long>(r) * D + d] += g.data[static_cast<size_t>(d)] / R;
        }
        break;
      }
      case OpKind::MaxRows: {
        if (needs(0)) {
          const Tensor& x = in(0).value;
          int R = x.shape[0], D = x.shape[1];
          for (int d = 0; d < D; ++d) {
            int arg = 0;
            double best = x.data[static_cast<size_t>(d)];
            for (int r = 1; r < R; ++r) {
              double v = x.data[static_cast<size_t>(r) * D + d];
              if (v > best) {
                best = v;
                arg = r;
              }
            }
            gbuf(0)[static_cast<long>(arg) * D + d] += g.data[static_cast<size_t>(d)];
          }
        }
        break;
      }
      case OpKind::Sum: {
        if (needs(0)) {
          double g0 = g.data[0];
          for (long i = 0; i < in(0).value.size(); ++i) gbuf(0)[i] += g0;
        }
        break;
      }
      case OpKind::Scale: {
        if (needs(0))
          for (long i = 0; i < g.size(); ++i)
            gbuf(0)[i] += n.scalar_arg * g.data[static_cast<size_t>(i)];
        break;
      }
      case OpKind::SquaredL2: {
        double g0 = g.data[0];
        const Tensor& av = in(0).value;
        const Tensor& bv = in(1).value;
        for (long i = 0; i < av.size(); ++i) {
          double d = 2.0 * (av.data[static_cast<size_t>(i)] - bv.data[static_cast<size_t>(i)]) * g0;
          if (needs(0)) gbuf(0)[i] += d;
          if (needs(1)) gbuf(1)[i] -= d;
        }
        break;
      }
      case OpKind::Bce: {
        if (needs(0)) {
          double g0 = g.data[0];
          const Tensor& pv = in(0).value;
          for (long i = 0; i < pv.size(); ++i) {
            double p = pv.data[static_cast<size_t>(i)];
            double y = n.saved.data[static_cast<size_t>(i)];
            // hard clip: zero slope outside the clip range
            if (p <= kProbClip || p >= 1.0 - kProbClip) continue;
            gbuf(0)[i] += g0 * (-(y / p) + (1.0 - y) / (1.0 - p));
          }
        }
        break;
      }
      case OpKind::Rot6d: {
        if (!needs(0)) break;
        GramSchmidt gs = gram_schmidt(in(0).value.data.data());
        if (gs.degenerate) break;  // constant branch
        // Upstream grads on R laid out rows-major; columns are b1,b2,b3.
        double g1[3], g2[3], g3[3];
        for (int i = 0; i < 3; ++i) {
          g1[i] = g.data[static_cast<size_t>(i) * 3 + 0];
          g2[i] = g.data[static_cast<size_t>(i) * 3 + 1];
          g3[i] = g.data[static_cast<size_t>(i) * 3 + 2];
        }
        // b3 = b1 x b2 contributions
        double gb1[3], gb2[3];
        gb1[0] = g1[0] + (gs.b2[1] * g3[2] - gs.b2[2] * g3[1]);
        gb1[1] = g1[1] + (gs.b2[2] * g3[0] - gs.b2[0] * g3[2]);
        gb1[2] = g1[2] + (gs.b2[0] * g3[1] - gs.b2[1] * g3[0]);
        gb2[0] = g2[0] + (g3[1] * gs.b1[2] - g3[2] * gs.b1[1]);
        gb2[1] = g2[1] + (g3[2] * gs.b1[0] - g3[0] * gs.b1[2]);
        gb2[2] = g2[2] + (g3[0] * gs.b1[1] - g3[1] * gs.b1[0]);
        // b2 = u/|u| : gu = (I - b2 b2^T) gb2 / |u|
        double dot_b2 = gs.b2[0] * gb2[0] + gs.b2[1] * gb2[1] + gs.b2[2] * gb2[2];
        double gu[3];
        for (int i = 0; i < 3; ++i) gu[i] = (gb2[i] - dot_b2 * gs.b2[i]) / gs.u_norm;
        // u = c - s b1, s = b1.c
        double dot_gu_b1 = gu[0] * gs.b1[0] + gu[1] * gs.b1[1] + gu[2] * gs.b1[2];
        double gc[3];
        for (int i = 0; i < 3; ++i) {
          gc[i] = gu[i] - dot_gu_b1 * gs.b1[i];
          gb1[i] += -dot_gu_b1 * gs.c[i] - gs.s * gu[i];
        }
        // b1 = a/|a| : ga = (I - b1 b1^T) gb1 / |a|
        double dot_b1 = gs.b1[0] * gb1[0] + gs.b1[1] * gb1[1] + gs.b1[2] * gb1[2];
        for (int i = 0; i < 3; ++i) {
          gbuf(0)[i] += (gb1[i] - dot_b1 * gs.b1[i]) / gs.a_norm;
          gbuf(0)[3 + i] += gc[i];
        }
        break;
      }
      case OpKind::Leaf:
        break;
    }
  }
}

std::vector<double> finite_difference(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double step) {
  std::vector<double> g(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    double keep = x[i];
    x[i] = keep + step;
    double hi = f(x);
    x[i] = keep - step;
    double lo = f(x);
    x[i] = keep;
    g[i] = (hi - lo) / (2.0 * step);
  }
  return g;
}

}  // namespace reldyn::ad
