#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "reldyn/common.hpp"

namespace reldyn::ad {

// Dense row-major float64 tensor. Rank 0..2; a scalar is shape {1}.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  bool requires_grad = false;
  // Handle into the tape that currently watches this tensor (leaf node id),
  // valid only while the matching tape_serial is alive.
  int tape_id = -1;
  uint64_t tape_serial = 0;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    check(numel(shape) == static_cast<long>(data.size()),
          "tensor shape/data mismatch: shape product ", numel(shape),
          " vs data length ", data.size());
  }

  static long numel(const std::vector<int>& s) {
    long n = 1;
    for (int d : s) n *= d;
    return n;
  }
  long size() const { return static_cast<long>(data.size()); }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  bool is_scalar() const { return size() == 1; }

  static Tensor zeros(std::vector<int> s) {
    std::vector<double> d(static_cast<size_t>(numel(s)), 0.0);
    return Tensor(std::move(s), std::move(d));
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor row(std::vector<double> v) {
    int n = static_cast<int>(v.size());
    return Tensor({1, n}, std::move(v));
  }
};

std::string shape_str(const std::vector<int>& s);

enum class OpKind {
  Leaf,
  MatMul,      // a[R,K] x b[K,C]; transpose_b: a[R,K] x b[C,K]^T
  Add,         // same shape, or b is a [1,D] row broadcast over a[R,D]
  ConcatCols,  // n-ary, [R,Di] -> [R, sum Di]
  ConcatRows,  // n-ary, [Ri,D] -> [sum Ri, D]
  SliceCols,   // [R,D] -> [R,len] starting at col begin
  Relu,
  Sigmoid,
  MeanRows,    // [R,D] -> [1,D]
  MaxRows,     // [R,D] -> [1,D], grad routed to first argmax
  Sum,         // -> scalar
  Scale,       // elementwise multiply by constant
  SquaredL2,   // sum((a-b)^2) -> scalar
  Bce,         // binary cross-entropy vs constant labels, summed -> scalar
  Rot6d,       // [1,6] -> [1,9] Gram-Schmidt rotation (rows of R flattened)
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Probabilities are clamped to this range before any log.
inline constexpr double kProbClip = 1e-7;

// Reverse-mode tape. One tape per training step / inference pass; build the
// graph forward, call backward(loss) once, then discard.
class Tape {
 public:
  Tape();

  // Registers a tensor as a leaf. Watching the same (requires_grad) tensor
  // twice on one tape returns the same node, so parameter gradients
  // accumulate in a single place.
  Var watch(Tensor& t);
  // Leaf from a value the caller does not need gradients for.
  Var constant(const Tensor& t);
  Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

  Var matmul(Var a, Var b, bool transpose_b = false);
  Var add(Var a, Var b);
  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);
  Var slice_cols(Var a, int begin, int len);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var mean_rows(Var a);
  Var max_rows(Var a);
  Var sum(Var a);
  Var scale(Var a, double c);
  Var squared_l2(Var a, Var b);
  Var bce(Var probs, const Tensor& labels);
  Var rot6d(Var a);

  // Convenience: a + (-1) * b.
  Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

  const Tensor& value(Var v) const;
  // Gradient of the last backward() loss w.r.t. node v.
  const Tensor& grad(Var v) const;
  // Gradient for a watched tensor (via its tape handle).
  const Tensor& grad(const Tensor& t) const;

  void backward(Var loss);

  uint64_t serial() const { return serial_; }
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    OpKind kind = OpKind::Leaf;
    std::vector<int> inputs;
    Tensor value;
    Tensor grad;            // allocated during backward
    bool needs_grad = false;
    double scalar_arg = 0;  // Scale factor / SliceCols begin
    int int_arg = 0;        // SliceCols len
    Tensor saved;           // Bce labels
  };

  int push(Node n);
  Node& at(Var v);
  const Node& at(Var v) const;
  Var unary(OpKind k, Var a, std::vector<int> out_shape,
            std::vector<double> out_data);

  std::vector<Node> nodes_;
  uint64_t serial_;
  bool ran_backward_ = false;
};

// Central finite-difference gradient of f at x (test oracle helper; lives
// here so both the unit tests and the acceptance suite share it).
std::vector<double> finite_difference(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double step = 1e-5);

}  // namespace reldyn::ad
