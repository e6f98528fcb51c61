#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace daenet {

class Tape;

// Dense row-major tensor of 64-bit reals with optional participation in
// reverse-mode differentiation. Values are immutable once an op has produced
// them (parameter updates go through values_mut between recorded regions);
// gradient buffers are the only mutable state during a backward pass.
//
// Copies are shallow: a Tensor is a handle onto shared storage.
class Tensor {
 public:
  Tensor() = default;

  // Untaped constants.
  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor constant(std::vector<std::size_t> shape,
                         std::vector<double> values);
  static Tensor scalar(double v);

  // Differentiable leaf registered against a tape. Its grad accumulates
  // across backward passes until zero_grad.
  static Tensor leaf(Tape& tape, std::vector<std::size_t> shape,
                     std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return impl_->shape; }
  std::size_t numel() const { return impl_->data.size(); }
  bool defined() const { return impl_ != nullptr; }
  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tape* tape() const { return impl_ ? impl_->tape : nullptr; }

  std::span<const double> values() const { return impl_->data; }
  // In-place mutation of leaf/constant values (optimizer updates). Never
  // call on a tensor produced by a recorded op.
  std::span<double> values_mut() { return impl_->data; }

  std::span<const double> grad() const { return impl_->grad; }
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  void zero_grad();

  // Value of a one-element tensor.
  double item() const;

  // Same storage, no tape, no grad.
  Tensor detach() const;

  // Reverse pass from this scalar: seeds d(this)=1 and accumulates grads of
  // every recorded tensor. Throws on non-scalar or detached tensors.
  void backward();

  std::string shape_str() const;

  struct Impl {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty unless requires_grad
    bool requires_grad = false;
    Tape* tape = nullptr;
  };
  const std::shared_ptr<Impl>& impl() const { return impl_; }

  // Internal: output of a recorded op (grad buffer allocated when rg).
  static Tensor make(Tape* tape, std::vector<std::size_t> shape,
                     std::vector<double> values, bool rg);

 private:
  std::shared_ptr<Impl> impl_;
};

// Ordered record of operations for one reverse-mode pass. Single-threaded;
// independent tapes may live on independent threads.
class Tape {
 public:
  // Register a backward rule; `out_grad` identifies the op output whose
  // adjoint buffer must be cleared before each backward pass.
  void record(std::shared_ptr<Tensor::Impl> out, std::function<void()> backward);
  void run_backward(const std::shared_ptr<Tensor::Impl>& from);
  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::shared_ptr<Tensor::Impl> out;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
};

// ---- differentiable operations ------------------------------------------
// Shape rules are strict: elementwise ops demand identical shapes except
// that a one-element tensor broadcasts against any shape. Mismatches throw
// std::invalid_argument naming the op and both shapes.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor recip(const Tensor& a);
Tensor abs_op(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor norm2(const Tensor& a);
// A: m x k with B: k x n -> m x n; A: m x k with b: k -> m.
Tensor matmul(const Tensor& a, const Tensor& b);
// A^T x without materializing the transpose; A: m x k, x: m -> k.
Tensor matvec_t(const Tensor& a, const Tensor& x);
Tensor transpose(const Tensor& a);
// Flat contiguous slice [offset, offset+len) -> 1-D tensor.
Tensor slice(const Tensor& a, std::size_t offset, std::size_t len);
Tensor concat(std::span<const Tensor> parts);

// Solve G x = r for symmetric positive definite G (m x m). Cholesky;
// retried once with a 1e-10 Tikhonov shift, then throws with a condition
// estimate. Differentiable in both arguments.
Tensor spd_solve(const Tensor& G, const Tensor& r);

// The primitive set exposed as a single dispatcher.
enum class Prim { Add, Sub, Mul, Matmul, Sum, Mean, Norm2, Tanh, Relu, Slice, Concat, Scale };
struct PrimArgs {
  std::size_t offset = 0;  // Slice
  std::size_t len = 0;     // Slice
  double factor = 1.0;     // Scale
};
Tensor forward_primitive(Prim op, std::span<const Tensor> inputs,
                         const PrimArgs& args = {});

// Max over coordinates of |analytic - central difference| / (|analytic| +
// 1e-12) for a scalar-valued f at x. The analytic gradient comes from a
// fresh tape; the differences are plain untaped evaluations.
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               std::span<const double> x, double h);

}  // namespace daenet
