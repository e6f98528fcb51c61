#include "daenet/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "daenet/kernels.hpp"

namespace daenet {

namespace {

const kernels::Ops& K() { return kernels::active(); }

std::string shape_to_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                              a.shape_str() + " vs " + b.shape_str());
}

std::size_t numel_of(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

Tape* merge_tape(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->defined()) continue;
    Tape* tt = t->tape();
    if (tt == nullptr) continue;
    if (tape == nullptr) tape = tt;
    else if (tape != tt)
      throw std::invalid_argument("op combines tensors from different tapes");
  }
  return tape;
}

bool any_rg(std::initializer_list<const Tensor*> ts) {
  for (const Tensor* t : ts)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

// Accumulate src into the grad buffer of impl if it participates.
void add_grad(Tensor::Impl& impl, const double* src, std::size_t n) {
  if (!impl.requires_grad) return;
  K().axpy(1.0, src, impl.grad.data(), n);
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = numel_of(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::constant(std::vector<std::size_t> shape,
                        std::vector<double> values) {
  if (values.size() != numel_of(shape))
    throw std::invalid_argument("tensor: data length does not match shape " +
                                shape_to_str(shape));
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::move(values);
  return t;
}

Tensor Tensor::scalar(double v) { return constant({1}, {v}); }

Tensor Tensor::leaf(Tape& tape, std::vector<std::size_t> shape,
                    std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.impl_->requires_grad = true;
  t.impl_->tape = &tape;
  t.impl_->grad.assign(t.impl_->data.size(), 0.0);
  return t;
}

Tensor Tensor::make(Tape* tape, std::vector<std::size_t> shape,
                    std::vector<double> values, bool rg) {
  Tensor t = constant(std::move(shape), std::move(values));
  if (rg && tape != nullptr) {
    t.impl_->requires_grad = true;
    t.impl_->tape = tape;
    t.impl_->grad.assign(t.impl_->data.size(), 0.0);
  }
  return t;
}

void Tensor::zero_grad() {
  if (impl_ && !impl_->grad.empty())
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1)
    throw std::invalid_argument("item: tensor has " + std::to_string(numel()) +
                                " elements, expected 1");
  return impl_->data[0];
}

Tensor Tensor::detach() const {
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = impl_->shape;
  t.impl_->data = impl_->data;  // value copy keeps detached views immutable
  return t;
}

void Tensor::backward() {
  if (numel() != 1)
    throw std::invalid_argument(
        "backward: output must be scalar, got shape " + shape_str());
  if (impl_->tape == nullptr)
    throw std::invalid_argument("backward: tensor is detached from any tape");
  impl_->tape->run_backward(impl_);
}

std::string Tensor::shape_str() const { return shape_to_str(impl_->shape); }

// ---- Tape -------------------------------------------------------------

void Tape::record(std::shared_ptr<Tensor::Impl> out,
                  std::function<void()> backward) {
  nodes_.push_back({std::move(out), std::move(backward)});
}

void Tape::run_backward(const std::shared_ptr<Tensor::Impl>& from) {
  // Intermediate adjoints are per-pass state; leaf grads accumulate across
  // passes.
  for (auto& n : nodes_) std::fill(n.out->grad.begin(), n.out->grad.end(), 0.0);
  from->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
}

void Tape::clear() { nodes_.clear(); }

// ---- op helpers ---------------------------------------------------------

namespace {

struct OpOut {
  Tensor t;
  Tape* tape;
  bool rg;
};

OpOut make_out(std::initializer_list<const Tensor*> ins,
               std::vector<std::size_t> shape, std::vector<double> values) {
  Tape* tape = merge_tape(ins);
  bool rg = any_rg(ins);
  Tensor t = Tensor::make(tape, std::move(shape), std::move(values), rg);
  return {t, tape, rg && tape != nullptr};
}

using ImplPtr = std::shared_ptr<Tensor::Impl>;

// Elementwise binary op with one-element broadcast on either side.
template <class FwdSS, class BwdFull, class BwdScalarLeft, class BwdScalarRight>
Tensor binary_elementwise(const char* name, const Tensor& a, const Tensor& b,
                          FwdSS fwd_same, BwdFull bwd_full,
                          BwdScalarLeft bwd_sleft, BwdScalarRight bwd_sright) {
  const bool sa = a.numel() == 1, sb = b.numel() == 1;
  if (!sa && !sb && a.shape() != b.shape()) shape_error(name, a, b);

  std::size_t n = sa ? b.numel() : a.numel();
  std::vector<double> out(n);
  fwd_same(a.values().data(), b.values().data(), out.data(), n, sa, sb);

  auto shape = sa ? b.shape() : a.shape();
  OpOut o = make_out({&a, &b}, shape, std::move(out));
  if (o.rg) {
    ImplPtr ia = a.impl(), ib = b.impl(), io = o.t.impl();
    o.tape->record(io, [=]() {
      if (sa && !sb) bwd_sleft(*ia, *ib, *io);
      else if (sb && !sa) bwd_sright(*ia, *ib, *io);
      else bwd_full(*ia, *ib, *io);
    });
  }
  return o.t;
}

}  // namespace

// ---- arithmetic -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "add", a, b,
      [](const double* pa, const double* pb, double* po, std::size_t n,
         bool sa, bool sb) {
        if (!sa && !sb) K().add(pa, pb, po, n);
        else if (sa) for (std::size_t i = 0; i < n; ++i) po[i] = pa[0] + pb[i];
        else for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[0];
      },
      [](Tensor::Impl& ia, Tensor::Impl& ib, Tensor::Impl& io) {
        add_grad(ia, io.grad.data(), io.grad.size());
        add_grad(ib, io.grad.data(), io.grad.size());
      },
      [](Tensor::Impl& ia, Tensor::Impl& ib, Tensor::Impl& io) {
        if (ia.requires_grad) ia.grad[0] += K().sum(io.grad.data(), io.grad.size());
        add_grad(ib, io.grad.data(), io.grad.size());
      },
      [](Tensor::Impl& ia, Tensor::Impl& ib, Tensor::Impl& io) {
        add_grad(ia, io.grad.data(), io.grad.size());
        if (ib.requires_grad) ib.grad[0] += K().sum(io.grad.data(), io.grad.size());
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "sub", a, b,
      [](const double* pa, const double* pb, double* po, std::size_t n,
         bool sa, bool sb) {
        if (!sa && !sb) K().sub(pa, pb, po, n);
        else if (sa) for (std::size_t i = 0; i < n; ++i) po[i] = pa[0] - pb[i];
        else for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[0];
      },
      [](Tensor::Impl& ia, Tensor::Impl& ib, Tensor::Impl& io) {
        add_grad(ia, io.grad.data(), io.grad.size());
        if (ib.requires_grad) K().axpy(-1.0, io.grad.data(), ib.grad.data(), io.grad.size());
      },
      [](Tensor::Impl& ia, Tensor::Impl& ib, Tensor::Impl& io) {
        if (ia.requires_grad) ia.grad[0] += K().sum(io.grad.data(), io.grad.size());
        if (ib.requires_grad) K().axpy(-1.0, io.grad.data(), ib.grad.data(), io.grad.size());
      },
      [](Tensor::Impl& ia, Tensor::Impl& ib, Tensor::Impl& io) {
        add_grad(ia, io.grad.data(), io.grad.size());
        if (ib.requires_grad) ib.grad[0] -= K().sum(io.grad.data(), io.grad.size());
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "mul", a, b,
      [](const double* pa, const double* pb, double* po, std::size_t n,
         bool sa, bool sb) {
        if (!sa && !sb) K().mul(pa, pb, po, n);
        else if (sa) K().scale(pb, pa[0], po, n);
        else K().scale(pa, pb[0], po, n);
      },
      [](Tensor::Impl& ia, Tensor::Impl& ib, Tensor::Impl& io) {
        std::size_t n = io.grad.size();
        std::vector<double> tmp(n);
        if (ia.requires_grad) {
          K().mul(io.grad.data(), ib.data.data(), tmp.data(), n);
          K().axpy(1.0, tmp.data(), ia.grad.data(), n);
        }
        if (ib.requires_grad) {
          K().mul(io.grad.data(), ia.data.data(), tmp.data(), n);
          K().axpy(1.0, tmp.data(), ib.grad.data(), n);
        }
      },
      [](Tensor::Impl& ia, Tensor::Impl& ib, Tensor::Impl& io) {
        std::size_t n = io.grad.size();
        if (ia.requires_grad)
          ia.grad[0] += K().dot(io.grad.data(), ib.data.data(), n);
        if (ib.requires_grad)
          K().axpy(ia.data[0], io.grad.data(), ib.grad.data(), n);
      },
      [](Tensor::Impl& ia, Tensor::Impl& ib, Tensor::Impl& io) {
        std::size_t n = io.grad.size();
        if (ia.requires_grad)
          K().axpy(ib.data[0], io.grad.data(), ia.grad.data(), n);
        if (ib.requires_grad)
          ib.grad[0] += K().dot(io.grad.data(), ia.data.data(), n);
      });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  K().scale(a.values().data(), s, out.data(), out.size());
  OpOut o = make_out({&a}, a.shape(), std::move(out));
  if (o.rg) {
    ImplPtr ia = a.impl(), io = o.t.impl();
    o.tape->record(io, [=]() {
      if (ia->requires_grad)
        K().axpy(s, io->grad.data(), ia->grad.data(), io->grad.size());
    });
  }
  return o.t;
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor recip(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / a.values()[i];
  OpOut o = make_out({&a}, a.shape(), std::move(out));
  if (o.rg) {
    ImplPtr ia = a.impl(), io = o.t.impl();
    o.tape->record(io, [=]() {
      if (!ia->requires_grad) return;
      for (std::size_t i = 0; i < io->grad.size(); ++i)
        ia->grad[i] -= io->grad[i] * io->data[i] * io->data[i];
    });
  }
  return o.t;
}

Tensor abs_op(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(a.values()[i]);
  OpOut o = make_out({&a}, a.shape(), std::move(out));
  if (o.rg) {
    ImplPtr ia = a.impl(), io = o.t.impl();
    o.tape->record(io, [=]() {
      if (!ia->requires_grad) return;
      for (std::size_t i = 0; i < io->grad.size(); ++i) {
        double x = ia->data[i];
        ia->grad[i] += io->grad[i] * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
      }
    });
  }
  return o.t;
}

Tensor tanh_op(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.values()[i]);
  OpOut o = make_out({&a}, a.shape(), std::move(out));
  if (o.rg) {
    ImplPtr ia = a.impl(), io = o.t.impl();
    o.tape->record(io, [=]() {
      if (!ia->requires_grad) return;
      for (std::size_t i = 0; i < io->grad.size(); ++i)
        ia->grad[i] += io->grad[i] * (1.0 - io->data[i] * io->data[i]);
    });
  }
  return o.t;
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  OpOut o = make_out({&a}, a.shape(), std::move(out));
  if (o.rg) {
    ImplPtr ia = a.impl(), io = o.t.impl();
    o.tape->record(io, [=]() {
      if (!ia->requires_grad) return;
      for (std::size_t i = 0; i < io->grad.size(); ++i)
        if (ia->data[i] > 0.0) ia->grad[i] += io->grad[i];
    });
  }
  return o.t;
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a) {
  OpOut o = make_out({&a}, {1}, {K().sum(a.values().data(), a.numel())});
  if (o.rg) {
    ImplPtr ia = a.impl(), io = o.t.impl();
    o.tape->record(io, [=]() {
      if (!ia->requires_grad) return;
      double g = io->grad[0];
      for (auto& gi : ia->grad) gi += g;
    });
  }
  return o.t;
}

Tensor mean(const Tensor& a) {
  std::size_t n = a.numel();
  OpOut o = make_out({&a}, {1}, {K().sum(a.values().data(), n) / double(n)});
  if (o.rg) {
    ImplPtr ia = a.impl(), io = o.t.impl();
    o.tape->record(io, [=]() {
      if (!ia->requires_grad) return;
      double g = io->grad[0] / double(n);
      for (auto& gi : ia->grad) gi += g;
    });
  }
  return o.t;
}

Tensor norm2(const Tensor& a) {
  double nrm = std::sqrt(K().dot(a.values().data(), a.values().data(), a.numel()));
  OpOut o = make_out({&a}, {1}, {nrm});
  if (o.rg) {
    ImplPtr ia = a.impl(), io = o.t.impl();
    o.tape->record(io, [=]() {
      if (!ia->requires_grad) return;
      double v = io->data[0];
      if (v == 0.0) return;  // subgradient 0 at the origin
      K().axpy(io->grad[0] / v, ia->data.data(), ia->grad.data(), ia->grad.size());
    });
  }
  return o.t;
}

// ---- linear algebra --------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2) shape_error("matmul", a, b);
  std::size_t m = a.shape()[0], k = a.shape()[1];

  if (b.shape().size() == 1) {
    if (b.shape()[0] != k) shape_error("matmul", a, b);
    std::vector<double> out(m);
    K().gemv_n(a.values().data(), b.values().data(), out.data(), m, k);
    OpOut o = make_out({&a, &b}, {m}, std::move(out));
    if (o.rg) {
      ImplPtr ia = a.impl(), ib = b.impl(), io = o.t.impl();
      o.tape->record(io, [=]() {
        if (ia->requires_grad)
          K().ger(1.0, io->grad.data(), ib->data.data(), ia->grad.data(), m, k);
        if (ib->requires_grad) {
          std::vector<double> tmp(k);
          K().gemv_t(ia->data.data(), io->grad.data(), tmp.data(), m, k);
          K().axpy(1.0, tmp.data(), ib->grad.data(), k);
        }
      });
    }
    return o.t;
  }

  if (b.shape().size() != 2 || b.shape()[0] != k) shape_error("matmul", a, b);
  std::size_t n = b.shape()[1];
  std::vector<double> out(m * n);
  K().matmul_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  OpOut o = make_out({&a, &b}, {m, n}, std::move(out));
  if (o.rg) {
    ImplPtr ia = a.impl(), ib = b.impl(), io = o.t.impl();
    o.tape->record(io, [=]() {
      if (ia->requires_grad) {
        std::vector<double> tmp(m * k);
        K().matmul_nt(io->grad.data(), ib->data.data(), tmp.data(), m, n, k);
        K().axpy(1.0, tmp.data(), ia->grad.data(), m * k);
      }
      if (ib->requires_grad) {
        std::vector<double> tmp(k * n);
        K().matmul_tn(ia->data.data(), io->grad.data(), tmp.data(), k, m, n);
        K().axpy(1.0, tmp.data(), ib->grad.data(), k * n);
      }
    });
  }
  return o.t;
}

Tensor matvec_t(const Tensor& a, const Tensor& x) {
  if (a.shape().size() != 2 || x.shape().size() != 1 ||
      x.shape()[0] != a.shape()[0])
    shape_error("matvec_t", a, x);
  std::size_t m = a.shape()[0], k = a.shape()[1];
  std::vector<double> out(k);
  K().gemv_t(a.values().data(), x.values().data(), out.data(), m, k);
  OpOut o = make_out({&a, &x}, {k}, std::move(out));
  if (o.rg) {
    ImplPtr ia = a.impl(), ix = x.impl(), io = o.t.impl();
    o.tape->record(io, [=]() {
      if (ia->requires_grad)
        K().ger(1.0, ix->data.data(), io->grad.data(), ia->grad.data(), m, k);
      if (ix->requires_grad) {
        std::vector<double> tmp(m);
        K().gemv_n(ia->data.data(), io->grad.data(), tmp.data(), m, k);
        K().axpy(1.0, tmp.data(), ix->grad.data(), m);
      }
    });
  }
  return o.t;
}

Tensor transpose(const Tensor& a) {
  if (a.shape().size() != 2)
    throw std::invalid_argument("transpose: expected 2-D tensor, got " +
                                a.shape_str());
  std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.values()[i * n + j];
  OpOut o = make_out({&a}, {n, m}, std::move(out));
  if (o.rg) {
    ImplPtr ia = a.impl(), io = o.t.impl();
    o.tape->record(io, [=]() {
      if (!ia->requires_grad) return;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          ia->grad[i * n + j] += io->grad[j * m + i];
    });
  }
  return o.t;
}

// ---- structure -------------------------------------------------------

Tensor slice(const Tensor& a, std::size_t offset, std::size_t len) {
  if (offset + len > a.numel())
    throw std::invalid_argument(
        "slice: range [" + std::to_string(offset) + "," +
        std::to_string(offset + len) + ") exceeds tensor " + a.shape_str());
  std::vector<double> out(a.values().begin() + offset,
                          a.values().begin() + offset + len);
  OpOut o = make_out({&a}, {len}, std::move(out));
  if (o.rg) {
    ImplPtr ia = a.impl(), io = o.t.impl();
    o.tape->record(io, [=]() {
      if (!ia->requires_grad) return;
      K().axpy(1.0, io->grad.data(), ia->grad.data() + offset, len);
    });
  }
  return o.t;
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  std::size_t total = 0;
  for (const Tensor& p : parts) total += p.numel();
  std::vector<double> out;
  out.reserve(total);
  for (const Tensor& p : parts)
    out.insert(out.end(), p.values().begin(), p.values().end());

  Tape* tape = nullptr;
  bool rg = false;
  for (const Tensor& p : parts) {
    if (p.tape() != nullptr) {
      if (tape != nullptr && tape != p.tape())
        throw std::invalid_argument("concat: tensors from different tapes");
      tape = p.tape();
    }
    rg = rg || p.requires_grad();
  }
  Tensor t = Tensor::make(tape, {total}, std::move(out), rg);
  if (rg && tape) {
    std::vector<ImplPtr> ins;
    ins.reserve(parts.size());
    for (const Tensor& p : parts) ins.push_back(p.impl());
    ImplPtr io = t.impl();
    tape->record(io, [ins, io]() {
      std::size_t off = 0;
      for (const ImplPtr& ip : ins) {
        if (ip->requires_grad)
          K().axpy(1.0, io->grad.data() + off, ip->grad.data(), ip->data.size());
        off += ip->data.size();
      }
    });
  }
  return t;
}

// ---- SPD solve -------------------------------------------------------

namespace {

// In-place lower Cholesky; returns false on a non-positive pivot.
bool cholesky(std::vector<double>& A, std::size_t m) {
  for (std::size_t j = 0; j < m; ++j) {
    double d = A[j * m + j] - K().dot(A.data() + j * m, A.data() + j * m, j);
    if (d <= 0.0 || !std::isfinite(d)) return false;
    double Ljj = std::sqrt(d);
    A[j * m + j] = Ljj;
    for (std::size_t i = j + 1; i < m; ++i) {
      double s = A[i * m + j] - K().dot(A.data() + i * m, A.data() + j * m, j);
      A[i * m + j] = s / Ljj;
    }
  }
  return true;
}

void chol_solve(const std::vector<double>& L, std::size_t m,
                const double* b, double* x) {
  // L y = b
  for (std::size_t i = 0; i < m; ++i)
    x[i] = (b[i] - K().dot(L.data() + i * m, x, i)) / L[i * m + i];
  // L^T x = y
  for (std::size_t ii = m; ii-- > 0;) {
    double s = x[ii];
    for (std::size_t j = ii + 1; j < m; ++j) s -= L[j * m + ii] * x[j];
    x[ii] = s / L[ii * m + ii];
  }
}

}  // namespace

Tensor spd_solve(const Tensor& G, const Tensor& r) {
  if (G.shape().size() != 2 || G.shape()[0] != G.shape()[1])
    throw std::invalid_argument("spd_solve: matrix must be square, got " +
                                G.shape_str());
  std::size_t m = G.shape()[0];
  if (r.numel() != m) shape_error("spd_solve", G, r);

  auto factor = std::make_shared<std::vector<double>>(G.values().begin(),
                                                      G.values().end());
  if (!cholesky(*factor, m)) {
    factor->assign(G.values().begin(), G.values().end());
    for (std::size_t i = 0; i < m; ++i) (*factor)[i * m + i] += 1e-10;
    if (!cholesky(*factor, m)) {
      double dmax = 0.0, dmin = HUGE_VAL;
      for (std::size_t i = 0; i < m; ++i) {
        double d = std::fabs(G.values()[i * m + i]);
        dmax = std::max(dmax, d);
        dmin = std::min(dmin, d);
      }
      throw std::runtime_error(
          "spd_solve: singular system beyond shift tolerance (diagonal "
          "condition estimate " +
          std::to_string(dmax / std::max(dmin, 1e-300)) + ")");
    }
  }

  std::vector<double> x(m);
  chol_solve(*factor, m, r.values().data(), x.data());
  OpOut o = make_out({&G, &r}, {m}, std::move(x));
  if (o.rg) {
    ImplPtr ig = G.impl(), ir = r.impl(), io = o.t.impl();
    o.tape->record(io, [=]() {
      std::vector<double> s(m);
      chol_solve(*factor, m, io->grad.data(), s.data());
      if (ir->requires_grad) K().axpy(1.0, s.data(), ir->grad.data(), m);
      if (ig->requires_grad)
        K().ger(-1.0, s.data(), io->data.data(), ig->grad.data(), m, m);
    });
  }
  return o.t;
}

// ---- primitive dispatcher ---------------------------------------------

Tensor forward_primitive(Prim op, std::span<const Tensor> in,
                         const PrimArgs& args) {
  auto want = [&](std::size_t n) {
    if (in.size() != n)
      throw std::invalid_argument("forward_primitive: wrong input count");
  };
  switch (op) {
    case Prim::Add: want(2); return add(in[0], in[1]);
    case Prim::Sub: want(2); return sub(in[0], in[1]);
    case Prim::Mul: want(2); return mul(in[0], in[1]);
    case Prim::Matmul: want(2); return matmul(in[0], in[1]);
    case Prim::Sum: want(1); return sum(in[0]);
    case Prim::Mean: want(1); return mean(in[0]);
    case Prim::Norm2: want(1); return norm2(in[0]);
    case Prim::Tanh: want(1); return tanh_op(in[0]);
    case Prim::Relu: want(1); return relu(in[0]);
    case Prim::Slice: want(1); return slice(in[0], args.offset, args.len);
    case Prim::Concat: return concat(in);
    case Prim::Scale: want(1); return scale(in[0], args.factor);
  }
  throw std::invalid_argument("forward_primitive: unknown op");
}

// ---- finite differences -----------------------------------------------

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               std::span<const double> x, double h) {
  if (h <= 0.0) throw std::invalid_argument("finite_difference_check: h <= 0");
  std::vector<double> xv(x.begin(), x.end());

  Tape tape;
  Tensor leaf = Tensor::leaf(tape, {xv.size()}, xv);
  Tensor y = f(leaf);
  if (y.numel() != 1)
    throw std::invalid_argument(
        "finite_difference_check: f must return a scalar, got shape " +
        y.shape_str());
  y.backward();
  std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());

  double worst = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    std::vector<double> xp = xv, xm = xv;
    xp[i] += h;
    xm[i] -= h;
    double fp = f(Tensor::constant({xv.size()}, xp)).item();
    double fm = f(Tensor::constant({xv.size()}, xm)).item();
    double fd = (fp - fm) / (2.0 * h);
    double err = std::fabs(analytic[i] - fd) / (std::fabs(analytic[i]) + 1e-12);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace daenet
