#include "daenet/constraints.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "daenet/kernels.hpp"

namespace daenet {

namespace {

const kernels::Ops& K_() { return kernels::active(); }

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

double sum_sq(std::span<const double> v) {
  return K_().dot(v.data(), v.data(), v.size());
}

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// Chains and pair lists share one internal form: constraint k measures the
// distance between the block at a_off and the block at b_off (b_off < 0
// means the fixed origin), against rest length.
struct PairView {
  int a_off;
  int b_off;
  double rest;
};

struct PairGeometry {
  std::vector<PairView> views;
  int dim;  // 2 for chains, 3 for molecular pairs
};

PairGeometry pair_geometry(const ConstraintSpec& spec) {
  PairGeometry g;
  if (spec.kind() == ConstraintSpec::Kind::Chain) {
    g.dim = 2;
    const auto& lengths = spec.chain().lengths;
    for (std::size_t k = 0; k < lengths.size(); ++k)
      g.views.push_back({int(2 * k), k == 0 ? -1 : int(2 * (k - 1)), lengths[k]});
  } else {
    g.dim = 3;
    for (const auto& p : spec.pairs().pairs)
      g.views.push_back({3 * p.i, 3 * p.j, p.length});
  }
  return g;
}

void pair_diff(const double* y, const PairView& pv, int dim, double* d) {
  for (int a = 0; a < dim; ++a)
    d[a] = y[pv.a_off + a] - (pv.b_off < 0 ? 0.0 : y[pv.b_off + a]);
}

// ---- discrete divergence stencil ---------------------------------------
// State layout: u then v, each n*n row-major with row index i along y and
// column index j along x. Forward differences; the last column (for u) and
// last row (for v) use the backward difference instead.

void div_apply(int n, const double* y, double* c) {
  const double* u = y;
  const double* v = y + std::size_t(n) * n;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double dudx = (j < n - 1) ? u[i * n + j + 1] - u[i * n + j]
                                : u[i * n + n - 1] - u[i * n + n - 2];
      double dvdy = (i < n - 1) ? v[(i + 1) * n + j] - v[i * n + j]
                                : v[(n - 1) * n + j] - v[(n - 2) * n + j];
      c[i * n + j] = dudx + dvdy;
    }
  }
}

// out += D^T w, out in state layout.
void div_apply_transpose(int n, const double* w, double* out) {
  double* u = out;
  double* v = out + std::size_t(n) * n;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double g = w[i * n + j];
      if (j < n - 1) {
        u[i * n + j + 1] += g;
        u[i * n + j] -= g;
      } else {
        u[i * n + n - 1] += g;
        u[i * n + n - 2] -= g;
      }
      if (i < n - 1) {
        v[(i + 1) * n + j] += g;
        v[i * n + j] -= g;
      } else {
        v[(n - 1) * n + j] += g;
        v[(n - 2) * n + j] -= g;
      }
    }
  }
}

void check_state_shape(const char* op, const ConstraintSpec& spec,
                       std::size_t got) {
  if (got != spec.state_dim())
    throw std::invalid_argument(std::string(op) + ": state has " +
                                std::to_string(got) + " elements, expected " +
                                std::to_string(spec.state_dim()));
}

}  // namespace

// ---- ConstraintSpec -------------------------------------------------------

ConstraintSpec::ConstraintSpec(ChainLengths c) : v_(std::move(c)) {
  const auto& lengths = chain().lengths;
  if (lengths.empty())
    throw std::invalid_argument("ChainLengths: no segments");
  for (double l : lengths)
    if (!(l > 0.0))
      throw std::invalid_argument("ChainLengths: lengths must be positive");
}

ConstraintSpec::ConstraintSpec(PairDistances p) : v_(std::move(p)) {
  const auto& pd = pairs();
  if (pd.n_particles <= 0)
    throw std::invalid_argument("PairDistances: no particles");
  if (pd.pairs.empty())
    throw std::invalid_argument("PairDistances: no pairs");
  for (const auto& pr : pd.pairs) {
    if (pr.i == pr.j)
      throw std::invalid_argument("PairDistances: pair indices must differ");
    if (pr.i < 0 || pr.j < 0 || pr.i >= pd.n_particles || pr.j >= pd.n_particles)
      throw std::invalid_argument("PairDistances: pair index out of range");
    if (!(pr.length > 0.0))
      throw std::invalid_argument("PairDistances: lengths must be positive");
  }
}

ConstraintSpec::ConstraintSpec(DiscreteDivergence d) : v_(d) {
  if (divergence().n < 2)
    throw std::invalid_argument("DiscreteDivergence: grid must be at least 2x2");
}

ConstraintSpec::Kind ConstraintSpec::kind() const {
  if (std::holds_alternative<ChainLengths>(v_)) return Kind::Chain;
  if (std::holds_alternative<PairDistances>(v_)) return Kind::Pairs;
  return Kind::Divergence;
}

std::size_t ConstraintSpec::state_dim() const {
  switch (kind()) {
    case Kind::Chain: return 2 * chain().lengths.size();
    case Kind::Pairs: return 3 * std::size_t(pairs().n_particles);
    case Kind::Divergence: {
      std::size_t n = divergence().n;
      return 2 * n * n;
    }
  }
  return 0;
}

std::size_t ConstraintSpec::c_dim() const {
  switch (kind()) {
    case Kind::Chain: return chain().lengths.size();
    case Kind::Pairs: return pairs().pairs.size();
    case Kind::Divergence: {
      std::size_t n = divergence().n;
      return n * n;
    }
  }
  return 0;
}

// ---- c(y) ------------------------------------------------------------

void eval_constraint_values(const ConstraintSpec& spec,
                            std::span<const double> y, std::span<double> c) {
  check_state_shape("eval_constraint", spec, y.size());
  if (c.size() != spec.c_dim())
    throw std::invalid_argument("eval_constraint: bad output size");
  if (spec.kind() == ConstraintSpec::Kind::Divergence) {
    div_apply(spec.divergence().n, y.data(), c.data());
    return;
  }
  PairGeometry g = pair_geometry(spec);
  double d[3];
  for (std::size_t k = 0; k < g.views.size(); ++k) {
    pair_diff(y.data(), g.views[k], g.dim, d);
    double n2 = 0.0;
    for (int a = 0; a < g.dim; ++a) n2 += d[a] * d[a];
    c[k] = std::sqrt(n2) - g.views[k].rest;
  }
}

Tensor eval_constraint(const ConstraintSpec& spec, const Tensor& y) {
  check_state_shape("eval_constraint", spec, y.numel());
  std::vector<double> c(spec.c_dim());
  eval_constraint_values(spec, y.values(), c);

  Tape* tape = y.tape();
  bool rg = y.requires_grad() && tape != nullptr;
  Tensor out = Tensor::make(tape, {c.size()}, std::move(c), rg);
  if (!rg) return out;

  auto iy = y.impl();
  auto io = out.impl();
  if (spec.kind() == ConstraintSpec::Kind::Divergence) {
    int n = spec.divergence().n;
    tape->record(io, [iy, io, n]() {
      div_apply_transpose(n, io->grad.data(), iy->grad.data());
    });
  } else {
    PairGeometry g = pair_geometry(spec);
    tape->record(io, [iy, io, g]() {
      double d[3];
      for (std::size_t k = 0; k < g.views.size(); ++k) {
        const PairView& pv = g.views[k];
        pair_diff(iy->data.data(), pv, g.dim, d);
        double nd = 0.0;
        for (int a = 0; a < g.dim; ++a) nd += d[a] * d[a];
        nd = std::sqrt(nd);
        if (nd == 0.0) continue;  // subgradient 0 at the singularity
        double gk = io->grad[k] / nd;
        for (int a = 0; a < g.dim; ++a) {
          iy->grad[pv.a_off + a] += gk * d[a];
          if (pv.b_off >= 0) iy->grad[pv.b_off + a] -= gk * d[a];
        }
      }
    });
  }
  return out;
}

// ---- J^T w ------------------------------------------------------------

Tensor jacobian_transpose_apply(const ConstraintSpec& spec, const Tensor& y,
                                const Tensor& w) {
  check_state_shape("jacobian_transpose_apply", spec, y.numel());
  if (w.numel() != spec.c_dim())
    throw std::invalid_argument("jacobian_transpose_apply: w has " +
                                std::to_string(w.numel()) +
                                " elements, expected " +
                                std::to_string(spec.c_dim()));

  std::vector<double> out(spec.state_dim(), 0.0);
  if (spec.kind() == ConstraintSpec::Kind::Divergence) {
    div_apply_transpose(spec.divergence().n, w.values().data(), out.data());
  } else {
    PairGeometry g = pair_geometry(spec);
    double d[3];
    for (std::size_t k = 0; k < g.views.size(); ++k) {
      const PairView& pv = g.views[k];
      pair_diff(y.values().data(), pv, g.dim, d);
      double nd = 0.0;
      for (int a = 0; a < g.dim; ++a) nd += d[a] * d[a];
      nd = std::sqrt(nd);
      if (nd == 0.0)
        throw std::runtime_error(
            "jacobian_transpose_apply: coincident points in constraint " +
            std::to_string(k) + " leave the unit vector undefined");
      double wk = w.values()[k] / nd;
      for (int a = 0; a < g.dim; ++a) {
        out[pv.a_off + a] += wk * d[a];
        if (pv.b_off >= 0) out[pv.b_off + a] -= wk * d[a];
      }
    }
  }

  Tape* tape = y.tape() != nullptr ? y.tape() : w.tape();
  if (y.tape() && w.tape() && y.tape() != w.tape())
    throw std::invalid_argument(
        "jacobian_transpose_apply: tensors from different tapes");
  bool rg = (y.requires_grad() || w.requires_grad()) && tape != nullptr;
  Tensor t = Tensor::make(tape, {out.size()}, std::move(out), rg);
  if (!rg) return t;

  auto iy = y.impl();
  auto iw = w.impl();
  auto io = t.impl();
  if (spec.kind() == ConstraintSpec::Kind::Divergence) {
    int n = spec.divergence().n;
    tape->record(io, [iy, iw, io, n]() {
      // out = D^T w is linear in w and independent of y.
      if (iw->requires_grad) {
        std::vector<double> tmp(std::size_t(n) * n);
        div_apply(n, io->grad.data(), tmp.data());
        K_().axpy(1.0, tmp.data(), iw->grad.data(), tmp.size());
      }
    });
  } else {
    PairGeometry g = pair_geometry(spec);
    tape->record(io, [iy, iw, io, g]() {
      double d[3], a_bar[3];
      for (std::size_t k = 0; k < g.views.size(); ++k) {
        const PairView& pv = g.views[k];
        pair_diff(iy->data.data(), pv, g.dim, d);
        double nd = 0.0;
        for (int a = 0; a < g.dim; ++a) nd += d[a] * d[a];
        nd = std::sqrt(nd);
        if (nd == 0.0) continue;
        for (int a = 0; a < g.dim; ++a) {
          a_bar[a] = io->grad[pv.a_off + a];
          if (pv.b_off >= 0) a_bar[a] -= io->grad[pv.b_off + a];
        }
        double u_dot_a = 0.0;
        for (int a = 0; a < g.dim; ++a) u_dot_a += d[a] * a_bar[a] / nd;
        if (iw->requires_grad) iw->grad[k] += u_dot_a;
        if (iy->requires_grad) {
          double wk = iw->data[k] / nd;
          for (int a = 0; a < g.dim; ++a) {
            double b = wk * (a_bar[a] - u_dot_a * d[a] / nd);
            iy->grad[pv.a_off + a] += b;
            if (pv.b_off >= 0) iy->grad[pv.b_off + a] -= b;
          }
        }
      }
    });
  }
  return t;
}

// ---- materialized Jacobian ----------------------------------------------

Tensor jacobian_matrix(const ConstraintSpec& spec, const Tensor& y) {
  check_state_shape("jacobian_matrix", spec, y.numel());
  std::size_t m = spec.c_dim(), d = spec.state_dim();
  std::vector<double> J(m * d, 0.0);

  if (spec.kind() == ConstraintSpec::Kind::Divergence) {
    int n = spec.divergence().n;
    std::vector<double> w(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
      w[k] = 1.0;
      div_apply_transpose(n, w.data(), J.data() + k * d);
      w[k] = 0.0;
    }
    // Constant in y: the result never needs a backward rule.
    return Tensor::constant({m, d}, std::move(J));
  }

  PairGeometry g = pair_geometry(spec);
  double dv[3];
  for (std::size_t k = 0; k < m; ++k) {
    const PairView& pv = g.views[k];
    pair_diff(y.values().data(), pv, g.dim, dv);
    double nd = 0.0;
    for (int a = 0; a < g.dim; ++a) nd += dv[a] * dv[a];
    nd = std::sqrt(nd);
    if (nd == 0.0)
      throw std::runtime_error(
          "jacobian_matrix: coincident points in constraint " +
          std::to_string(k));
    for (int a = 0; a < g.dim; ++a) {
      J[k * d + pv.a_off + a] = dv[a] / nd;
      if (pv.b_off >= 0) J[k * d + pv.b_off + a] = -dv[a] / nd;
    }
  }

  Tape* tape = y.tape();
  bool rg = y.requires_grad() && tape != nullptr;
  Tensor t = Tensor::make(tape, {m, d}, std::move(J), rg);
  if (!rg) return t;

  auto iy = y.impl();
  auto io = t.impl();
  tape->record(io, [iy, io, g, d]() {
    double dv[3], a_bar[3];
    for (std::size_t k = 0; k < g.views.size(); ++k) {
      const PairView& pv = g.views[k];
      pair_diff(iy->data.data(), pv, g.dim, dv);
      double nd = 0.0;
      for (int a = 0; a < g.dim; ++a) nd += dv[a] * dv[a];
      nd = std::sqrt(nd);
      if (nd == 0.0) continue;
      for (int a = 0; a < g.dim; ++a) {
        a_bar[a] = io->grad[k * d + pv.a_off + a];
        if (pv.b_off >= 0) a_bar[a] -= io->grad[k * d + pv.b_off + a];
      }
      double u_dot_a = 0.0;
      for (int a = 0; a < g.dim; ++a) u_dot_a += dv[a] * a_bar[a] / nd;
      for (int a = 0; a < g.dim; ++a) {
        double b = (a_bar[a] - u_dot_a * dv[a] / nd) / nd;
        iy->grad[pv.a_off + a] += b;
        if (pv.b_off >= 0) iy->grad[pv.b_off + a] -= b;
      }
    }
  });
  return t;
}

// ---- projections -----------------------------------------------------

namespace {

void validate_projection_config(const ProjectionConfig& cfg) {
  if (cfg.max_iters < 1)
    throw std::invalid_argument("ProjectionConfig: max_iters must be >= 1");
  if (!(cfg.tol > 0.0))
    throw std::invalid_argument("ProjectionConfig: tol must be > 0");
  if (cfg.step_safeguard < 0)
    throw std::invalid_argument("ProjectionConfig: step_safeguard must be >= 0");
}

Tensor newton_step_physical(const ConstraintSpec& spec, const Tensor& y,
                            const Tensor& c) {
  Tensor J = jacobian_matrix(spec, y);
  Tensor G = matmul(J, transpose(J));
  Tensor lam = spd_solve(G, c);
  return jacobian_transpose_apply(spec, y, lam);
}

Tensor newton_step_latent(const ConstraintSpec& spec, const Tensor& y,
                          const Tensor& c, const Tensor& K) {
  Tensor J = jacobian_matrix(spec, y);
  Tensor JK = matmul(J, K);
  Tensor G = matmul(JK, transpose(JK));
  Tensor lam = spd_solve(G, c);
  return matvec_t(K, jacobian_transpose_apply(spec, y, lam));
}

}  // namespace

ProjectionResult project_physical(const ConstraintSpec& spec, const Tensor& y0,
                                  const ProjectionConfig& cfg) {
  validate_projection_config(cfg);
  check_state_shape("project_physical", spec, y0.numel());
  if (!all_finite(y0.values()))
    throw std::invalid_argument("project_physical: non-finite input state");

  Tensor y = y0;
  double init_v = 0.0;
  std::vector<double> trial(y0.numel()), ctrial(spec.c_dim());

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    Tensor c = eval_constraint(spec, y);
    double maxv = max_abs(c.values());
    if (iter == 0) init_v = maxv;
    if (maxv < cfg.tol) return {y, iter, init_v, maxv, true};

    Tensor step = cfg.solver == ProjectionConfig::Solver::GradientDescent
                      ? jacobian_transpose_apply(spec, y, c)
                      : newton_step_physical(spec, y, c);

    double base = sum_sq(c.values());
    double s = 1.0;
    bool accepted = cfg.step_safeguard == 0;
    if (!accepted) {
      for (int t = 0; t <= cfg.step_safeguard; ++t, s *= 0.5) {
        for (std::size_t i = 0; i < trial.size(); ++i)
          trial[i] = y.values()[i] - s * step.values()[i];
        eval_constraint_values(spec, trial, ctrial);
        if (sum_sq(ctrial) <= base) {
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) return {y, iter, init_v, maxv, false};

    y = s == 1.0 ? sub(y, step) : sub(y, scale(step, s));
    if (!all_finite(y.values()))
      throw std::runtime_error(
          "project_physical: non-finite state at iteration " +
          std::to_string(iter));
  }

  std::vector<double> cfin(spec.c_dim());
  eval_constraint_values(spec, y.values(), cfin);
  double maxv = max_abs(cfin);
  return {y, cfg.max_iters, init_v, maxv, maxv < cfg.tol};
}

ProjectionResult project_latent(const ConstraintSpec& spec, const Tensor& z,
                                const Tensor& K, const ProjectionConfig& cfg) {
  validate_projection_config(cfg);
  if (K.shape().size() != 2 || K.shape()[0] != spec.state_dim() ||
      K.shape()[1] != z.numel())
    throw std::invalid_argument("project_latent: readout shape " +
                                const_cast<Tensor&>(K).shape_str() +
                                " does not map latent size " +
                                std::to_string(z.numel()) + " to state size " +
                                std::to_string(spec.state_dim()));
  if (!all_finite(z.values()))
    throw std::invalid_argument("project_latent: non-finite input state");

  std::size_t sd = spec.state_dim(), ld = z.numel();
  Tensor zc = z;
  double init_v = 0.0;
  std::vector<double> ztrial(ld), ytrial(sd), ctrial(spec.c_dim());

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    Tensor y = matmul(K, zc);
    Tensor c = eval_constraint(spec, y);
    double maxv = max_abs(c.values());
    if (iter == 0) init_v = maxv;
    if (maxv < cfg.tol) return {zc, iter, init_v, maxv, true};

    Tensor step = cfg.solver == ProjectionConfig::Solver::GradientDescent
                      ? matvec_t(K, jacobian_transpose_apply(spec, y, c))
                      : newton_step_latent(spec, y, c, K);

    double base = sum_sq(c.values());
    double s = 1.0;
    bool accepted = cfg.step_safeguard == 0;
    if (!accepted) {
      for (int t = 0; t <= cfg.step_safeguard; ++t, s *= 0.5) {
        for (std::size_t i = 0; i < ld; ++i)
          ztrial[i] = zc.values()[i] - s * step.values()[i];
        K_().gemv_n(K.values().data(), ztrial.data(), ytrial.data(), sd, ld);
        eval_constraint_values(spec, ytrial, ctrial);
        if (sum_sq(ctrial) <= base) {
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) return {zc, iter, init_v, maxv, false};

    zc = s == 1.0 ? sub(zc, step) : sub(zc, scale(step, s));
    if (!all_finite(zc.values()))
      throw std::runtime_error(
          "project_latent: non-finite state at iteration " +
          std::to_string(iter));
  }

  std::vector<double> yfin(sd), cfin(spec.c_dim());
  K_().gemv_n(K.values().data(), zc.values().data(), yfin.data(), sd, ld);
  eval_constraint_values(spec, yfin, cfin);
  double maxv = max_abs(cfin);
  return {zc, cfg.max_iters, init_v, maxv, maxv < cfg.tol};
}

// ---- penalty ---------------------------------------------------------

Tensor penalty_term(const ConstraintSpec& spec, const Tensor& z,
                    const Tensor& K, const PenaltyConfig& cfg) {
  if (cfg.gamma < 0.0)
    throw std::invalid_argument("penalty_term: gamma must be >= 0");
  if (cfg.gamma == 0.0) return Tensor::zeros(z.shape());

  Tensor y = matmul(K, z);
  Tensor c = eval_constraint(spec, y);
  Tensor raw = scale(matvec_t(K, jacobian_transpose_apply(spec, y, c)),
                     -cfg.gamma);

  Tensor nr = norm2(raw);
  Tensor nz = norm2(z);
  if (nr.item() > cfg.relative_cap * nz.item()) {
    Tensor ratio = mul(scale(nz, cfg.relative_cap), recip(nr));
    return mul(raw, ratio);
  }
  return raw;
}

// ---- metrics ----------------------------------------------------------

ViolationMetrics violation_metrics(const ConstraintSpec& spec,
                                   std::span<const double> y) {
  std::vector<double> c(spec.c_dim());
  eval_constraint_values(spec, y, c);
  ViolationMetrics m;
  for (double x : c) {
    m.max_abs = std::max(m.max_abs, std::fabs(x));
    m.mean_abs += std::fabs(x);
  }
  m.mean_abs /= double(c.size());
  return m;
}

ViolationMetrics violation_metrics(const ConstraintSpec& spec,
                                   const Tensor& y) {
  return violation_metrics(spec, y.values());
}

}  // namespace daenet
