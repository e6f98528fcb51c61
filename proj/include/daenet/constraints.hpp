#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "daenet/tensor.hpp"

namespace daenet {

// Serial chain anchored at the origin: c_i = |r_i - r_{i-1}| - l_i with
// r_0 = 0. States are 2-D positions, particle-major [x1,y1,x2,y2,...].
// Lengths in meters.
struct ChainLengths {
  std::vector<double> lengths;
};

// Independent pair distances over 3-D particles, particle-major layout.
// Lengths in picometers.
struct PairDistances {
  struct Pair {
    int i = 0;
    int j = 0;
    double length = 0.0;
  };
  int n_particles = 0;
  std::vector<Pair> pairs;
};

// Discrete divergence of a 2-D field on an n x n grid, unit spacing. The
// state is [u, v] with each channel row-major, rows indexing y. Forward
// differences of u along x and of v along y; the final column/row fall back
// to one-sided (backward) differences.
struct DiscreteDivergence {
  int n = 0;
};

class ConstraintSpec {
 public:
  explicit ConstraintSpec(ChainLengths c);
  explicit ConstraintSpec(PairDistances p);
  explicit ConstraintSpec(DiscreteDivergence d);

  enum class Kind { Chain, Pairs, Divergence };
  Kind kind() const;

  std::size_t state_dim() const;  // length of the physical state y
  std::size_t c_dim() const;      // number of constraint components

  const ChainLengths& chain() const { return std::get<ChainLengths>(v_); }
  const PairDistances& pairs() const { return std::get<PairDistances>(v_); }
  const DiscreteDivergence& divergence() const {
    return std::get<DiscreteDivergence>(v_);
  }

 private:
  std::variant<ChainLengths, PairDistances, DiscreteDivergence> v_;
};

struct ProjectionConfig {
  enum class Solver { GradientDescent, Newton };
  int max_iters = 200;
  double tol = 1e-4;
  Solver solver = Solver::GradientDescent;
  // Backtracking halvings allowed when a step increases |c|^2; 0 disables
  // the safeguard and accepts every full step.
  int step_safeguard = 4;
};

struct PenaltyConfig {
  double gamma = 0.0;
  double relative_cap = 0.10;  // H = identity
};

// c(y). Differentiable; curvature flows into y on the backward pass.
Tensor eval_constraint(const ConstraintSpec& spec, const Tensor& y);
// Plain evaluation into a caller buffer (projection line searches, metrics).
void eval_constraint_values(const ConstraintSpec& spec,
                            std::span<const double> y, std::span<double> c);

// J(y)^T w computed analytically (chains/pairs) or by stencil transpose
// (divergence). Differentiable in both y and w.
Tensor jacobian_transpose_apply(const ConstraintSpec& spec, const Tensor& y,
                                const Tensor& w);

// Materialized m x d Jacobian, used by the Newton solves.
Tensor jacobian_matrix(const ConstraintSpec& spec, const Tensor& y);

struct ProjectionResult {
  Tensor y;
  int iters = 0;
  double initial_max_violation = 0.0;
  double final_max_violation = 0.0;
  bool converged = false;
};

// Iterates y <- y - B J^T c until max|c| < tol or max_iters, with B = I
// (gradient descent) or the m x m Gauss-Newton solve (newton). Steps that
// increase |c|^2 are halved up to step_safeguard times; when no halving
// helps, iteration stops at the current point.
ProjectionResult project_physical(const ConstraintSpec& spec, const Tensor& y0,
                                  const ProjectionConfig& cfg);

// Latent-space variant acting on z through the readout K (y = K z):
// gradient descent   z <- z - K^T J^T c(K z)
// newton             z <- z - K^T J^T (J K K^T J^T)^{-1} c(K z)
ProjectionResult project_latent(const ConstraintSpec& spec, const Tensor& z,
                                const Tensor& K, const ProjectionConfig& cfg);

// -gamma K^T J^T c(K z), rescaled to relative_cap * |z| whenever its norm
// exceeds that bound. Differentiable through the rescale.
Tensor penalty_term(const ConstraintSpec& spec, const Tensor& z,
                    const Tensor& K, const PenaltyConfig& cfg);

struct ViolationMetrics {
  double max_abs = 0.0;
  double mean_abs = 0.0;
};
ViolationMetrics violation_metrics(const ConstraintSpec& spec,
                                   const Tensor& y);
ViolationMetrics violation_metrics(const ConstraintSpec& spec,
                                   std::span<const double> y);

}  // namespace daenet
