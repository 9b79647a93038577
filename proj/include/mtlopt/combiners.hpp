#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtlopt/param.hpp"

namespace mtlopt {

enum class Method {
  kJoint,
  kPcgrad,
  kCagrad,
  kGraddrop,
  kMgda,
  kImtlg,
  kNashmtl,
};

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct CombineResult {
  ParamVector direction;
  // w_t when the method defines per-task weights; absent for PCGrad/GradDrop
  // whose edits are not expressible as one scalar per task.
  std::optional<std::vector<double>> task_weights;
  std::map<std::string, double> diagnostics;
  bool fallback = false;
  // PCGrad only: the seed-shuffled projection order, flattened per task.
  std::vector<std::size_t> projection_order;
};

struct CombinerParams {
  double cagrad_c = 0.4;
  int cagrad_iters = 50;
  double graddrop_leak = 0.0;
  int mgda_iters = 100;
  int nashmtl_iters = 20;
  double nashmtl_eps = 1e-6;
  double nashmtl_damping = 0.5;
};

// Plain average of the task gradients (joint training direction).
CombineResult combine_average(const TaskGradientSet& g);

// Projects each task gradient onto the normal plane of conflicting tasks,
// iterating over the others in a seed-shuffled order and always projecting
// against the original opposing gradients.
CombineResult combine_pcgrad(const TaskGradientSet& g, std::uint64_t seed);

// Conflict-averse direction: g_0 plus a correction from the simplex weight
// vector minimizing g_w . g_0 + c |g_0| |g_w|, solved by projected gradient
// descent on the simplex.
CombineResult combine_cagrad(const TaskGradientSet& g, double c, int solver_iters);

// Per-coordinate stochastic sign dropping driven by the purity
// P_d = (1 + sum_i g_id / sum_i |g_id|) / 2.
CombineResult combine_graddrop(const TaskGradientSet& g, std::uint64_t seed,
                               double leak);

// Min-norm point of the convex hull of the task gradients. Closed form for
// T = 2, Frank-Wolfe with exact line search plus a support polish otherwise.
CombineResult combine_mgda(const TaskGradientSet& g, int fw_iters);

// Direction with equal projections onto every normalized task gradient.
CombineResult combine_imtl_g(const TaskGradientSet& g);

// Bargaining weights alpha > 0 with g_i . d = 1/alpha_i, d = sum alpha_j g_j,
// found by a damped fixed-point iteration on the Gram matrix.
CombineResult combine_nashmtl(const TaskGradientSet& g, int fp_iters, double eps,
                              double damping = 0.5);

CombineResult combine(Method method, const TaskGradientSet& g, std::uint64_t seed,
                      const CombinerParams& params);

}  // namespace mtlopt
