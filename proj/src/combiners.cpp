#include "mtlopt/combiners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtlopt/errors.hpp"
#include "mtlopt/rng.hpp"

namespace mtlopt {

std::string to_string(Method m) {
  switch (m) {
    case Method::kJoint: return "joint";
    case Method::kPcgrad: return "pcgrad";
    case Method::kCagrad: return "cagrad";
    case Method::kGraddrop: return "graddrop";
    case Method::kMgda: return "mgda";
    case Method::kImtlg: return "imtlg";
    case Method::kNashmtl: return "nashmtl";
  }
  return "joint";
}

Method method_from_string(const std::string& s) {
  if (s == "joint") return Method::kJoint;
  if (s == "pcgrad") return Method::kPcgrad;
  if (s == "cagrad") return Method::kCagrad;
  if (s == "graddrop") return Method::kGraddrop;
  if (s == "mgda") return Method::kMgda;
  if (s == "imtlg") return Method::kImtlg;
  if (s == "nashmtl") return Method::kNashmtl;
  throw ConfigError("unknown method '" + s + "'");
}

namespace {

void check_input(const TaskGradientSet& g) {
  if (g.tasks < 2) throw ConfigError("combiner: need at least two tasks");
  if (g.dim == 0) throw ConfigError("combiner: empty gradient rows");
  if (!all_finite(g.data)) throw NumericError("combiner: non-finite gradient input");
}

// T x T Gram matrix of the task gradients.
std::vector<double> gram(const TaskGradientSet& g) {
  std::vector<double> k(g.tasks * g.tasks, 0.0);
  for (std::size_t i = 0; i < g.tasks; ++i) {
    for (std::size_t j = i; j < g.tasks; ++j) {
      const double v = dot(g.row(i), g.row(j));
      k[i * g.tasks + j] = v;
      k[j * g.tasks + i] = v;
    }
  }
  return k;
}

std::vector<double> weighted_sum(const TaskGradientSet& g,
                                 const std::vector<double>& w) {
  std::vector<double> out(g.dim, 0.0);
  for (std::size_t t = 0; t < g.tasks; ++t) {
    const auto row = g.row(t);
    const double wt = w[t];
    if (wt == 0.0) continue;
    for (std::size_t d = 0; d < g.dim; ++d) out[d] += wt * row[d];
  }
  return out;
}

// Euclidean projection onto { w >= 0, sum w = 1 }.
void project_simplex(std::vector<double>& w) {
  const std::size_t n = w.size();
  std::vector<double> u = w;
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0;
  double theta = 0.0;
  std::size_t rho = 0;
  for (std::size_t i = 0; i < n; ++i) {
    css += u[i];
    const double t = (css - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) {
      rho = i;
      theta = t;
    }
  }
  (void)rho;
  for (double& v : w) v = std::max(0.0, v - theta);
}

// Dense linear solve with partial pivoting; returns false when singular.
bool linear_solve(std::vector<double> a, std::vector<double> b, std::size_t n,
                  std::vector<double>& x) {
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    double best = std::fabs(a[col * n + col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double v = std::fabs(a[r * n + col]);
      if (v > best) {
        best = v;
        pivot = r;
      }
    }
    if (best < 1e-12) return false;
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[pivot * n + c]);
      std::swap(b[col], b[pivot]);
    }
    const double diag = a[col * n + col];
    for (std::size_t r = col + 1; r < n; ++r) {
      const double factor = a[r * n + col] / diag;
      if (factor == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r * n + c] -= factor * a[col * n + c];
      b[r] -= factor * b[col];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t r = n; r-- > 0;) {
    double acc = b[r];
    for (std::size_t c = r + 1; c < n; ++c) acc -= a[r * n + c] * x[c];
    x[r] = acc / a[r * n + r];
  }
  return true;
}

double quad_form(const std::vector<double>& k, const std::vector<double>& w,
                 std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += k[i * n + j] * w[j];
    acc += w[i] * row;
  }
  return acc;
}

}  // namespace

CombineResult combine_average(const TaskGradientSet& g) {
  check_input(g);
  CombineResult res;
  res.direction.values.assign(g.dim, 0.0);
  for (std::size_t t = 0; t < g.tasks; ++t) {
    const auto row = g.row(t);
    for (std::size_t d = 0; d < g.dim; ++d) res.direction.values[d] += row[d];
  }
  const double inv_t = 1.0 / static_cast<double>(g.tasks);
  for (double& v : res.direction.values) v *= inv_t;
  res.task_weights = std::vector<double>(g.tasks, inv_t);
  return res;
}

CombineResult combine_pcgrad(const TaskGradientSet& g, std::uint64_t seed) {
  check_input(g);
  const std::size_t n_tasks = g.tasks;
  Rng rng(derive_seed(seed, seed_stream::kCombiner));

  CombineResult res;
  res.direction.values.assign(g.dim, 0.0);
  double projections = 0.0;

  std::vector<double> proj(g.dim);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n_tasks; ++i) {
    const auto gi = g.row(i);
    std::copy(gi.begin(), gi.end(), proj.begin());

    order.clear();
    for (std::size_t j = 0; j < n_tasks; ++j) {
      if (j != i) order.push_back(j);
    }
    for (std::size_t a = order.size(); a-- > 1;)
      std::swap(order[a], order[rng.below(a + 1)]);
    res.projection_order.insert(res.projection_order.end(), order.begin(), order.end());

    for (std::size_t j : order) {
      const auto gj = g.row(j);
      const double d = dot(proj, gj);
      if (d >= 0.0) continue;
      const double n2 = squared_norm(gj);
      if (n2 == 0.0) continue;
      const double coef = d / n2;
      for (std::size_t c = 0; c < g.dim; ++c) proj[c] -= coef * gj[c];
      projections += 1.0;
    }

    for (std::size_t c = 0; c < g.dim; ++c) res.direction.values[c] += proj[c];
  }
  const double inv_t = 1.0 / static_cast<double>(n_tasks);
  for (double& v : res.direction.values) v *= inv_t;
  res.diagnostics["projections"] = projections;
  return res;
}

CombineResult combine_cagrad(const TaskGradientSet& g, double c, int solver_iters) {
  check_input(g);
  if (c < 0.0) throw ConfigError("cagrad: c must be >= 0");

  CombineResult res = combine_average(g);
  const std::vector<double> g0 = res.direction.values;
  const double n0 = norm(g0);
  if (c == 0.0) {
    // The regularizer vanishes; the direction is exactly the average.
    res.diagnostics["objective"] = n0 * n0;
    res.diagnostics["iterations"] = 0.0;
    return res;
  }

  const std::size_t n_tasks = g.tasks;
  const std::vector<double> k = gram(g);
  std::vector<double> b(n_tasks);
  for (std::size_t i = 0; i < n_tasks; ++i) b[i] = dot(g.row(i), g0);

  auto objective = [&](const std::vector<double>& w) {
    double lin = 0.0;
    for (std::size_t i = 0; i < n_tasks; ++i) lin += w[i] * b[i];
    const double q = std::max(0.0, quad_form(k, w, n_tasks));
    return lin + c * n0 * std::sqrt(q);
  };

  std::vector<double> w(n_tasks, 1.0 / static_cast<double>(n_tasks));
  double fw = objective(w);
  std::vector<double> best_w = w;
  double best_f = fw;
  double step = 1.0;
  int used = 0;

  std::vector<double> grad(n_tasks), trial(n_tasks);
  for (int it = 0; it < solver_iters; ++it) {
    ++used;
    const double q = quad_form(k, w, n_tasks);
    const double nq = std::sqrt(std::max(q, 0.0));
    for (std::size_t i = 0; i < n_tasks; ++i) {
      double kw = 0.0;
      for (std::size_t j = 0; j < n_tasks; ++j) kw += k[i * n_tasks + j] * w[j];
      grad[i] = b[i] + (nq > 1e-300 ? c * n0 * kw / nq : 0.0);
    }

    // Backtracking on the projected point; warm-start the step size.
    step = std::min(step * 2.0, 1e6);
    bool moved = false;
    for (int ls = 0; ls < 40; ++ls) {
      for (std::size_t i = 0; i < n_tasks; ++i) trial[i] = w[i] - step * grad[i];
      project_simplex(trial);
      const double ft = objective(trial);
      if (ft < fw) {
        w = trial;
        fw = ft;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (fw < best_f) {
      best_f = fw;
      best_w = w;
    }
    if (!moved) break;
  }

  const std::vector<double> gw = weighted_sum(g, best_w);
  const double ngw = norm(gw);
  res.task_weights = best_w;
  res.diagnostics["objective"] = best_f;
  res.diagnostics["iterations"] = static_cast<double>(used);
  if (ngw <= 1e-300) {
    // Degenerate weighted gradient; keep the plain average direction.
    res.fallback = true;
    return res;
  }
  const double coef = c * n0 / ngw;
  for (std::size_t d = 0; d < g.dim; ++d) res.direction.values[d] = g0[d] + coef * gw[d];
  return res;
}

CombineResult combine_graddrop(const TaskGradientSet& g, std::uint64_t seed,
                               double leak) {
  check_input(g);
  if (leak < 0.0 || leak > 1.0) throw ConfigError("graddrop: leak must be in [0, 1]");
  Rng rng(derive_seed(seed, seed_stream::kCombiner));

  CombineResult res;
  res.direction.values.assign(g.dim, 0.0);
  const double inv_t = 1.0 / static_cast<double>(g.tasks);
  double dropped = 0.0;

  for (std::size_t d = 0; d < g.dim; ++d) {
    double sum = 0.0;
    double asum = 0.0;
    for (std::size_t t = 0; t < g.tasks; ++t) {
      const double v = g.row(t)[d];
      sum += v;
      asum += std::fabs(v);
    }
    if (asum == 0.0) continue;

    const double purity = 0.5 * (1.0 + sum / asum);
    const bool keep_positive = rng.uniform() < purity;
    double acc = 0.0;
    for (std::size_t t = 0; t < g.tasks; ++t) {
      const double v = g.row(t)[d];
      const bool kept = keep_positive ? (v > 0.0) : (v < 0.0);
      if (kept) {
        acc += v;
      } else {
        acc += leak * v;
        if (v != 0.0) dropped += 1.0;
      }
    }
    res.direction.values[d] = acc * inv_t;
  }
  res.diagnostics["dropped_parts"] = dropped;
  return res;
}

namespace {

// w = argmin over the simplex of w^T K w, for the T >= 3 case: Frank-Wolfe
// with exact line search, then an exact KKT solve on the active support.
void min_norm_frank_wolfe(const std::vector<double>& k, std::size_t n, int iters,
                          std::vector<double>& w, double& achieved, int& used) {
  w.assign(n, 1.0 / static_cast<double>(n));
  used = 0;

  std::vector<double> kw(n);
  auto refresh_kw = [&]() {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += k[i * n + j] * w[j];
      kw[i] = acc;
    }
  };

  refresh_kw();
  double f = 0.0;
  for (std::size_t i = 0; i < n; ++i) f += w[i] * kw[i];
  const double scale = std::max(1.0, std::fabs(f));

  for (int it = 0; it < iters; ++it) {
    ++used;
    std::size_t j = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (kw[i] < kw[j]) j = i;
    }
    const double gap = 2.0 * (f - kw[j]);
    if (gap <= 1e-14 * scale) break;

    // Exact line search from w toward vertex e_j.
    const double num = f - kw[j];
    const double den = f - 2.0 * kw[j] + k[j * n + j];
    double gamma;
    if (den <= 0.0) {
      gamma = num > 0.0 ? 1.0 : 0.0;
    } else {
      gamma = std::clamp(num / den, 0.0, 1.0);
    }
    if (gamma == 0.0) break;
    for (std::size_t i = 0; i < n; ++i) w[i] *= (1.0 - gamma);
    w[j] += gamma;
    refresh_kw();
    f = 0.0;
    for (std::size_t i = 0; i < n; ++i) f += w[i] * kw[i];
  }

  // Support polish: solve K_SS y = 1 on the active set; drop any index the
  // solve sends negative and retry. Accepting only on improvement keeps the
  // Frank-Wolfe iterate as the fallback.
  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < n; ++i) {
    if (w[i] > 1e-12) support.push_back(i);
  }
  while (!support.empty()) {
    const std::size_t m = support.size();
    std::vector<double> a(m * m);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < m; ++c) a[r * m + c] = k[support[r] * n + support[c]];
    }
    std::vector<double> y;
    if (!linear_solve(a, std::vector<double>(m, 1.0), m, y)) break;
    double total = std::accumulate(y.begin(), y.end(), 0.0);
    if (total <= 0.0) break;
    std::size_t worst = m;
    double worst_val = -1e-12 * total;
    for (std::size_t r = 0; r < m; ++r) {
      if (y[r] < worst_val) {
        worst_val = y[r];
        worst = r;
      }
    }
    if (worst != m) {
      support.erase(support.begin() + static_cast<std::ptrdiff_t>(worst));
      continue;
    }
    std::vector<double> cand(n, 0.0);
    for (std::size_t r = 0; r < m; ++r) cand[support[r]] = std::max(0.0, y[r]) / total;
    const double fc = quad_form(k, cand, n);
    if (fc <= f) {
      w = cand;
      f = fc;
    }
    break;
  }
  achieved = f;
}

}  // namespace

CombineResult combine_mgda(const TaskGradientSet& g, int fw_iters) {
  check_input(g);
  if (fw_iters < 1) throw ConfigError("mgda: fw_iters must be >= 1");
  const std::size_t n_tasks = g.tasks;
  const std::vector<double> k = gram(g);

  CombineResult res;
  const bool all_zero = std::all_of(k.begin(), k.end(), [](double v) { return v == 0.0; });
  if (all_zero) {
    res.direction.values.assign(g.dim, 0.0);
    res.task_weights = std::vector<double>(n_tasks, 1.0 / static_cast<double>(n_tasks));
    res.diagnostics["min_norm_sq"] = 0.0;
    return res;
  }

  std::vector<double> w(n_tasks);
  double achieved = 0.0;
  int used = 0;
  if (n_tasks == 2) {
    // gamma* = clip((g2 - g1).g2 / |g1 - g2|^2, 0, 1), weights (gamma, 1-gamma).
    const double den = k[0] - 2.0 * k[1] + k[3];
    double gamma;
    if (den <= 0.0) {
      gamma = k[0] <= k[3] ? 1.0 : 0.0;
    } else {
      gamma = std::clamp((k[3] - k[1]) / den, 0.0, 1.0);
    }
    w = {gamma, 1.0 - gamma};
    achieved = quad_form(k, w, 2);
  } else {
    min_norm_frank_wolfe(k, n_tasks, fw_iters, w, achieved, used);
  }

  res.direction.values = weighted_sum(g, w);
  res.task_weights = w;
  res.diagnostics["min_norm_sq"] = achieved;
  res.diagnostics["iterations"] = static_cast<double>(used);
  return res;
}

CombineResult combine_imtl_g(const TaskGradientSet& g) {
  check_input(g);
  const std::size_t n_tasks = g.tasks;

  CombineResult fallback = combine_average(g);
  fallback.fallback = true;

  std::vector<double> norms(n_tasks);
  for (std::size_t t = 0; t < n_tasks; ++t) {
    norms[t] = norm(g.row(t));
    if (norms[t] == 0.0) return fallback;
  }

  // Unknowns alpha_1..alpha_{T-1}; alpha_0 = 1 - sum. Row r enforces
  // d.u_0 = d.u_{r+1}.
  const std::size_t m = n_tasks - 1;
  std::vector<double> a(m * m), b(m);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      double acc = 0.0;
      for (std::size_t d = 0; d < g.dim; ++d) {
        const double u_diff = g.row(0)[d] / norms[0] - g.row(r + 1)[d] / norms[r + 1];
        acc += (g.row(c + 1)[d] - g.row(0)[d]) * u_diff;
      }
      a[r * m + c] = acc;
    }
    double acc = 0.0;
    for (std::size_t d = 0; d < g.dim; ++d) {
      const double u_diff = g.row(0)[d] / norms[0] - g.row(r + 1)[d] / norms[r + 1];
      acc += g.row(0)[d] * u_diff;
    }
    b[r] = -acc;
  }

  std::vector<double> tail;
  if (!linear_solve(a, b, m, tail)) return fallback;

  std::vector<double> alpha(n_tasks);
  alpha[0] = 1.0;
  for (std::size_t i = 0; i < m; ++i) {
    alpha[i + 1] = tail[i];
    alpha[0] -= tail[i];
  }

  CombineResult res;
  res.direction.values = weighted_sum(g, alpha);
  res.task_weights = alpha;

  const double dn = norm(res.direction.values);
  const double p0 = dot(res.direction.values, g.row(0)) / norms[0];
  double residual = 0.0;
  for (std::size_t t = 1; t < n_tasks; ++t) {
    const double pt = dot(res.direction.values, g.row(t)) / norms[t];
    residual = std::max(residual, std::fabs(pt - p0));
  }
  res.diagnostics["residual"] = residual;
  if (!all_finite(res.direction.values) || residual > 1e-8 * dn) return fallback;
  return res;
}

CombineResult combine_nashmtl(const TaskGradientSet& g, int fp_iters, double eps,
                              double damping) {
  check_input(g);
  if (fp_iters < 1) throw ConfigError("nashmtl: fp_iters must be >= 1");
  if (eps <= 0.0) throw ConfigError("nashmtl: eps must be positive");
  const std::size_t n_tasks = g.tasks;

  for (std::size_t t = 0; t < n_tasks; ++t) {
    if (squared_norm(g.row(t)) == 0.0) {
      CombineResult fb = combine_average(g);
      fb.fallback = true;
      return fb;
    }
  }

  const std::vector<double> k = gram(g);
  std::vector<double> alpha(n_tasks);
  for (std::size_t t = 0; t < n_tasks; ++t)
    alpha[t] = 1.0 / std::sqrt(k[t * n_tasks + t]);

  auto residual_of = [&](const std::vector<double>& a) {
    double res = 0.0;
    for (std::size_t i = 0; i < n_tasks; ++i) {
      double r = 0.0;
      for (std::size_t j = 0; j < n_tasks; ++j) r += k[i * n_tasks + j] * a[j];
      res = std::max(res, std::fabs(a[i] * r - 1.0));
    }
    return res;
  };

  double stationarity = residual_of(alpha);
  int used = 0;
  std::vector<double> r(n_tasks), cand(n_tasks);
  for (int it = 0; it < fp_iters && stationarity > eps; ++it) {
    ++used;
    for (std::size_t i = 0; i < n_tasks; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n_tasks; ++j) acc += k[i * n_tasks + j] * alpha[j];
      r[i] = std::max(acc, eps);  // clamp non-positive g_i . d
    }
    // Back off the damping until the step reduces the stationarity
    // residual; the iteration is then monotone.
    double lambda = damping;
    bool improved = false;
    for (int inner = 0; inner < 25; ++inner) {
      for (std::size_t i = 0; i < n_tasks; ++i)
        cand[i] = (1.0 - lambda) * alpha[i] + lambda / r[i];
      const double cand_res = residual_of(cand);
      if (cand_res < stationarity) {
        alpha = cand;
        stationarity = cand_res;
        improved = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!improved) break;
  }
  const std::vector<double>& best = alpha;
  const double best_res = stationarity;

  CombineResult res;
  res.direction.values = weighted_sum(g, best);
  res.task_weights = best;
  res.diagnostics["stationarity"] = best_res;
  res.diagnostics["iterations"] = static_cast<double>(used);
  res.fallback = best_res > eps;
  return res;
}

CombineResult combine(Method method, const TaskGradientSet& g, std::uint64_t seed,
                      const CombinerParams& params) {
  switch (method) {
    case Method::kJoint: return combine_average(g);
    case Method::kPcgrad: return combine_pcgrad(g, seed);
    case Method::kCagrad:
      return combine_cagrad(g, params.cagrad_c, params.cagrad_iters);
    case Method::kGraddrop:
      return combine_graddrop(g, seed, params.graddrop_leak);
    case Method::kMgda: return combine_mgda(g, params.mgda_iters);
    case Method::kImtlg: return combine_imtl_g(g);
    case Method::kNashmtl:
      return combine_nashmtl(g, params.nashmtl_iters, params.nashmtl_eps,
                             params.nashmtl_damping);
  }
  throw ConfigError("unknown method");
}

}  // namespace mtlopt
