#include <bit>
#include <cmath>

#include <doctest.h>

#include "mtlopt/combiners.hpp"
#include "mtlopt/errors.hpp"
#include "mtlopt/rng.hpp"
#include "oracles.hpp"

using namespace mtlopt;

namespace {

TaskGradientSet rows(std::vector<std::vector<double>> data) {
  TaskGradientSet g(data.size(), data[0].size());
  for (std::size_t t = 0; t < data.size(); ++t)
    std::copy(data[t].begin(), data[t].end(), g.row(t).begin());
  return g;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i]))
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("average: hand examples and naive oracle") {
  CHECK(combine_average(rows({{1, 0}, {0, 1}})).direction.values ==
        std::vector<double>{0.5, 0.5});

  const TaskGradientSet same = rows({{2, -3, 1}, {2, -3, 1}, {2, -3, 1}});
  for (std::size_t d = 0; d < 3; ++d)
    CHECK(combine_average(same).direction.values[d] ==
          doctest::Approx(same.row(0)[d]).epsilon(1e-15));

  const TaskGradientSet g = oracles::random_gradients(3, 17, 404);
  const CombineResult res = combine_average(g);
  for (std::size_t d = 0; d < g.dim; ++d) {
    const double naive = (g.row(0)[d] + g.row(1)[d] + g.row(2)[d]) / 3.0;
    CHECK(res.direction.values[d] == doctest::Approx(naive).epsilon(1e-15));
  }
  CHECK(res.task_weights.has_value());
  CHECK((*res.task_weights)[0] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("average scales linearly") {
  const TaskGradientSet g = oracles::random_gradients(4, 9, 8);
  const double s = -2.75;
  TaskGradientSet scaled = g;
  for (double& v : scaled.data) v *= s;
  const auto base = combine_average(g).direction.values;
  const auto after = combine_average(scaled).direction.values;
  for (std::size_t d = 0; d < g.dim; ++d)
    CHECK(after[d] == doctest::Approx(s * base[d]).epsilon(1e-13));
}

TEST_CASE("pcgrad leaves non-conflicting gradients alone") {
  const CombineResult res = combine_pcgrad(rows({{1, 0}, {0, 1}}), 3);
  CHECK(res.direction.values == std::vector<double>{0.5, 0.5});
  CHECK(res.diagnostics.at("projections") == 0.0);
}

TEST_CASE("pcgrad hand example is exact in 64-bit arithmetic") {
  // g1 = (1,0), g2 = (-1,1): g1' = (0.5, 0.5), g2' = (0, 1), mean (0.25, 0.75).
  const CombineResult res = combine_pcgrad(rows({{1, 0}, {-1, 1}}), 17);
  CHECK(res.direction.values == std::vector<double>{0.25, 0.75});
  CHECK(res.diagnostics.at("projections") == 2.0);
}

TEST_CASE("pcgrad projections are orthogonal to the opposing original gradient") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    TaskGradientSet g = oracles::random_gradients(2, 12, 1000 + seed);
    if (dot(g.row(0), g.row(1)) >= 0.0) {
      for (std::size_t d = 0; d < g.dim; ++d) g.row(1)[d] -= 2.0 * g.row(0)[d];
    }
    if (dot(g.row(0), g.row(1)) >= 0.0) continue;

    const CombineResult res = combine_pcgrad(g, seed);

    // Recompute the projections by hand (T = 2, single projection each).
    std::vector<double> p0(g.dim), p1(g.dim);
    const double c0 = dot(g.row(0), g.row(1)) / squared_norm(g.row(1));
    const double c1 = dot(g.row(1), g.row(0)) / squared_norm(g.row(0));
    for (std::size_t d = 0; d < g.dim; ++d) {
      p0[d] = g.row(0)[d] - c0 * g.row(1)[d];
      p1[d] = g.row(1)[d] - c1 * g.row(0)[d];
    }
    CHECK(dot(p0, g.row(1)) >= -1e-12 * norm(p0) * norm(g.row(1)));
    CHECK(dot(p1, g.row(0)) >= -1e-12 * norm(p1) * norm(g.row(0)));
    for (std::size_t d = 0; d < g.dim; ++d) {
      CHECK(res.direction.values[d] ==
            doctest::Approx(0.5 * (p0[d] + p1[d])).epsilon(1e-12));
    }
  }
}

TEST_CASE("pcgrad multi-task run matches a replay of its recorded order") {
  const TaskGradientSet g = oracles::random_gradients(4, 10, 31337);
  const CombineResult res = combine_pcgrad(g, 5);
  REQUIRE(res.projection_order.size() == 4 * 3);

  std::vector<double> acc(g.dim, 0.0);
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < g.tasks; ++i) {
    std::vector<double> proj(g.row(i).begin(), g.row(i).end());
    for (std::size_t step = 0; step + 1 < g.tasks; ++step) {
      const std::size_t j = res.projection_order[cursor++];
      REQUIRE(j != i);
      const double d = dot(proj, g.row(j));
      if (d < 0.0) {
        const double coef = d / squared_norm(g.row(j));
        for (std::size_t c = 0; c < g.dim; ++c) proj[c] -= coef * g.row(j)[c];
        // The per-projection guarantee, on the replayed internals.
        CHECK(dot(proj, g.row(j)) >= -1e-12 * norm(proj) * norm(g.row(j)));
      }
    }
    for (std::size_t c = 0; c < g.dim; ++c) acc[c] += proj[c];
  }
  for (std::size_t c = 0; c < g.dim; ++c)
    CHECK(res.direction.values[c] == doctest::Approx(acc[c] / 4.0).epsilon(1e-13));
}

TEST_CASE("pcgrad skips zero-norm opponents") {
  const CombineResult res = combine_pcgrad(rows({{1, 0}, {0, 0}}), 2);
  CHECK(res.direction.values == std::vector<double>{0.5, 0.0});
}

TEST_CASE("cagrad with c = 0 is exactly the average") {
  const TaskGradientSet g = oracles::random_gradients(3, 20, 606);
  const CombineResult avg = combine_average(g);
  const CombineResult res = combine_cagrad(g, 0.0, 50);
  CHECK(bitwise_equal(res.direction.values, avg.direction.values));
}

TEST_CASE("cagrad on identical rows returns (1 + c) v") {
  const std::vector<double> v = {0.3, -1.2, 0.8};
  const TaskGradientSet g = rows({v, v});
  const double c = 0.4;
  const CombineResult res = combine_cagrad(g, c, 50);
  for (std::size_t d = 0; d < 3; ++d)
    CHECK(res.direction.values[d] == doctest::Approx((1.0 + c) * v[d]).epsilon(1e-12));
}

TEST_CASE("cagrad objective matches a fine grid search for T = 2") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TaskGradientSet g = oracles::random_gradients(2, 16, 7000 + seed);
    const CombineResult res = combine_cagrad(g, 0.4, 50);
    const double ours = res.diagnostics.at("objective");
    const double grid = oracles::cagrad_objective_grid(g, 0.4, 1e-4);
    CHECK(std::fabs(ours - grid) <= 1e-3 * std::max(1e-9, std::fabs(grid)));
  }
}

TEST_CASE("graddrop keeps same-sign coordinates exactly") {
  // Coordinate purity is 0 or 1 here, so the draw can never drop anything.
  const TaskGradientSet g = rows({{1.5, -2.0, 0.25}, {0.5, -1.0, 0.75}});
  const CombineResult avg = combine_average(g);
  for (std::uint64_t seed = 0; seed < 16; ++seed) {
    const CombineResult res = combine_graddrop(g, seed, 0.0);
    CHECK(bitwise_equal(res.direction.values, avg.direction.values));
  }
}

TEST_CASE("graddrop with leak = 1 reproduces the average exactly") {
  const TaskGradientSet g = oracles::random_gradients(3, 24, 99);
  const CombineResult avg = combine_average(g);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const CombineResult res = combine_graddrop(g, seed, 1.0);
    CHECK(bitwise_equal(res.direction.values, avg.direction.values));
  }
}

TEST_CASE("graddrop symmetric conflict keeps the positive part half the time") {
  const TaskGradientSet g = rows({{1.0}, {-1.0}});
  std::size_t kept_positive = 0;
  const std::size_t trials = 100000;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const CombineResult res = combine_graddrop(g, trial, 0.0);
    // Kept positive -> direction = +0.5; kept negative -> -0.5.
    if (res.direction.values[0] > 0.0) ++kept_positive;
  }
  const double rate = static_cast<double>(kept_positive) / trials;
  CHECK(rate >= 0.49);
  CHECK(rate <= 0.51);
}

TEST_CASE("graddrop zero-sum coordinates pass through as zero") {
  const TaskGradientSet g = rows({{0.0, 1.0}, {0.0, 1.0}});
  const CombineResult res = combine_graddrop(g, 1, 0.0);
  CHECK(res.direction.values[0] == 0.0);
  CHECK(res.direction.values[1] == 1.0);
}

TEST_CASE("mgda closed-form examples") {
  SUBCASE("orthogonal pair gives uniform weights") {
    const CombineResult res = combine_mgda(rows({{1, 0}, {0, 1}}), 100);
    CHECK((*res.task_weights)[0] == doctest::Approx(0.5));
    CHECK(res.direction.values[0] == doctest::Approx(0.5));
    CHECK(res.direction.values[1] == doctest::Approx(0.5));
  }
  SUBCASE("collinear pair picks the shorter vector") {
    const CombineResult res = combine_mgda(rows({{2, 0}, {1, 0}}), 100);
    CHECK((*res.task_weights)[0] == doctest::Approx(0.0));
    CHECK((*res.task_weights)[1] == doctest::Approx(1.0));
    CHECK(res.direction.values[0] == doctest::Approx(1.0));
  }
  SUBCASE("opposite gradients meet at the origin") {
    const CombineResult res = combine_mgda(rows({{3, -1}, {-3, 1}}), 100);
    CHECK(norm(res.direction.values) <= 1e-12);
  }
  SUBCASE("all-zero gradients give zero direction and uniform weights") {
    const CombineResult res = combine_mgda(rows({{0, 0}, {0, 0}, {0, 0}}), 100);
    CHECK(res.direction.values == std::vector<double>{0, 0});
    CHECK((*res.task_weights)[1] == doctest::Approx(1.0 / 3.0));
  }
}

TEST_CASE("mgda direction is min-norm against a simplex grid") {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    for (std::size_t t_count : {std::size_t{2}, std::size_t{3}}) {
      const TaskGradientSet g =
          oracles::random_gradients(t_count, 32, 2000 + seed * 2 + t_count);
      const CombineResult res = combine_mgda(g, 100);
      const double ours = squared_norm(res.direction.values);
      const double grid = oracles::min_norm_grid(g, 1e-2, 1e-4);
      CHECK(ours <= grid + 1e-6);
      CHECK(std::fabs(ours - grid) <= 1e-6);
    }
  }
}

TEST_CASE("mgda min-norm direction is a descent direction for every task") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const TaskGradientSet g = oracles::random_gradients(3, 16, 5000 + seed);
    const CombineResult res = combine_mgda(g, 100);
    if (norm(res.direction.values) <= 1e-12) continue;
    for (std::size_t t = 0; t < g.tasks; ++t)
      CHECK(dot(res.direction.values, g.row(t)) >= -1e-9);
  }
}

TEST_CASE("imtl-g equalizes projections") {
  SUBCASE("orthogonal pair") {
    const CombineResult res = combine_imtl_g(rows({{1, 0}, {0, 1}}));
    CHECK_FALSE(res.fallback);
    CHECK(res.direction.values[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(res.direction.values[1] == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("symmetric instance gets uniform weights") {
    const CombineResult res =
        combine_imtl_g(rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
    REQUIRE(res.task_weights.has_value());
    for (double a : *res.task_weights)
      CHECK(a == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("seeded instances satisfy the residual bound") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const TaskGradientSet g = oracles::random_gradients(3, 32, 4000 + seed);
      const CombineResult res = combine_imtl_g(g);
      REQUIRE_FALSE(res.fallback);
      std::vector<double> cos_to(g.tasks);
      for (std::size_t t = 0; t < g.tasks; ++t)
        cos_to[t] = dot(res.direction.values, g.row(t)) / norm(g.row(t));
      for (std::size_t t = 1; t < g.tasks; ++t) {
        CHECK(std::fabs(cos_to[t] - cos_to[0]) <=
              1e-8 * norm(res.direction.values));
      }
    }
  }
  SUBCASE("duplicated gradient directions fall back to the average") {
    const TaskGradientSet g = rows({{1, 1}, {2, 2}});
    const CombineResult res = combine_imtl_g(g);
    CHECK(res.fallback);
    CHECK(bitwise_equal(res.direction.values, combine_average(g).direction.values));
  }
}

TEST_CASE("nashmtl bargaining weights") {
  SUBCASE("orthonormal pair is the exact fixed point") {
    const CombineResult res = combine_nashmtl(rows({{1, 0}, {0, 1}}), 20, 1e-6);
    CHECK(std::fabs((*res.task_weights)[0] - 1.0) <= 1e-9);
    CHECK(std::fabs((*res.task_weights)[1] - 1.0) <= 1e-9);
    CHECK(res.direction.values[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(res.direction.values[1] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_FALSE(res.fallback);
  }
  SUBCASE("identical unit rows solve alpha (2 alpha) = 1") {
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    const CombineResult res =
        combine_nashmtl(rows({{1, 0}, {1, 0}}), 60, 1e-10);
    CHECK((*res.task_weights)[0] == doctest::Approx(inv_sqrt2).epsilon(1e-5));
    CHECK(res.direction.values[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-5));
  }
  SUBCASE("converged instances satisfy the stationarity residual") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      TaskGradientSet g = oracles::random_gradients(3, 32, 6000 + seed);
      for (std::size_t t = 0; t < g.tasks; ++t) {
        const double n = norm(g.row(t));
        for (double& v : g.row(t)) v /= n;
      }
      const CombineResult res = combine_nashmtl(g, 100, 1e-6);
      REQUIRE_FALSE(res.fallback);
      double residual = 0.0;
      for (std::size_t t = 0; t < g.tasks; ++t) {
        const double gid = dot(g.row(t), res.direction.values);
        residual = std::max(residual,
                            std::fabs((*res.task_weights)[t] * gid - 1.0));
      }
      CHECK(residual <= 1e-6);
    }
  }
  SUBCASE("zero rows fall back to the average") {
    const CombineResult res = combine_nashmtl(rows({{0, 0}, {1, 0}}), 20, 1e-6);
    CHECK(res.fallback);
  }
}

TEST_CASE("every combiner returns a finite direction of the right size") {
  const CombinerParams params;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const TaskGradientSet g = oracles::random_gradients(3, 21, 8800 + seed);
    for (Method m : {Method::kJoint, Method::kPcgrad, Method::kCagrad,
                     Method::kGraddrop, Method::kMgda, Method::kImtlg,
                     Method::kNashmtl}) {
      const CombineResult res = combine(m, g, seed, params);
      CHECK(res.direction.values.size() == g.dim);
      CHECK(all_finite(res.direction.values));
      if (res.task_weights.has_value()) CHECK(all_finite(*res.task_weights));
    }
  }
}

TEST_CASE("combiners reject degenerate inputs") {
  CHECK_THROWS_AS(combine_average(TaskGradientSet(1, 4)), ConfigError);
  CHECK_THROWS_AS(combine_cagrad(oracles::random_gradients(2, 4, 1), -0.1, 10),
                  ConfigError);
  CHECK_THROWS_AS(combine_graddrop(oracles::random_gradients(2, 4, 1), 0, 1.5),
                  ConfigError);
  TaskGradientSet bad = oracles::random_gradients(2, 4, 2);
  bad.data[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(combine_average(bad), NumericError);
}
