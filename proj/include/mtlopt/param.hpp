#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mtlopt/errors.hpp"

namespace mtlopt {

enum class ParamKind { kWeight, kBias };

// One contiguous slice of the flattened shared-parameter vector.
struct LayoutEntry {
  std::size_t layer;
  ParamKind kind;
  std::size_t offset;
  std::size_t length;
  std::size_t fan_out;
  std::size_t fan_in;
};

// Index map between trunk layers and the flat shared vector. Entries are
// contiguous and non-overlapping by construction; flatten/unflatten round
// trips exactly.
struct ParamLayout {
  std::vector<LayoutEntry> entries;
  std::size_t total_shared = 0;
  std::vector<std::size_t> total_per_head;
};

// Flattened view of the shared parameters (theta_sha) or of a gradient /
// update direction over them. Length is fixed for the lifetime of a run.
struct ParamVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

// T x P matrix; row t is task t's gradient over the shared parameters.
struct TaskGradientSet {
  std::size_t tasks = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  TaskGradientSet() = default;
  TaskGradientSet(std::size_t t, std::size_t p)
      : tasks(t), dim(p), data(t * p, 0.0) {}

  std::span<double> row(std::size_t t) {
    return std::span<double>(data.data() + t * dim, dim);
  }
  std::span<const double> row(std::size_t t) const {
    return std::span<const double>(data.data() + t * dim, dim);
  }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline bool all_finite(std::span<const double> a) {
  for (double v : a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace mtlopt
