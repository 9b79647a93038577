#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "mtlopt/errors.hpp"

namespace mtlopt {

// Dense row-major tensor of doubles. Only rank 1 and 2 are used in
// practice (vectors, [rows x cols] matrices).
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (element_count() != data.size())
      throw ConfigError("Tensor: shape does not match data length");
  }

  static Tensor zeros(std::vector<std::size_t> s) {
    std::size_t n = 1;
    for (std::size_t v : s) n *= v;
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }

  std::size_t element_count() const {
    std::size_t n = 1;
    for (std::size_t v : shape) n *= v;
    return shape.empty() ? 0 : n;
  }

  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
};

}  // namespace mtlopt
