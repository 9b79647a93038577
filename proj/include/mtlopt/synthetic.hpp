#pragma once

#include <cstdint>
#include <vector>

#include "mtlopt/model.hpp"

namespace mtlopt {

// Teacher-network benchmark standing in for real multi-task datasets.
// rho controls how similar the teacher heads are: 0 independent heads,
// +1 identical heads, -1 identical up to alternating sign, which makes the
// tasks naturally conflicting.
struct SyntheticTaskSpec {
  std::size_t tasks = 3;
  std::size_t d_in = 16;
  std::vector<std::size_t> trunk_widths = {64, 64};
  std::vector<std::size_t> d_outs = {4};  // broadcast to all tasks if size 1
  std::uint64_t teacher_seed = 7;
  double noise_std = 0.05;
  std::size_t samples = 2048;
  std::size_t eval_samples = 512;
  double rho = 0.3;
  Activation activation = Activation::kTanh;

  std::vector<std::size_t> head_dims() const;
  void validate() const;
};

struct Benchmark {
  TaskBatch train_data;
  TaskBatch eval_data;
  MtlModel teacher;
};

// Deterministic in teacher_seed: inputs are standard normal, targets are
// teacher outputs plus Gaussian noise of the given std.
Benchmark generate_benchmark(const SyntheticTaskSpec& spec);

// Rows [begin, begin + count) of every tensor in the batch.
TaskBatch slice_batch(const TaskBatch& full, std::size_t begin, std::size_t count);

}  // namespace mtlopt
