#include "mtlopt/synthetic.hpp"

#include <cmath>

#include "mtlopt/autodiff.hpp"
#include "mtlopt/errors.hpp"
#include "mtlopt/rng.hpp"

namespace mtlopt {

std::vector<std::size_t> SyntheticTaskSpec::head_dims() const {
  if (d_outs.size() == 1) return std::vector<std::size_t>(tasks, d_outs[0]);
  return d_outs;
}

void SyntheticTaskSpec::validate() const {
  if (tasks < 2) throw ConfigError("benchmark: tasks must be >= 2");
  if (d_in == 0) throw ConfigError("benchmark: d_in must be positive");
  if (trunk_widths.empty()) throw ConfigError("benchmark: empty trunk");
  if (d_outs.size() != 1 && d_outs.size() != tasks)
    throw ConfigError("benchmark: d_out must be one value or one per task");
  for (std::size_t d : d_outs) {
    if (d == 0) throw ConfigError("benchmark: d_out must be positive");
  }
  if (noise_std < 0.0) throw ConfigError("benchmark: noise_std must be >= 0");
  if (samples == 0) throw ConfigError("benchmark: samples must be >= 1");
  if (rho < -1.0 || rho > 1.0) throw ConfigError("benchmark: rho must be in [-1, 1]");
}

namespace {

Tensor random_inputs(std::size_t n, std::size_t d, std::uint64_t seed) {
  Tensor x = Tensor::zeros({n, d});
  Rng rng(seed);
  for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
  return x;
}

// Teacher head t = s_t * |rho| * base + (1 - |rho|) * indep_t, where s_t
// alternates sign over tasks when rho < 0.
void blend_heads(MtlModel& teacher, double rho, std::uint64_t seed) {
  const double mix = std::fabs(rho);
  for (std::size_t t = 0; t < teacher.heads.size(); ++t) {
    DenseLayer& head = teacher.heads[t];
    const double sign = (rho < 0.0 && t % 2 == 1) ? -1.0 : 1.0;

    Rng base_rng(derive_seed(seed, seed_stream::kTeacherBaseHead));
    Rng indep_rng(
        derive_seed(derive_seed(seed, seed_stream::kTeacherIndepHead), t));
    const double bound = 1.0 / std::sqrt(static_cast<double>(head.fan_in));
    for (double& w : head.weights) {
      const double base = base_rng.uniform(-bound, bound);
      const double indep = indep_rng.uniform(-bound, bound);
      w = sign * mix * base + (1.0 - mix) * indep;
    }
  }
}

std::vector<Tensor> noisy_targets(const MtlModel& teacher, const Tensor& inputs,
                                  double noise_std, std::uint64_t noise_seed) {
  TaskBatch probe;
  probe.inputs = inputs;

  std::vector<Tensor> targets = predict_heads(teacher, inputs);
  if (noise_std > 0.0) {
    Rng rng(noise_seed);
    for (Tensor& t : targets) {
      for (double& v : t.data) v += noise_std * rng.normal();
    }
  }
  return targets;
}

}  // namespace

Benchmark generate_benchmark(const SyntheticTaskSpec& spec) {
  spec.validate();
  Benchmark bench;
  bench.teacher = make_mtl_model(spec.d_in, spec.trunk_widths, spec.head_dims(),
                                 spec.activation, spec.teacher_seed);
  blend_heads(bench.teacher, spec.rho, spec.teacher_seed);

  bench.train_data.inputs = random_inputs(
      spec.samples, spec.d_in, derive_seed(spec.teacher_seed, seed_stream::kInputs));
  bench.train_data.targets =
      noisy_targets(bench.teacher, bench.train_data.inputs, spec.noise_std,
                    derive_seed(spec.teacher_seed, seed_stream::kNoise));

  bench.eval_data.inputs =
      random_inputs(spec.eval_samples, spec.d_in,
                    derive_seed(spec.teacher_seed, seed_stream::kEvalInputs));
  bench.eval_data.targets =
      noisy_targets(bench.teacher, bench.eval_data.inputs, spec.noise_std,
                    derive_seed(spec.teacher_seed, seed_stream::kEvalNoise));
  return bench;
}

TaskBatch slice_batch(const TaskBatch& full, std::size_t begin, std::size_t count) {
  if (begin + count > full.batch_size())
    throw ConfigError("slice_batch: range out of bounds");
  TaskBatch out;
  const std::size_t d_in = full.inputs.cols();
  out.inputs = Tensor::zeros({count, d_in});
  std::copy(full.inputs.data.begin() + begin * d_in,
            full.inputs.data.begin() + (begin + count) * d_in,
            out.inputs.data.begin());
  out.targets.reserve(full.targets.size());
  for (const Tensor& t : full.targets) {
    const std::size_t d = t.cols();
    Tensor slice = Tensor::zeros({count, d});
    std::copy(t.data.begin() + begin * d, t.data.begin() + (begin + count) * d,
              slice.data.begin());
    out.targets.push_back(std::move(slice));
  }
  return out;
}

}  // namespace mtlopt
