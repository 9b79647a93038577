#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mtlopt/model.hpp"
#include "mtlopt/param.hpp"

namespace mtlopt {

enum class MaskVariant { kDense, kPsn, kRandom, kGlobal, kReverse };

std::string to_string(MaskVariant v);
MaskVariant mask_variant_from_string(const std::string& s);

// Binary selection over the shared parameters: the diagonal of the sparse
// training mask M. Built once before training and immutable afterwards.
// Bias entries are always selected; heads are never part of the mask.
class Mask {
 public:
  Mask(MaskVariant variant, double k_or_fraction, std::vector<std::uint8_t> bits);

  MaskVariant variant() const { return variant_; }
  double k_or_fraction() const { return k_or_fraction_; }
  std::size_t total() const { return bits_.size(); }
  std::size_t selected_count() const { return selected_count_; }
  bool selected(std::size_t i) const { return bits_[i] != 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

 private:
  MaskVariant variant_;
  double k_or_fraction_;
  std::vector<std::uint8_t> bits_;
  std::size_t selected_count_;
};

Mask build_dense_mask(const ParamLayout& layout);

// Top-k input connections by |weight| per output neuron; ties broken by
// lower column index. k is clamped to fan_in per layer.
Mask build_psn_mask(const MtlModel& model, std::size_t k);

// Per layer, ceil(fraction * weight_count) weight entries drawn uniformly
// without replacement.
Mask build_random_mask(const MtlModel& model, double fraction, std::uint64_t seed);

// Top ceil(fraction * total_weight_count) weights by |w| over the whole
// trunk jointly; ties broken by lower flat offset.
Mask build_global_mask(const MtlModel& model, double fraction);

// Bottom-k per neuron; same counting and tie rules as PSN.
Mask build_reverse_mask(const MtlModel& model, std::size_t k);

Mask build_mask(const MtlModel& model, MaskVariant variant, std::size_t k,
                double fraction, std::uint64_t seed);

// out_i = bits_i ? grad_i : 0, exact zeroing.
ParamVector apply_mask(const Mask& mask, const ParamVector& grad);
void apply_mask_in_place(const Mask& mask, std::span<double> grad);

// Line-oriented run artifact: header "variant,k_or_fraction,total,selected"
// followed by the offsets of set bits, one per line.
void save_mask(const Mask& mask, std::ostream& out);
void save_mask_file(const Mask& mask, const std::string& path);
Mask load_mask(std::istream& in);
Mask load_mask_file(const std::string& path);

}  // namespace mtlopt
