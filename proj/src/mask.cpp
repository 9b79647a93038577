#include "mtlopt/mask.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mtlopt/errors.hpp"
#include "mtlopt/rng.hpp"

namespace mtlopt {

std::string to_string(MaskVariant v) {
  switch (v) {
    case MaskVariant::kDense: return "dense";
    case MaskVariant::kPsn: return "psn";
    case MaskVariant::kRandom: return "random";
    case MaskVariant::kGlobal: return "global";
    case MaskVariant::kReverse: return "reverse";
  }
  return "dense";
}

MaskVariant mask_variant_from_string(const std::string& s) {
  if (s == "dense") return MaskVariant::kDense;
  if (s == "psn") return MaskVariant::kPsn;
  if (s == "random") return MaskVariant::kRandom;
  if (s == "global") return MaskVariant::kGlobal;
  if (s == "reverse") return MaskVariant::kReverse;
  throw ConfigError("unknown mask variant '" + s + "'");
}

Mask::Mask(MaskVariant variant, double k_or_fraction, std::vector<std::uint8_t> bits)
    : variant_(variant), k_or_fraction_(k_or_fraction), bits_(std::move(bits)) {
  selected_count_ = 0;
  for (std::uint8_t b : bits_) selected_count_ += (b != 0);
}

namespace {

// All-biases-selected baseline; weight bits start cleared.
std::vector<std::uint8_t> bias_only_bits(const ParamLayout& layout) {
  std::vector<std::uint8_t> bits(layout.total_shared, 0);
  for (const LayoutEntry& e : layout.entries) {
    if (e.kind == ParamKind::kBias)
      std::fill(bits.begin() + e.offset, bits.begin() + e.offset + e.length, 1);
  }
  return bits;
}

// Indices of the k largest (or smallest) |w| within one neuron's input row,
// ties resolved toward the lower column index.
void select_row(const double* row, std::size_t fan_in, std::size_t k, bool largest,
                std::vector<std::size_t>& order) {
  order.resize(fan_in);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ma = std::fabs(row[a]);
    const double mb = std::fabs(row[b]);
    if (ma != mb) return largest ? ma > mb : ma < mb;
    return a < b;
  });
  order.resize(k);
}

Mask build_per_neuron_mask(const MtlModel& model, std::size_t k, bool largest,
                           MaskVariant variant) {
  if (k < 1) throw ConfigError("mask: k must be >= 1");
  auto bits = bias_only_bits(model.layout);
  std::vector<std::size_t> picked;
  for (std::size_t li = 0; li < model.trunk.size(); ++li) {
    const DenseLayer& layer = model.trunk[li];
    const LayoutEntry& we = model.layout.entries[2 * li];
    const std::size_t row_k = std::min(k, layer.fan_in);
    for (std::size_t o = 0; o < layer.fan_out; ++o) {
      select_row(layer.weights.data() + o * layer.fan_in, layer.fan_in, row_k,
                 largest, picked);
      for (std::size_t col : picked) bits[we.offset + o * layer.fan_in + col] = 1;
    }
  }
  return Mask(variant, static_cast<double>(k), std::move(bits));
}

}  // namespace

Mask build_dense_mask(const ParamLayout& layout) {
  return Mask(MaskVariant::kDense, 1.0,
              std::vector<std::uint8_t>(layout.total_shared, 1));
}

Mask build_psn_mask(const MtlModel& model, std::size_t k) {
  return build_per_neuron_mask(model, k, /*largest=*/true, MaskVariant::kPsn);
}

Mask build_reverse_mask(const MtlModel& model, std::size_t k) {
  return build_per_neuron_mask(model, k, /*largest=*/false, MaskVariant::kReverse);
}

Mask build_random_mask(const MtlModel& model, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("mask: fraction must be in (0, 1]");
  auto bits = bias_only_bits(model.layout);
  Rng rng(derive_seed(seed, seed_stream::kMask));
  for (std::size_t li = 0; li < model.trunk.size(); ++li) {
    const DenseLayer& layer = model.trunk[li];
    const LayoutEntry& we = model.layout.entries[2 * li];
    const std::size_t count = layer.weights.size();
    const std::size_t keep =
        std::min<std::size_t>(count, static_cast<std::size_t>(
                                         std::ceil(fraction * static_cast<double>(count))));
    // Partial Fisher-Yates: the first `keep` slots end up a uniform sample.
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < keep; ++i) {
      const std::size_t j = i + rng.below(count - i);
      std::swap(idx[i], idx[j]);
      bits[we.offset + idx[i]] = 1;
    }
  }
  return Mask(MaskVariant::kRandom, fraction, std::move(bits));
}

Mask build_global_mask(const MtlModel& model, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("mask: fraction must be in (0, 1]");
  auto bits = bias_only_bits(model.layout);

  // (|w|, flat offset) over every trunk weight.
  std::vector<std::pair<double, std::size_t>> mags;
  for (std::size_t li = 0; li < model.trunk.size(); ++li) {
    const DenseLayer& layer = model.trunk[li];
    const LayoutEntry& we = model.layout.entries[2 * li];
    for (std::size_t i = 0; i < layer.weights.size(); ++i)
      mags.emplace_back(std::fabs(layer.weights[i]), we.offset + i);
  }
  const std::size_t keep = std::min<std::size_t>(
      mags.size(),
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(mags.size()))));
  std::stable_sort(mags.begin(), mags.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t i = 0; i < keep; ++i) bits[mags[i].second] = 1;
  return Mask(MaskVariant::kGlobal, fraction, std::move(bits));
}

Mask build_mask(const MtlModel& model, MaskVariant variant, std::size_t k,
                double fraction, std::uint64_t seed) {
  switch (variant) {
    case MaskVariant::kDense: return build_dense_mask(model.layout);
    case MaskVariant::kPsn: return build_psn_mask(model, k);
    case MaskVariant::kRandom: return build_random_mask(model, fraction, seed);
    case MaskVariant::kGlobal: return build_global_mask(model, fraction);
    case MaskVariant::kReverse: return build_reverse_mask(model, k);
  }
  throw ConfigError("unknown mask variant");
}

ParamVector apply_mask(const Mask& mask, const ParamVector& grad) {
  if (grad.size() != mask.total()) throw ConfigError("apply_mask: length mismatch");
  ParamVector out;
  out.values.resize(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i)
    out.values[i] = mask.selected(i) ? grad[i] : 0.0;
  return out;
}

void apply_mask_in_place(const Mask& mask, std::span<double> grad) {
  if (grad.size() != mask.total()) throw ConfigError("apply_mask: length mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!mask.selected(i)) grad[i] = 0.0;
  }
}

void save_mask(const Mask& mask, std::ostream& out) {
  out << to_string(mask.variant()) << ',';
  if (mask.variant() == MaskVariant::kPsn || mask.variant() == MaskVariant::kReverse) {
    out << static_cast<std::size_t>(mask.k_or_fraction());
  } else {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), mask.k_or_fraction(),
                             std::chars_format::general, 9);
    out << std::string_view(buf, res.ptr - buf);
  }
  out << ',' << mask.total() << ',' << mask.selected_count() << '\n';
  for (std::size_t i = 0; i < mask.total(); ++i) {
    if (mask.selected(i)) out << i << '\n';
  }
}

void save_mask_file(const Mask& mask, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArtifactError("cannot open " + path + " for writing");
  save_mask(mask, out);
  if (!out) throw ArtifactError("failed writing " + path);
}

Mask load_mask(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw ArtifactError("mask: empty file");
  std::stringstream hs(header);
  std::string variant_s, kf_s, total_s, selected_s;
  if (!std::getline(hs, variant_s, ',') || !std::getline(hs, kf_s, ',') ||
      !std::getline(hs, total_s, ',') || !std::getline(hs, selected_s, ','))
    throw ArtifactError("mask: malformed header");
  const MaskVariant variant = mask_variant_from_string(variant_s);
  const double kf = std::stod(kf_s);
  const std::size_t total = std::stoull(total_s);
  const std::size_t selected = std::stoull(selected_s);

  std::vector<std::uint8_t> bits(total, 0);
  std::string line;
  std::size_t seen = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t off = std::stoull(line);
    if (off >= total) throw ArtifactError("mask: offset out of range");
    if (!bits[off]) ++seen;
    bits[off] = 1;
  }
  if (seen != selected) throw ArtifactError("mask: selected count mismatch");
  return Mask(variant, kf, std::move(bits));
}

Mask load_mask_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open " + path);
  return load_mask(in);
}

}  // namespace mtlopt
