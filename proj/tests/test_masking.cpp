#include <cmath>
#include <set>
#include <sstream>

#include <doctest.h>

#include "mtlopt/errors.hpp"
#include "mtlopt/mask.hpp"
#include "mtlopt/model.hpp"
#include "oracles.hpp"

using namespace mtlopt;

namespace {

MtlModel model_with_trunk_weights(std::size_t fan_in, std::size_t fan_out,
                                  std::vector<double> weights) {
  MtlModel m = make_mtl_model(fan_in, {fan_out}, {2, 2}, Activation::kTanh, 1);
  m.trunk[0].weights = std::move(weights);
  return m;
}

MtlModel seeded_model() {
  return make_mtl_model(6, {8, 5}, {2, 2}, Activation::kTanh, 321);
}

}  // namespace

TEST_CASE("psn selects the highest-magnitude weight per neuron") {
  // Rows (0.2, -0.9, 0.1) and (0.5, -0.3, 0.7); top-1 picks -0.9 and 0.7.
  MtlModel m = model_with_trunk_weights(3, 2, {0.2, -0.9, 0.1, 0.5, -0.3, 0.7});
  const Mask mask = build_psn_mask(m, 1);

  CHECK(mask.selected(1));
  CHECK(mask.selected(5));
  CHECK_FALSE(mask.selected(0));
  CHECK_FALSE(mask.selected(2));
  CHECK_FALSE(mask.selected(3));
  CHECK_FALSE(mask.selected(4));
  // Biases (offsets 6, 7) are always trainable.
  CHECK(mask.selected(6));
  CHECK(mask.selected(7));
  CHECK(mask.selected_count() == 4);
}

TEST_CASE("psn with k = fan_in equals the dense mask") {
  MtlModel m = seeded_model();
  const Mask psn = build_psn_mask(m, 8);  // clamped to each layer's fan_in
  const Mask dense = build_dense_mask(m.layout);
  CHECK(psn.bits() == dense.bits());
}

TEST_CASE("psn matches the per-row full-sort oracle") {
  MtlModel m = seeded_model();
  const std::size_t k = 2;
  const Mask mask = build_psn_mask(m, k);

  for (std::size_t li = 0; li < m.trunk.size(); ++li) {
    const DenseLayer& layer = m.trunk[li];
    const LayoutEntry& we = m.layout.entries[2 * li];
    for (std::size_t o = 0; o < layer.fan_out; ++o) {
      const auto order = oracles::sort_row_by_magnitude(
          layer.weights.data() + o * layer.fan_in, layer.fan_in, /*largest=*/true);
      std::set<std::size_t> expect(order.begin(),
                                   order.begin() + std::min(k, layer.fan_in));
      for (std::size_t c = 0; c < layer.fan_in; ++c) {
        CHECK(mask.selected(we.offset + o * layer.fan_in + c) ==
              (expect.count(c) > 0));
      }
    }
  }
}

TEST_CASE("psn keeps every neuron connected") {
  MtlModel m = seeded_model();
  const Mask mask = build_psn_mask(m, 1);
  for (std::size_t li = 0; li < m.trunk.size(); ++li) {
    const DenseLayer& layer = m.trunk[li];
    const LayoutEntry& we = m.layout.entries[2 * li];
    for (std::size_t o = 0; o < layer.fan_out; ++o) {
      std::size_t row_selected = 0;
      for (std::size_t c = 0; c < layer.fan_in; ++c)
        row_selected += mask.selected(we.offset + o * layer.fan_in + c) ? 1 : 0;
      CHECK(row_selected == 1);
    }
  }
}

TEST_CASE("psn magnitude ties break toward the lower column") {
  MtlModel m = model_with_trunk_weights(3, 1, {0.5, -0.5, 0.5});
  const Mask mask = build_psn_mask(m, 2);
  CHECK(mask.selected(0));
  CHECK(mask.selected(1));
  CHECK_FALSE(mask.selected(2));
}

TEST_CASE("random mask counting and determinism") {
  MtlModel m = model_with_trunk_weights(5, 2, std::vector<double>(10, 1.0));

  SUBCASE("fraction 1 selects every weight") {
    const Mask mask = build_random_mask(m, 1.0, 4);
    CHECK(mask.bits() == build_dense_mask(m.layout).bits());
  }
  SUBCASE("fraction 0.5 of a 10-weight layer selects exactly 5") {
    const Mask mask = build_random_mask(m, 0.5, 4);
    std::size_t weight_bits = 0;
    for (std::size_t i = 0; i < 10; ++i) weight_bits += mask.selected(i) ? 1 : 0;
    CHECK(weight_bits == 5);
  }
  SUBCASE("same seed gives the same mask, different seed differs") {
    const Mask a = build_random_mask(m, 0.4, 7);
    const Mask b = build_random_mask(m, 0.4, 7);
    const Mask c = build_random_mask(m, 0.4, 8);
    CHECK(a.bits() == b.bits());
    CHECK(a.bits() != c.bits());
  }
  SUBCASE("per-layer proportions hold on a multi-layer trunk") {
    MtlModel deep = seeded_model();
    const Mask mask = build_random_mask(deep, 0.25, 11);
    for (std::size_t li = 0; li < deep.trunk.size(); ++li) {
      const DenseLayer& layer = deep.trunk[li];
      const LayoutEntry& we = deep.layout.entries[2 * li];
      std::size_t bits = 0;
      for (std::size_t i = 0; i < layer.weights.size(); ++i)
        bits += mask.selected(we.offset + i) ? 1 : 0;
      CHECK(bits == static_cast<std::size_t>(
                        std::ceil(0.25 * static_cast<double>(layer.weights.size()))));
    }
  }
}

TEST_CASE("global mask takes the highest magnitudes over the whole trunk") {
  SUBCASE("hand example: {0.9, 0.1, 0.5, 0.4} at fraction 0.5 keeps 0.9 and 0.5") {
    MtlModel m = model_with_trunk_weights(2, 2, {0.9, 0.1, 0.5, 0.4});
    const Mask mask = build_global_mask(m, 0.5);
    CHECK(mask.selected(0));
    CHECK_FALSE(mask.selected(1));
    CHECK(mask.selected(2));
    CHECK_FALSE(mask.selected(3));
  }
  SUBCASE("fraction 1 is dense") {
    MtlModel m = seeded_model();
    CHECK(build_global_mask(m, 1.0).bits() == build_dense_mask(m.layout).bits());
  }
  SUBCASE("matches a flatten-and-sort oracle") {
    MtlModel m = seeded_model();
    const double fraction = 0.3;
    const Mask mask = build_global_mask(m, fraction);

    std::vector<std::pair<double, std::size_t>> flat;
    for (std::size_t li = 0; li < m.trunk.size(); ++li) {
      const LayoutEntry& we = m.layout.entries[2 * li];
      for (std::size_t i = 0; i < m.trunk[li].weights.size(); ++i)
        flat.emplace_back(std::fabs(m.trunk[li].weights[i]), we.offset + i);
    }
    std::sort(flat.begin(), flat.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    const std::size_t keep = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(flat.size())));
    std::set<std::size_t> expect;
    for (std::size_t i = 0; i < keep; ++i) expect.insert(flat[i].second);
    for (const auto& [mag, off] : flat)
      CHECK(mask.selected(off) == (expect.count(off) > 0));
  }
}

TEST_CASE("reverse mask selects the lowest magnitudes per neuron") {
  SUBCASE("hand example selects 0.1") {
    MtlModel m = model_with_trunk_weights(3, 1, {0.2, -0.9, 0.1});
    const Mask mask = build_reverse_mask(m, 1);
    CHECK_FALSE(mask.selected(0));
    CHECK_FALSE(mask.selected(1));
    CHECK(mask.selected(2));
  }
  SUBCASE("k = fan_in is dense on weights") {
    MtlModel m = seeded_model();
    CHECK(build_reverse_mask(m, 8).bits() == build_dense_mask(m.layout).bits());
  }
  SUBCASE("reverse(k) and psn(fan_in - k) partition rows with distinct magnitudes") {
    MtlModel m = seeded_model();
    for (std::size_t li = 0; li < m.trunk.size(); ++li) {
      const std::size_t fan_in = m.trunk[li].fan_in;
      const std::size_t k = fan_in / 2;
      const Mask rev = build_reverse_mask(m, k);
      // One k per build; restrict the check to this layer's weights.
      const Mask psn = build_psn_mask(m, fan_in - k);
      const LayoutEntry& we = m.layout.entries[2 * li];
      for (std::size_t i = 0; i < m.trunk[li].weights.size(); ++i) {
        const std::size_t off = we.offset + i;
        CHECK((rev.selected(off) || psn.selected(off)));
        CHECK_FALSE((rev.selected(off) && psn.selected(off)));
      }
    }
  }
}

TEST_CASE("selected_count matches the analytic count law") {
  MtlModel m = seeded_model();  // trunk 6 -> 8 -> 5, biases 8 + 5
  const std::size_t bias_total = 13;
  const std::size_t weight_total = 6 * 8 + 8 * 5;

  CHECK(build_dense_mask(m.layout).selected_count() == weight_total + bias_total);
  // PSN k = 3: 8 rows of layer 1 and 5 rows of layer 2, 3 picks per row.
  CHECK(build_psn_mask(m, 3).selected_count() == 8 * 3 + 5 * 3 + bias_total);
  CHECK(build_reverse_mask(m, 3).selected_count() == 8 * 3 + 5 * 3 + bias_total);
  // Random f = 0.3: ceil per layer.
  CHECK(build_random_mask(m, 0.3, 1).selected_count() ==
        static_cast<std::size_t>(std::ceil(0.3 * 48)) +
            static_cast<std::size_t>(std::ceil(0.3 * 40)) + bias_total);
  // Global f = 0.3: ceil over the joint weight count.
  CHECK(build_global_mask(m, 0.3).selected_count() ==
        static_cast<std::size_t>(std::ceil(0.3 * 88)) + bias_total);
}

TEST_CASE("apply_mask zeroes exactly the unselected coordinates") {
  Mask mask(MaskVariant::kPsn, 1, {1, 0, 1});
  ParamVector grad;
  grad.values = {3, 4, 5};
  const ParamVector out = apply_mask(mask, grad);
  CHECK(out.values == std::vector<double>{3, 0, 5});

  SUBCASE("dense mask is the identity") {
    Mask dense(MaskVariant::kDense, 1, {1, 1, 1});
    CHECK(apply_mask(dense, grad).values == grad.values);
  }
  SUBCASE("zero gradient stays zero") {
    ParamVector zero;
    zero.values = {0, 0, 0};
    CHECK(apply_mask(mask, zero).values == std::vector<double>{0, 0, 0});
  }
  SUBCASE("length mismatch is rejected") {
    ParamVector bad;
    bad.values = {1, 2};
    CHECK_THROWS_AS(apply_mask(mask, bad), ConfigError);
  }
}

TEST_CASE("mask rejects invalid parameters") {
  MtlModel m = seeded_model();
  CHECK_THROWS_AS(build_psn_mask(m, 0), ConfigError);
  CHECK_THROWS_AS(build_random_mask(m, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(build_random_mask(m, 1.5, 1), ConfigError);
  CHECK_THROWS_AS(build_global_mask(m, -0.1), ConfigError);
}

TEST_CASE("mask text round trip preserves bits and header") {
  MtlModel m = seeded_model();
  const Mask mask = build_psn_mask(m, 2);

  std::stringstream ss;
  save_mask(mask, ss);
  std::string header;
  std::getline(ss, header);
  CHECK(header == "psn,2," + std::to_string(mask.total()) + "," +
                      std::to_string(mask.selected_count()));

  std::stringstream again;
  save_mask(mask, again);
  const Mask loaded = load_mask(again);
  CHECK(loaded.bits() == mask.bits());
  CHECK(loaded.variant() == mask.variant());
  CHECK(loaded.selected_count() == mask.selected_count());
}
