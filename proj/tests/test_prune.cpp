#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "ncomp/io.hpp"
#include "ncomp/prune.hpp"
#include "oracles.hpp"

using namespace ncomp;

namespace {

// A bare parameter registry is all pruning needs; no layer graph required.
Model<float> model_from_classes(std::vector<std::pair<std::string, std::vector<float>>> classes) {
  Model<float> m;
  m.arch_name = "fixture";
  for (auto& [cls, values] : classes) {
    const Index size = static_cast<Index>(values.size());
    m.params.emplace_back(cls, Tensor<float>({size}, std::move(values)), true);
  }
  return m;
}

std::set<std::pair<std::string, Index>> zero_mask_set(const Model<float>& m) {
  std::set<std::pair<std::string, Index>> zeros;
  for (const auto& g : m.params) {
    for (Index i = 0; i < g.mask.size(); ++i) {
      if (!g.mask[i]) zeros.emplace(g.cls, i);
    }
  }
  return zeros;
}

Model<float> random_model(Rng& rng, Index max_class_size) {
  const int classes = 2 + static_cast<int>(rng.below(4));
  std::vector<std::pair<std::string, std::vector<float>>> spec;
  for (int c = 0; c < classes; ++c) {
    const Index size = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(max_class_size)));
    std::vector<float> values(static_cast<std::size_t>(size));
    for (auto& v : values) v = static_cast<float>(rng.normal(0.0, 1.0));
    spec.emplace_back("w" + std::to_string(c), std::move(values));
  }
  return model_from_classes(std::move(spec));
}

std::uint64_t expected_target(double p, std::uint64_t n) {
  const double k = std::ceil(p * static_cast<double>(n) - 1e-9);
  return k <= 0 ? 0 : static_cast<std::uint64_t>(k);
}

}  // namespace

TEST_CASE("class-blind threshold hand cases") {
  const Model<float> m = model_from_classes({{"w", {0.1f, -0.5f, 0.02f, 0.9f}}});
  CHECK(threshold_class_blind(m, 0.5) == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(threshold_class_blind(m, 0.0) == -1.0);

  Model<float> pruned = m;
  apply_prune(pruned, {PruneKind::kClassBlind}, 0.5);
  CHECK(zero_mask_set(pruned) == std::set<std::pair<std::string, Index>>{{"w", 0}, {"w", 2}});
}

TEST_CASE("class-blind prunes exactly the sorted bottom set") {
  Rng rng(12345);
  for (int round = 0; round < 25; ++round) {
    Model<float> m = random_model(rng, 2000);
    const double p = rng.uniform(0.0, 1.0);
    std::uint64_t n = 0;
    for (const auto& g : m.params) n += static_cast<std::uint64_t>(g.value.size());

    Model<float> pruned = m;
    const PruneApplyResult result = apply_prune(pruned, {PruneKind::kClassBlind}, p);
    const std::uint64_t k = expected_target(p, n);
    CHECK(result.target == k);
    CHECK(zero_mask_set(pruned).size() == k);
    CHECK(zero_mask_set(pruned) == oracles::prune_bottom_k_sorted(m, m.prunable_classes(), k));

    // Every pruned magnitude <= every surviving magnitude (tie groups allowed).
    double max_pruned = -1.0, min_surviving = std::numeric_limits<double>::infinity();
    for (const auto& g : pruned.params) {
      const auto* orig = m.find(g.cls);
      for (Index i = 0; i < g.value.size(); ++i) {
        const double mag = std::abs(static_cast<double>(orig->value[i]));
        if (!g.mask[i]) {
          max_pruned = std::max(max_pruned, mag);
        } else {
          min_surviving = std::min(min_surviving, mag);
        }
      }
    }
    if (max_pruned >= 0 && std::isfinite(min_surviving)) CHECK(max_pruned <= min_surviving);
  }
}

TEST_CASE("layer-wise vs class-blind contrast case") {
  const std::vector<float> small = {1, 2, 3, 4};
  const std::vector<float> large = {10, 20, 30, 40};

  Model<float> lw = model_from_classes({{"a", small}, {"b", large}});
  const PruneApplyResult r = apply_prune(lw, {PruneKind::kLayerWise}, 0.5);
  CHECK(r.thresholds.at("a") == doctest::Approx(2.0));
  CHECK(r.thresholds.at("b") == doctest::Approx(20.0));
  CHECK(zero_mask_set(lw) == std::set<std::pair<std::string, Index>>{{"a", 0}, {"a", 1}, {"b", 0}, {"b", 1}});

  Model<float> cb = model_from_classes({{"a", small}, {"b", large}});
  apply_prune(cb, {PruneKind::kClassBlind}, 0.5);
  CHECK(zero_mask_set(cb) == std::set<std::pair<std::string, Index>>{{"a", 0}, {"a", 1}, {"a", 2}, {"a", 3}});
}

TEST_CASE("per-class percentile threshold values") {
  const std::vector<float> values = {1, 2, 3, 4};
  CHECK(threshold_layer_wise<float>(values, 0.5) == doctest::Approx(2.0));
  CHECK(threshold_layer_wise<float>(values, 1.0) == doctest::Approx(4.0));
  CHECK(threshold_layer_wise<float>(values, 0.0) == -1.0);
  CHECK_THROWS_AS(threshold_layer_wise<float>(std::vector<float>{}, 0.5), ConfigError);
}

TEST_CASE("layer-wise and class-blind prune the same global fraction within one weight per class") {
  Rng rng(1001);
  for (int round = 0; round < 10; ++round) {
    Model<float> m = random_model(rng, 700);
    const double p = rng.uniform(0.0, 1.0);
    Model<float> lw = m, cb = m;
    apply_prune(lw, {PruneKind::kLayerWise}, p);
    apply_prune(cb, {PruneKind::kClassBlind}, p);
    const auto lw_count = static_cast<std::int64_t>(zero_mask_set(lw).size());
    const auto cb_count = static_cast<std::int64_t>(zero_mask_set(cb).size());
    CHECK(std::abs(lw_count - cb_count) <= static_cast<std::int64_t>(m.params.size()));
  }
}

TEST_CASE("layer-wise p=1 empties every class and fractions meet the count oracle") {
  Rng rng(777);
  Model<float> m = random_model(rng, 500);
  Model<float> full_prune = m;
  apply_prune(full_prune, {PruneKind::kLayerWise}, 1.0);
  for (const auto& g : full_prune.params) {
    for (Index i = 0; i < g.mask.size(); ++i) CHECK(g.mask[i] == 0);
  }

  const double p = 0.37;
  Model<float> partial = m;
  apply_prune(partial, {PruneKind::kLayerWise}, p);
  for (const auto& g : partial.params) {
    std::uint64_t zeros = 0;
    for (Index i = 0; i < g.mask.size(); ++i) zeros += g.mask[i] ? 0 : 1;
    CHECK(zeros == expected_target(p, static_cast<std::uint64_t>(g.value.size())));
  }
}

TEST_CASE("class-uniform removes the same fraction from each class") {
  std::vector<float> a(100), b(300);
  Rng rng(9);
  for (auto& v : a) v = static_cast<float>(rng.normal(0.0, 1.0));
  for (auto& v : b) v = static_cast<float>(rng.normal(0.0, 1.0));
  Model<float> m = model_from_classes({{"a", a}, {"b", b}});
  apply_prune(m, {PruneKind::kClassUniform}, 0.5);
  std::uint64_t za = 0, zb = 0;
  for (Index i = 0; i < 100; ++i) za += m.params[0].mask[i] ? 0 : 1;
  for (Index i = 0; i < 300; ++i) zb += m.params[1].mask[i] ? 0 : 1;
  CHECK(za == 50);
  CHECK(zb == 150);
}

TEST_CASE("class-distribution threshold and sigma oracle") {
  const std::vector<float> pair = {-1.0f, 1.0f};
  CHECK(threshold_class_distribution<float>(pair, 0.5) == doctest::Approx(0.5).epsilon(1e-12));

  Model<float> m = model_from_classes({{"w", pair}});
  apply_prune(m, {PruneKind::kClassDistribution, 0.5}, 0.5);
  CHECK(zero_mask_set(m).empty());

  // lambda = 0: only exact zeros go.
  Model<float> zeros_only = model_from_classes({{"w", {0.0f, 0.3f, -0.2f, 0.0f}}});
  apply_prune(zeros_only, {PruneKind::kClassDistribution, 0.0}, 0.0);
  CHECK(zero_mask_set(zeros_only) == std::set<std::pair<std::string, Index>>{{"w", 0}, {"w", 3}});

  const std::vector<float> one = {1.0f};
  CHECK_THROWS_AS(threshold_class_distribution<float>(one, 1.0), ConfigError);

  Rng rng(41);
  std::vector<float> values(5000);
  for (auto& v : values) v = static_cast<float>(rng.normal(0.3, 1.7));
  double mean = 0.0;
  for (float v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (float v : values) ss += (v - mean) * (v - mean);
  const double sigma = std::sqrt(ss / static_cast<double>(values.size()));
  CHECK(threshold_class_distribution<float>(values, 1.0) == doctest::Approx(sigma).epsilon(1e-9));
}

TEST_CASE("apply_prune is idempotent at a fixed percentage and cumulative over growing ones") {
  Rng rng(55);
  Model<float> m = random_model(rng, 1500);

  Model<float> once = m;
  apply_prune(once, {PruneKind::kClassBlind}, 0.3);
  Model<float> twice = once;
  apply_prune(twice, {PruneKind::kClassBlind}, 0.3);
  CHECK(zero_mask_set(once) == zero_mask_set(twice));

  Model<float> low = m;
  apply_prune(low, {PruneKind::kClassBlind}, 0.2);
  Model<float> high = low;
  apply_prune(high, {PruneKind::kClassBlind}, 0.4);
  const auto low_zeros = zero_mask_set(low);
  const auto high_zeros = zero_mask_set(high);
  CHECK(std::includes(high_zeros.begin(), high_zeros.end(), low_zeros.begin(), low_zeros.end()));

  // Shrinking the percentage never unprunes.
  Model<float> back = high;
  apply_prune(back, {PruneKind::kClassBlind}, 0.1);
  CHECK(zero_mask_set(back) == high_zeros);
}

TEST_CASE("class-blind pruned index set is scale equivariant") {
  Rng rng(66);
  Model<float> m = random_model(rng, 800);
  Model<float> scaled = m;
  for (auto& g : scaled.params) {
    for (Index i = 0; i < g.value.size(); ++i) g.value[i] *= 3.7f;
  }
  apply_prune(m, {PruneKind::kClassBlind}, 0.42);
  apply_prune(scaled, {PruneKind::kClassBlind}, 0.42);
  CHECK(zero_mask_set(m) == zero_mask_set(scaled));
}

TEST_CASE("a target beyond 100% clamps and is reported") {
  Rng rng(88);
  Model<float> m = random_model(rng, 300);
  std::uint64_t n = 0;
  for (const auto& g : m.params) n += static_cast<std::uint64_t>(g.value.size());
  const PruneApplyResult r = apply_prune(m, {PruneKind::kClassBlind}, 1.3);
  CHECK(r.clamped);
  CHECK(r.target == n);
  CHECK(zero_mask_set(m).size() == n);
}

TEST_CASE("no prunable classes is a configuration error") {
  Model<float> m = model_from_classes({{"w", {1.0f, 2.0f}}});
  m.params[0].prunable = false;
  CHECK_THROWS_AS(apply_prune(m, {PruneKind::kClassBlind}, 0.5), ConfigError);
  CHECK_THROWS_AS(threshold_class_blind(m, 0.5), ConfigError);
}

TEST_CASE("iterative prune runs to 100% when the drop threshold is infinite") {
  SyntheticSpec spec;
  spec.train_samples = 200;
  spec.test_samples = 100;
  spec.seed = 21;
  auto [train_set, test_set] = gen_synthetic(spec);
  Model<float> m = build_toy_classifier<float>({1, 8, 8}, 10, 21);
  Rng train_rng(22);
  train(m, train_set, 3, 0.05, 32, train_rng);

  PruneConfig cfg;
  cfg.strategy.kind = PruneKind::kClassBlind;
  cfg.step = 0.25;
  cfg.initial_percentage = 0.25;
  cfg.accuracy_drop_threshold = std::numeric_limits<double>::infinity();
  Rng rng(23);
  auto [pruned, history] = iterative_prune(m, train_set, test_set, cfg, rng);

  CHECK(history.iterations.size() == 4);
  for (std::size_t i = 1; i < history.iterations.size(); ++i) {
    CHECK(history.iterations[i].percentage > history.iterations[i - 1].percentage);
  }
  CHECK(history.iterations.back().percentage == doctest::Approx(1.0));
  CHECK(history.selected_iteration == 3);

  // At 100% every prunable weight is gone.
  for (const auto& g : pruned.params) {
    if (!g.prunable) continue;
    for (Index i = 0; i < g.mask.size(); ++i) CHECK(g.mask[i] == 0);
  }
}

TEST_CASE("iterative prune reaches 100% from an untrained chance-level baseline") {
  SyntheticSpec spec;
  spec.train_samples = 120;
  spec.test_samples = 100;
  spec.seed = 31;
  auto [train_set, test_set] = gen_synthetic(spec);
  const Model<float> untrained = build_toy_classifier<float>({1, 8, 8}, 10, 31);

  PruneConfig cfg;
  cfg.step = 0.5;
  cfg.initial_percentage = 0.5;
  cfg.accuracy_drop_threshold = 0.05;
  Rng rng(32);
  auto [pruned, history] = iterative_prune(untrained, train_set, test_set, cfg, rng);
  CHECK(history.iterations.back().percentage == doctest::Approx(1.0));
}

TEST_CASE("prune configuration validation") {
  PruneConfig cfg;
  cfg.step = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.step = 0.05;
  cfg.retrain_epochs = 2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.retrain_epochs = 6;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.retrain_epochs = 3;
  cfg.validate();

  PruneStrategy bad{PruneKind::kClassBlind, 0.5};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
