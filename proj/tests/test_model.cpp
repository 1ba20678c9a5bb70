#include <doctest.h>

#include <algorithm>
#include <map>

#include "ncomp/io.hpp"
#include "ncomp/model.hpp"
#include "ncomp/prune.hpp"
#include "ncomp/train.hpp"

using namespace ncomp;

namespace {

std::map<std::string, std::uint64_t> layer_counts(const Model<float>& m) {
  std::map<std::string, std::uint64_t> counts;
  for (const auto& cc : count_params(m).per_class) counts[layer_of_class(cc.cls)] += cc.total;
  return counts;
}

}  // namespace

TEST_CASE("mnist classifier has the reference parameter counts") {
  const Model<float> m = build_mnist_classifier<float>();
  const ParamCounts counts = count_params(m);
  CHECK(counts.total == 431080);
  CHECK(counts.pruned() == 0);
  CHECK(counts.surviving == 431080);

  const auto layers = layer_counts(m);
  CHECK(layers.at("conv1") == 520);
  CHECK(layers.at("conv2") == 25050);
  CHECK(layers.at("fc1") == 400500);
  CHECK(layers.at("fc2") == 5010);

  for (const auto& g : m.params) {
    for (Index i = 0; i < g.mask.size(); ++i) CHECK(g.mask[i] == 1);
  }
  std::uint64_t sum = 0;
  for (const auto& cc : counts.per_class) sum += cc.total;
  CHECK(sum == counts.total);
}

TEST_CASE("toy classifier sizing and determinism") {
  const Model<float> a = build_toy_classifier<float>({1, 8, 8}, 10, 42);
  CHECK(count_params(a).total == 4538);
  CHECK(a.arch_name == "toy:1x8x8:10");

  const Model<float> b = build_toy_classifier<float>({1, 8, 8}, 10, 42);
  for (std::size_t i = 0; i < a.params.size(); ++i) CHECK(a.params[i].value == b.params[i].value);

  const Model<float> two = build_toy_classifier<float>({1, 8, 8}, 2, 0);
  CHECK(two.find("fc2.weight")->value.shape() == Shape{2, 32});

  CHECK_THROWS_AS(build_toy_classifier<float>({1, 3, 8}, 10, 0), ShapeError);
}

TEST_CASE("training a fully masked model leaves parameters at zero") {
  Model<float> m = build_toy_classifier<float>({1, 8, 8}, 10, 1);
  for (auto& g : m.params) {
    std::fill(g.mask.values().begin(), g.mask.values().end(), std::uint8_t{0});
  }
  m.enforce_masks();

  SyntheticSpec spec;
  spec.train_samples = 64;
  spec.test_samples = 16;
  spec.seed = 3;
  auto [train_set, test_set] = gen_synthetic(spec);
  Rng rng(4);
  train(m, train_set, 1, 0.05, 16, rng);
  for (const auto& g : m.params) {
    for (Index i = 0; i < g.value.size(); ++i) CHECK(g.value[i] == 0.0f);
  }
}

TEST_CASE("masked positions stay exactly zero through training") {
  Model<float> m = build_toy_classifier<float>({1, 8, 8}, 10, 5);
  apply_prune(m, {PruneKind::kClassBlind}, 0.5);

  SyntheticSpec spec;
  spec.train_samples = 400;
  spec.test_samples = 40;
  spec.seed = 6;
  auto [train_set, test_set] = gen_synthetic(spec);
  Rng rng(7);
  train(m, train_set, 8, 0.05, 32, rng);  // 8 epochs x 13 batches > 100 steps

  for (const auto& g : m.params) {
    for (Index i = 0; i < g.value.size(); ++i) {
      if (!g.mask[i]) CHECK(g.value[i] == 0.0f);
    }
  }
}

TEST_CASE("toy classifier trains to the reference accuracy on synthetic data") {
  auto [train_set, test_set] = gen_synthetic(SyntheticSpec{});
  Model<float> m = build_toy_classifier<float>({1, 8, 8}, 10, 0);
  Rng rng(1);
  train(m, train_set, 10, 0.05, 32, rng);
  CHECK(evaluate(m, train_set) >= 0.90);
  CHECK(evaluate(m, test_set) >= 0.85);
}

TEST_CASE("all-zero model predicts at chance on the balanced test set") {
  Model<float> m = build_toy_classifier<float>({1, 8, 8}, 10, 2);
  for (auto& g : m.params) {
    std::fill(g.value.values().begin(), g.value.values().end(), 0.0f);
  }
  SyntheticSpec spec;
  spec.test_samples = 1000;
  spec.train_samples = 10;
  auto [train_set, test_set] = gen_synthetic(spec);
  CHECK(evaluate(m, test_set) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("evaluate is deterministic, permutation-invariant, and thread-count independent") {
  SyntheticSpec spec;
  spec.train_samples = 10;
  spec.test_samples = 300;
  spec.seed = 9;
  auto [train_set, test_set] = gen_synthetic(spec);
  const Model<float> m = build_toy_classifier<float>({1, 8, 8}, 10, 3);

  const double acc = evaluate(m, test_set);
  CHECK(evaluate(m, test_set) == acc);
  CHECK(evaluate(m, test_set, 2) == acc);
  CHECK(evaluate(m, test_set, 7) == acc);

  // Reverse the sample order.
  Dataset<float> reversed;
  reversed.num_classes = test_set.num_classes;
  reversed.inputs = Tensor<float>(test_set.inputs.shape());
  reversed.labels.resize(test_set.labels.size());
  const Index sample = test_set.inputs.size() / test_set.size();
  for (Index i = 0; i < test_set.size(); ++i) {
    const Index j = test_set.size() - 1 - i;
    std::copy(test_set.inputs.data() + j * sample, test_set.inputs.data() + (j + 1) * sample,
              reversed.inputs.data() + i * sample);
    reversed.labels[static_cast<std::size_t>(i)] = test_set.labels[static_cast<std::size_t>(j)];
  }
  CHECK(evaluate(m, reversed) == acc);

  Dataset<float> single;
  single.num_classes = 10;
  single.inputs = Tensor<float>({1, 1, 8, 8});
  std::copy(test_set.inputs.data(), test_set.inputs.data() + sample, single.inputs.data());
  Tensor<float> logits = forward(m, single.inputs);
  Index best = 0;
  for (Index c = 1; c < 10; ++c) {
    if (logits[c] > logits[best]) best = c;
  }
  single.labels = {static_cast<std::int32_t>(best)};
  CHECK(evaluate(m, single) == 1.0);
}

TEST_CASE("train input validation") {
  Model<float> m = build_toy_classifier<float>({1, 8, 8}, 10, 0);
  Dataset<float> empty;
  empty.num_classes = 10;
  empty.inputs = Tensor<float>({1, 1, 8, 8});
  Rng rng(0);
  CHECK_THROWS_AS(train(m, empty, 1, 0.05, 32, rng), ValueError);
}

TEST_CASE("count_params partitions by class and tracks pruning") {
  Model<float> m = build_mnist_classifier<float>();
  std::vector<std::string> all_classes;
  for (const auto& g : m.params) all_classes.push_back(g.cls);
  apply_prune(m, {PruneKind::kClassBlind}, 0.5, all_classes);
  const ParamCounts counts = count_params(m);
  CHECK(counts.total == 431080);
  CHECK(counts.surviving == 215540);
  std::uint64_t surviving = 0;
  for (const auto& cc : counts.per_class) surviving += cc.surviving;
  CHECK(surviving == counts.surviving);
}
