#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ncomp/model.hpp"
#include "ncomp/train.hpp"

namespace ncomp {

enum class PruneKind { kClassBlind, kLayerWise, kClassUniform, kClassDistribution };

inline const char* to_string(PruneKind k) {
  switch (k) {
    case PruneKind::kClassBlind: return "class-blind";
    case PruneKind::kLayerWise: return "layer-wise";
    case PruneKind::kClassUniform: return "class-uniform";
    case PruneKind::kClassDistribution: return "class-distribution";
  }
  return "?";
}

struct PruneStrategy {
  PruneKind kind = PruneKind::kClassBlind;
  double lambda = 0.0;  // std-dev scale, class-distribution only

  void validate() const {
    if (kind == PruneKind::kClassDistribution) {
      if (lambda < 0) throw ConfigError("class-distribution: lambda must be >= 0");
    } else if (lambda != 0.0) {
      throw ConfigError("lambda is only meaningful for class-distribution pruning");
    }
  }
};

struct PruneConfig {
  PruneStrategy strategy;
  double initial_percentage = 0.05;
  double step = 0.05;
  double accuracy_drop_threshold = 0.05;
  int retrain_epochs = 3;
  double retrain_lr = 0.05;
  Index retrain_batch = 32;
  double max_percentage = 1.0;
  std::vector<std::string> prunable_classes;  // empty -> the model's prunable set
  unsigned threads = 1;

  void validate() const {
    strategy.validate();
    if (!(step > 0)) throw ConfigError("prune step must be positive");
    if (initial_percentage < 0 || initial_percentage > 1) throw ConfigError("initial percentage must be in [0, 1]");
    if (accuracy_drop_threshold < 0) throw ConfigError("accuracy drop threshold must be >= 0");
    if (retrain_epochs < 3 || retrain_epochs > 5) throw ConfigError("retrain epochs must be in [3, 5]");
    if (!(retrain_lr > 0)) throw ConfigError("retrain learning rate must be positive");
    if (retrain_batch < 1) throw ConfigError("retrain batch size must be >= 1");
    if (!(max_percentage > 0) || max_percentage > 1) throw ConfigError("max percentage must be in (0, 1]");
  }
};

struct PruneIteration {
  double percentage = 0.0;
  std::map<std::string, double> thresholds;  // "global" for class-blind
  double accuracy_after_retrain = 0.0;
  std::uint64_t surviving_params = 0;
};

struct PruneHistory {
  double baseline_accuracy = 0.0;
  std::vector<PruneIteration> iterations;
  int best_iteration = -1;      // highest accuracy snapshot
  int selected_iteration = -1;  // snapshot returned by iterative_prune; -1 = unpruned baseline
};

struct PruneApplyResult {
  std::uint64_t target = 0;        // weights the strategy asked to have pruned
  std::uint64_t pruned_total = 0;  // mask zeros over the selected classes afterwards
  std::uint64_t newly_pruned = 0;
  bool clamped = false;
  std::map<std::string, double> thresholds;
};

namespace detail {

// Prune-count target: ceil(p * n) with a small slack so that values like
// 0.37 * 10000 do not round up past the intended integer.
inline std::uint64_t prune_target(double p, std::uint64_t n) {
  const double k = std::ceil(p * static_cast<double>(n) - 1e-9);
  if (k <= 0) return 0;
  return static_cast<std::uint64_t>(k);
}

struct PruneEntry {
  double magnitude;
  std::uint32_t cls_ord;
  Index idx;
};

inline bool entry_less(const PruneEntry& a, const PruneEntry& b) {
  if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
  if (a.cls_ord != b.cls_ord) return a.cls_ord < b.cls_ord;
  return a.idx < b.idx;
}

template <typename T>
std::vector<ParamGroup<T>*> resolve_classes(Model<T>& model, const std::vector<std::string>& requested) {
  std::vector<std::string> ids = requested.empty() ? model.prunable_classes() : requested;
  if (ids.empty()) throw ConfigError("no prunable weight classes");
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::vector<ParamGroup<T>*> groups;
  for (const auto& id : ids) {
    ParamGroup<T>* g = model.find(id);
    if (!g) throw ConfigError("unknown weight class: " + id);
    groups.push_back(g);
  }
  return groups;
}

// Masks out the exact bottom-k entries of a pooled candidate list.
template <typename T>
double prune_bottom_k(std::span<ParamGroup<T>*> groups, std::uint64_t k, std::uint64_t* newly) {
  std::vector<PruneEntry> entries;
  std::size_t total = 0;
  for (const auto* g : groups) total += static_cast<std::size_t>(g->value.size());
  entries.reserve(total);
  for (std::uint32_t ord = 0; ord < groups.size(); ++ord) {
    const auto& v = groups[ord]->value;
    for (Index i = 0; i < v.size(); ++i) {
      entries.push_back({std::abs(static_cast<double>(v[i])), ord, i});
    }
  }
  if (k == 0) return -1.0;
  if (k < entries.size()) {
    std::nth_element(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(k) - 1, entries.end(), entry_less);
  }
  double threshold = 0.0;
  for (std::uint64_t i = 0; i < k; ++i) {
    const PruneEntry& e = entries[static_cast<std::size_t>(i)];
    threshold = std::max(threshold, e.magnitude);
    auto* g = groups[e.cls_ord];
    if (g->mask[e.idx]) {
      g->mask[e.idx] = 0;
      if (newly) ++*newly;
    }
    g->value[e.idx] = T{0};
  }
  return threshold;
}

}  // namespace detail

// Population standard deviation; the class-distribution threshold is
// lambda * sigma over the class's current weights.
template <typename T>
double threshold_class_distribution(std::span<const T> layer_weights, double lambda) {
  if (lambda < 0) throw ConfigError("class-distribution: lambda must be >= 0");
  if (layer_weights.size() < 2) throw ConfigError("degenerate class: fewer than 2 weights");
  double mean = 0.0;
  for (T v : layer_weights) mean += static_cast<double>(v);
  mean /= static_cast<double>(layer_weights.size());
  double ss = 0.0;
  for (T v : layer_weights) {
    const double d = static_cast<double>(v) - mean;
    ss += d * d;
  }
  return lambda * std::sqrt(ss / static_cast<double>(layer_weights.size()));
}

// Magnitude of the ceil(p*n)-th smallest absolute value in one weight class;
// p = 0 yields -1, which sits below every magnitude.
template <typename T>
double threshold_layer_wise(std::span<const T> layer_weights, double p) {
  if (layer_weights.empty()) throw ConfigError("degenerate class: empty");
  if (p < 0 || p > 1) throw ConfigError("prune percentage must be in [0, 1]");
  const std::uint64_t k = detail::prune_target(p, layer_weights.size());
  if (k == 0) return -1.0;
  std::vector<double> mags;
  mags.reserve(layer_weights.size());
  for (T v : layer_weights) mags.push_back(std::abs(static_cast<double>(v)));
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k) - 1, mags.end());
  return mags[static_cast<std::size_t>(k - 1)];
}

// Global percentile over all prunable weights pooled together.
template <typename T>
double threshold_class_blind(const Model<T>& model, double p, const std::vector<std::string>& classes = {}) {
  if (p < 0 || p > 1) throw ConfigError("prune percentage must be in [0, 1]");
  auto groups = detail::resolve_classes(const_cast<Model<T>&>(model), classes);
  std::vector<double> mags;
  for (const auto* g : groups) {
    for (Index i = 0; i < g->value.size(); ++i) mags.push_back(std::abs(static_cast<double>(g->value[i])));
  }
  const std::uint64_t k = detail::prune_target(p, mags.size());
  if (k == 0) return -1.0;
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k) - 1, mags.end());
  return mags[static_cast<std::size_t>(k - 1)];
}

// Updates masks (and zeroes values) according to the strategy. Percentages are
// fractions of the ORIGINAL class sizes, so repeated calls with growing p give
// cumulative sparsity; positions never get unpruned. Count-based strategies
// prune exactly ceil(p*n) positions, ties broken by (weight-class id, flat
// index) ascending.
template <typename T>
PruneApplyResult apply_prune(Model<T>& model, const PruneStrategy& strategy, double amount,
                             const std::vector<std::string>& classes = {}) {
  strategy.validate();
  auto groups = detail::resolve_classes(model, classes);
  PruneApplyResult result;

  auto run_pooled = [&](std::span<ParamGroup<T>*> pool, const std::string& label, double p) {
    std::uint64_t n = 0;
    for (const auto* g : pool) n += static_cast<std::uint64_t>(g->value.size());
    std::uint64_t k = detail::prune_target(p, n);
    if (k > n) {
      k = n;
      result.clamped = true;
    }
    result.target += k;
    result.thresholds[label] = detail::prune_bottom_k<T>(pool, k, &result.newly_pruned);
  };

  switch (strategy.kind) {
    case PruneKind::kClassBlind: {
      if (amount < 0) throw ConfigError("prune percentage must be >= 0");
      run_pooled(groups, "global", amount);
      break;
    }
    case PruneKind::kClassUniform: {
      if (amount < 0) throw ConfigError("prune percentage must be >= 0");
      for (auto* g : groups) {
        std::span<ParamGroup<T>*> one(&g, 1);
        run_pooled(one, g->cls, amount);
      }
      break;
    }
    case PruneKind::kLayerWise: {
      if (amount < 0) throw ConfigError("prune percentage must be >= 0");
      // Percentile per layer: classes sharing a layer prefix are pooled.
      std::map<std::string, std::vector<ParamGroup<T>*>> by_layer;
      for (auto* g : groups) by_layer[layer_of_class(g->cls)].push_back(g);
      for (auto& [layer, pool] : by_layer) {
        run_pooled(pool, layer, amount);
      }
      break;
    }
    case PruneKind::kClassDistribution: {
      const double lambda = amount;
      for (auto* g : groups) {
        const double thr = threshold_class_distribution<T>(g->value.values(), lambda);
        result.thresholds[g->cls] = thr;
        for (Index i = 0; i < g->value.size(); ++i) {
          if (std::abs(static_cast<double>(g->value[i])) <= thr) {
            if (g->mask[i]) {
              g->mask[i] = 0;
              ++result.newly_pruned;
            }
            g->value[i] = T{0};
            ++result.target;
          }
        }
      }
      break;
    }
  }

  for (const auto* g : groups) {
    for (Index i = 0; i < g->mask.size(); ++i) result.pruned_total += g->mask[i] ? 0 : 1;
  }
  return result;
}

// The iterative prune -> retrain -> validate loop. Each iteration prunes to
// the cumulative percentage, retrains for config.retrain_epochs epochs keeping
// the best-epoch weights (validation accuracy), and stops once the accuracy
// drop versus the pre-loop baseline exceeds the threshold, or at 100%.
// Returns the last snapshot that stayed within the threshold. For the
// class-distribution strategy the loop degenerates to a single lambda-driven
// pass, since that strategy is not percentage-scheduled.
template <typename T>
std::pair<Model<T>, PruneHistory> iterative_prune(const Model<T>& model, const Dataset<T>& train_set,
                                                  const Dataset<T>& val_set, const PruneConfig& config, Rng& rng) {
  config.validate();
  PruneHistory history;
  history.baseline_accuracy = evaluate(model, val_set, config.threads);

  Model<T> current = model;
  Model<T> selected = model;

  const bool one_shot = config.strategy.kind == PruneKind::kClassDistribution;
  const double cap = config.max_percentage;
  const std::uint64_t prunable_total = [&] {
    auto groups = detail::resolve_classes(current, config.prunable_classes);
    std::uint64_t n = 0;
    for (const auto* g : groups) n += static_cast<std::uint64_t>(g->value.size());
    return n;
  }();

  double p = std::min(config.initial_percentage, cap);
  while (true) {
    PruneApplyResult applied = apply_prune(current, config.strategy, one_shot ? config.strategy.lambda : p,
                                           config.prunable_classes);

    // Retrain, keeping the best epoch's weights.
    Model<T> best_model = current;
    double best_acc = evaluate(current, val_set, config.threads);
    for (int e = 0; e < config.retrain_epochs; ++e) {
      train(current, train_set, 1, config.retrain_lr, config.retrain_batch, rng);
      const double acc = evaluate(current, val_set, config.threads);
      if (acc > best_acc) {
        best_acc = acc;
        best_model = current;
      }
    }
    current = std::move(best_model);

    PruneIteration it;
    it.percentage = one_shot ? static_cast<double>(applied.pruned_total) / static_cast<double>(prunable_total) : p;
    it.thresholds = applied.thresholds;
    it.accuracy_after_retrain = best_acc;
    it.surviving_params = count_params(current).surviving;
    history.iterations.push_back(std::move(it));

    if (history.baseline_accuracy - best_acc > config.accuracy_drop_threshold) break;
    selected = current;
    history.selected_iteration = static_cast<int>(history.iterations.size()) - 1;
    if (one_shot || p >= cap) break;
    p = std::min(p + config.step, cap);
  }

  for (std::size_t i = 0; i < history.iterations.size(); ++i) {
    if (history.best_iteration < 0 ||
        history.iterations[i].accuracy_after_retrain >
            history.iterations[static_cast<std::size_t>(history.best_iteration)].accuracy_after_retrain) {
      history.best_iteration = static_cast<int>(i);
    }
  }
  return {std::move(selected), std::move(history)};
}

}  // namespace ncomp
