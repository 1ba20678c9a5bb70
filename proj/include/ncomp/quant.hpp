#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ncomp/model.hpp"

namespace ncomp {

struct QuantConfig {
  std::uint64_t base_clusters = 32;            // C: clusters per set
  std::uint64_t params_per_cluster_set = 100000;  // N: parameters per set of clusters
  double tolerance = 1e-6;                     // relative inertia change
  int max_iterations = 300;
  bool include_zero_cluster = true;            // record the pinned zero of pruned positions

  void validate() const {
    if (base_clusters < 1) throw ConfigError("base cluster count must be >= 1");
    if (params_per_cluster_set < 1) throw ConfigError("params per cluster set must be >= 1");
    if (tolerance < 0) throw ConfigError("tolerance must be >= 0");
    if (max_iterations < 1) throw ConfigError("max iterations must be >= 1");
  }
};

// Per-layer cluster budget: ceil(P/N) * C. The caller clamps to the number of
// distinct values where needed.
std::uint64_t dynamic_cluster_count(std::uint64_t layer_params, std::uint64_t params_per_set, std::uint64_t base_clusters);

// c centroids spaced evenly over [w_min, w_max], both endpoints included;
// c == 1 gives the midpoint.
std::vector<double> init_centroids_linear(double w_min, double w_max, std::size_t c);

struct KmeansResult {
  std::vector<double> centroids;
  std::vector<std::uint32_t> assignments;  // original value order
  double inertia = 0.0;
  std::vector<double> inertia_trace;  // one entry per assignment pass
  int iterations = 0;
};

// Lloyd's algorithm on scalars: nearest-centroid assignment (ties to the lower
// index), mean update, empty clusters reseeded to the value farthest from its
// assigned centroid. Stops when the relative inertia change falls within
// tolerance (never on a pass that reseeded) or at max_iterations.
KmeansResult kmeans_1d(std::span<const double> values, std::vector<double> centroids, double tolerance,
                       int max_iterations);

struct QuantizedLayer {
  std::string cls;
  std::vector<double> centroids;
  std::vector<std::uint32_t> assignments;  // one per surviving weight, weight order
  std::uint64_t clusters = 0;              // c actually used
  double inertia = 0.0;
  bool degenerate = false;     // no surviving weights
  bool zero_cluster = false;   // pruned positions pinned to 0
};

// K-means quantization of one weight tensor. Pruned (mask-0) positions stay
// exactly 0 and never enter the Lloyd updates; each surviving weight is
// replaced by its centroid. cluster_budget_params overrides the P of the
// cluster-count rule (a model quantizer passes the whole layer's surviving
// count); 0 means "use this tensor's surviving count".
template <typename T>
std::pair<Tensor<T>, QuantizedLayer> quantize_layer(const Tensor<T>& weights, const Tensor<std::uint8_t>& mask,
                                                    const QuantConfig& config, std::uint64_t cluster_budget_params = 0) {
  config.validate();
  if (!weights.same_shape(mask)) throw ShapeError("quantize_layer: mask shape differs from weights");

  QuantizedLayer record;
  std::vector<double> surviving;
  std::vector<Index> positions;
  for (Index i = 0; i < weights.size(); ++i) {
    if (mask[i]) {
      surviving.push_back(static_cast<double>(weights[i]));
      positions.push_back(i);
    } else {
      record.zero_cluster = config.include_zero_cluster;
    }
  }

  if (surviving.empty()) {
    record.degenerate = true;
    record.zero_cluster = false;
    return {zeros<T>(weights.shape()), std::move(record)};
  }

  const std::uint64_t budget = cluster_budget_params ? cluster_budget_params : surviving.size();
  std::uint64_t c = dynamic_cluster_count(budget, config.params_per_cluster_set, config.base_clusters);

  std::vector<double> sorted(surviving);
  std::sort(sorted.begin(), sorted.end());
  std::uint64_t distinct = 1;
  for (std::size_t i = 1; i < sorted.size(); ++i) distinct += sorted[i] != sorted[i - 1] ? 1 : 0;
  c = std::min(c, distinct);  // Lloyd cannot use more clusters than distinct points

  KmeansResult km = kmeans_1d(surviving, init_centroids_linear(sorted.front(), sorted.back(), static_cast<std::size_t>(c)),
                              config.tolerance, config.max_iterations);

  Tensor<T> out = zeros<T>(weights.shape());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    out[positions[i]] = static_cast<T>(km.centroids[km.assignments[i]]);
  }
  record.centroids = std::move(km.centroids);
  record.assignments = std::move(km.assignments);
  record.clusters = c;
  record.inertia = km.inertia;
  return {std::move(out), std::move(record)};
}

// Reconstructs byte-accounting records from an already-quantized model: the
// codebook size of each prunable class is its count of distinct surviving
// values. Used when only the model file is available (the `report` command).
template <typename T>
std::vector<QuantizedLayer> derive_quant_records(const Model<T>& model) {
  std::vector<QuantizedLayer> records;
  for (const auto& g : model.params) {
    if (!g.prunable) continue;
    QuantizedLayer record;
    record.cls = g.cls;
    std::vector<double> surviving;
    for (Index i = 0; i < g.value.size(); ++i) {
      if (g.mask[i]) {
        surviving.push_back(static_cast<double>(g.value[i]));
      } else {
        record.zero_cluster = true;
      }
    }
    if (surviving.empty()) {
      record.degenerate = true;
      record.zero_cluster = false;
    } else {
      std::sort(surviving.begin(), surviving.end());
      record.clusters = 1;
      for (std::size_t i = 1; i < surviving.size(); ++i) record.clusters += surviving[i] != surviving[i - 1] ? 1 : 0;
    }
    records.push_back(std::move(record));
  }
  return records;
}

// Quantizes every prunable weight class independently; other classes pass
// through. The cluster-count rule sees the layer's total surviving parameter
// count (all classes of that layer), matching the per-layer P of the rule.
template <typename T>
std::pair<Model<T>, std::vector<QuantizedLayer>> quantize_model(Model<T> model, const QuantConfig& config) {
  config.validate();
  std::map<std::string, std::uint64_t> layer_surviving;
  for (const auto& cc : count_params(model).per_class) {
    layer_surviving[layer_of_class(cc.cls)] += cc.surviving;
  }

  std::vector<QuantizedLayer> records;
  for (auto& g : model.params) {
    if (!g.prunable) continue;
    auto [quantized, record] = quantize_layer(g.value, g.mask, config, layer_surviving[layer_of_class(g.cls)]);
    record.cls = g.cls;
    g.value = std::move(quantized);
    records.push_back(std::move(record));
  }
  return {std::move(model), std::move(records)};
}

}  // namespace ncomp
