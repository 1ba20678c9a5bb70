#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ncomp/model.hpp"
#include "ncomp/quant.hpp"

namespace ncomp {

// Eq-style compression rate of a quantized weight tensor: n weights of b bits
// each against n log2(k)-bit indices plus k full-precision centroids.
// r = n*b / (n*log2(k) + k*b). k < 2 has no index term and is rejected.
double compression_rate(std::uint64_t n, std::uint64_t b, std::uint64_t k);

// Storage cost of one quantized layer: per-layer bit-packed indices rounded up
// to a byte boundary, plus 4-byte centroids. k < 2 means no codebook, charged
// at the pruned (4 bytes/weight) cost.
std::uint64_t quantized_layer_bytes(std::uint64_t surviving, std::uint64_t k);

enum class Stage { kInitial, kPruned, kQuantized };

struct StageBytes {
  std::vector<std::pair<std::string, std::uint64_t>> per_class;
  std::uint64_t total = 0;
};

// Byte accounting per weight class at a pipeline stage. Parameters are charged
// as float32 (4 bytes) regardless of compute precision; the pruned stage
// simply drops removed weights. The quantized stage needs the per-class
// quantization records.
template <typename T>
StageBytes bytes_at_stage(const Model<T>& model, Stage stage, const std::vector<QuantizedLayer>* records = nullptr) {
  if (stage == Stage::kQuantized && !records) throw ValueError("quantized stage requires quantization records");
  std::map<std::string, const QuantizedLayer*> by_class;
  if (records) {
    for (const auto& r : *records) by_class[r.cls] = &r;
  }

  StageBytes out;
  for (const auto& cc : count_params(model).per_class) {
    std::uint64_t bytes = 0;
    switch (stage) {
      case Stage::kInitial:
        bytes = 4 * cc.total;
        break;
      case Stage::kPruned:
        bytes = 4 * cc.surviving;
        break;
      case Stage::kQuantized: {
        const auto it = by_class.find(cc.cls);
        const std::uint64_t k = it != by_class.end() && !it->second->degenerate ? it->second->clusters : 0;
        bytes = quantized_layer_bytes(cc.surviving, k);
        break;
      }
    }
    out.per_class.emplace_back(cc.cls, bytes);
    out.total += bytes;
  }
  return out;
}

struct LayerReport {
  std::string cls;
  std::uint64_t params = 0;
  std::uint64_t surviving = 0;
  std::uint64_t clusters = 0;
  std::uint64_t bytes_initial = 0;
  std::uint64_t bytes_pruned = 0;
  std::uint64_t bytes_quantized = 0;
  double rate = 1.0;  // bytes_initial / bytes_quantized
};

struct StageAccuracy {
  std::string stage;
  double value = 0.0;
};

struct CompressionReport {
  std::string arch;
  std::vector<std::pair<std::string, std::string>> config;  // resolved settings, key order preserved
  std::vector<LayerReport> layers;
  LayerReport totals;
  std::vector<StageAccuracy> accuracy_trace;
};

// Assembles the per-layer byte table across the three pipeline stages. The
// three models must share an architecture; the masks of the pruned and
// quantized models decide the surviving counts.
template <typename T>
CompressionReport build_report(const Model<T>& baseline, const Model<T>& pruned, const Model<T>& quantized,
                               const std::vector<QuantizedLayer>& records, std::vector<StageAccuracy> accuracy_trace) {
  auto same_arch = [&](const Model<T>& a, const Model<T>& b) {
    if (a.arch_name != b.arch_name || a.params.size() != b.params.size()) return false;
    for (std::size_t i = 0; i < a.params.size(); ++i) {
      if (a.params[i].cls != b.params[i].cls || !a.params[i].value.same_shape(b.params[i].value)) return false;
    }
    return true;
  };
  if (!same_arch(baseline, pruned) || !same_arch(baseline, quantized)) {
    throw ValueError("build_report: models have different architectures");
  }

  const StageBytes initial = bytes_at_stage(baseline, Stage::kInitial);
  const StageBytes after_prune = bytes_at_stage(pruned, Stage::kPruned);
  const StageBytes after_quant = bytes_at_stage(quantized, Stage::kQuantized, &records);
  std::map<std::string, const QuantizedLayer*> by_class;
  for (const auto& r : records) by_class[r.cls] = &r;

  CompressionReport report;
  report.arch = baseline.arch_name;
  report.accuracy_trace = std::move(accuracy_trace);
  const ParamCounts counts = count_params(pruned);
  for (std::size_t i = 0; i < counts.per_class.size(); ++i) {
    LayerReport row;
    row.cls = counts.per_class[i].cls;
    row.params = counts.per_class[i].total;
    row.surviving = counts.per_class[i].surviving;
    const auto it = by_class.find(row.cls);
    row.clusters = it != by_class.end() && !it->second->degenerate ? it->second->clusters : 0;
    row.bytes_initial = initial.per_class[i].second;
    row.bytes_pruned = after_prune.per_class[i].second;
    row.bytes_quantized = after_quant.per_class[i].second;
    row.rate = row.bytes_quantized ? static_cast<double>(row.bytes_initial) / static_cast<double>(row.bytes_quantized) : 1.0;
    report.totals.params += row.params;
    report.totals.surviving += row.surviving;
    report.totals.bytes_initial += row.bytes_initial;
    report.totals.bytes_pruned += row.bytes_pruned;
    report.totals.bytes_quantized += row.bytes_quantized;
    report.layers.push_back(std::move(row));
  }
  report.totals.cls = "total";
  report.totals.rate = report.totals.bytes_quantized
                           ? static_cast<double>(report.totals.bytes_initial) / static_cast<double>(report.totals.bytes_quantized)
                           : 1.0;
  return report;
}

}  // namespace ncomp
