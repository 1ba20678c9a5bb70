#include <fstream>

#include <json.hpp>

#include "ncomp/io.hpp"

namespace ncomp {

namespace {

using Json = nlohmann::ordered_json;

Json layer_json(const LayerReport& row, bool with_class) {
  Json j;
  if (with_class) j["class"] = row.cls;
  j["n"] = row.params;
  j["surviving"] = row.surviving;
  j["k"] = row.clusters;
  j["bytes_initial"] = row.bytes_initial;
  j["bytes_pruned"] = row.bytes_pruned;
  j["bytes_quantized"] = row.bytes_quantized;
  j["rate"] = row.rate;
  return j;
}

void write_json(const Json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

void save_report(const CompressionReport& report, const std::filesystem::path& path) {
  Json j;
  j["arch"] = report.arch;
  Json config = Json::object();
  for (const auto& [key, value] : report.config) config[key] = value;
  j["config"] = config;
  j["layers"] = Json::array();
  for (const auto& row : report.layers) j["layers"].push_back(layer_json(row, true));
  j["totals"] = layer_json(report.totals, false);
  j["accuracy_trace"] = Json::array();
  for (const auto& [stage, value] : report.accuracy_trace) {
    j["accuracy_trace"].push_back(Json{{"stage", stage}, {"value", value}});
  }
  write_json(j, path);
}

CompressionReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ParseError("report: " + std::string(e.what()));
  }
  try {
    CompressionReport report;
    report.arch = j.at("arch").get<std::string>();
    for (const auto& [key, value] : j.at("config").items()) {
      report.config.emplace_back(key, value.get<std::string>());
    }
    auto read_row = [](const Json& row, bool with_class) {
      LayerReport r;
      if (with_class) r.cls = row.at("class").get<std::string>();
      r.params = row.at("n").get<std::uint64_t>();
      r.surviving = row.at("surviving").get<std::uint64_t>();
      r.clusters = row.at("k").get<std::uint64_t>();
      r.bytes_initial = row.at("bytes_initial").get<std::uint64_t>();
      r.bytes_pruned = row.at("bytes_pruned").get<std::uint64_t>();
      r.bytes_quantized = row.at("bytes_quantized").get<std::uint64_t>();
      r.rate = row.at("rate").get<double>();
      return r;
    };
    for (const auto& row : j.at("layers")) report.layers.push_back(read_row(row, true));
    report.totals = read_row(j.at("totals"), false);
    report.totals.cls = "total";
    for (const auto& entry : j.at("accuracy_trace")) {
      report.accuracy_trace.push_back({entry.at("stage").get<std::string>(), entry.at("value").get<double>()});
    }
    return report;
  } catch (const Json::exception& e) {
    throw ParseError("report: " + std::string(e.what()));
  }
}

void save_history(const PruneHistory& history, const std::filesystem::path& path) {
  Json j;
  j["baseline_accuracy"] = history.baseline_accuracy;
  j["iterations"] = Json::array();
  for (const auto& it : history.iterations) {
    Json thresholds = Json::object();
    for (const auto& [cls, value] : it.thresholds) thresholds[cls] = value;
    j["iterations"].push_back(Json{{"percentage", it.percentage},
                                   {"thresholds", thresholds},
                                   {"accuracy_after_retrain", it.accuracy_after_retrain},
                                   {"surviving_params", it.surviving_params}});
  }
  j["best_iteration"] = history.best_iteration;
  j["selected_iteration"] = history.selected_iteration;
  write_json(j, path);
}

}  // namespace ncomp
