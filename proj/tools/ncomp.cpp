#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "ncomp/io.hpp"
#include "ncomp/prune.hpp"
#include "ncomp/quant.hpp"
#include "ncomp/report.hpp"
#include "ncomp/train.hpp"

namespace fs = std::filesystem;
using namespace ncomp;

namespace {

unsigned resolve_threads(unsigned flag_value, bool flag_given) {
  if (flag_given) return std::max(1u, flag_value);
  if (const char* env = std::getenv("THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return 1;
}

std::pair<Dataset<float>, Dataset<float>> load_data_dir(const fs::path& dir) {
  return {load_idx(dir / "train-images.idx", dir / "train-labels.idx"),
          load_idx(dir / "test-images.idx", dir / "test-labels.idx")};
}

PruneKind parse_strategy(const std::string& name) {
  if (name == "class-blind") return PruneKind::kClassBlind;
  if (name == "layer-wise") return PruneKind::kLayerWise;
  if (name == "class-uniform") return PruneKind::kClassUniform;
  if (name == "class-distribution") return PruneKind::kClassDistribution;
  throw ConfigError("unknown strategy: " + name);
}

std::string render_csv(const CompressionReport& report) {
  std::string out = "class,n,surviving,k,bytes_initial,bytes_pruned,bytes_quantized,rate\n";
  char line[256];
  auto add = [&](const LayerReport& r, const char* cls) {
    std::snprintf(line, sizeof line, "%s,%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%.9g\n",
                  cls, r.params, r.surviving, r.clusters, r.bytes_initial, r.bytes_pruned, r.bytes_quantized, r.rate);
    out += line;
  };
  for (const auto& r : report.layers) add(r, r.cls.c_str());
  add(report.totals, "total");
  return out;
}

std::string render_table(const CompressionReport& report) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "architecture: %s\n", report.arch.c_str());
  out += line;
  std::snprintf(line, sizeof line, "%-14s %10s %10s %6s %14s %14s %14s %10s\n", "class", "n", "surviving", "k",
                "bytes_initial", "bytes_pruned", "bytes_quant", "rate");
  out += line;
  auto add = [&](const LayerReport& r, const char* cls) {
    std::snprintf(line, sizeof line,
                  "%-14s %10" PRIu64 " %10" PRIu64 " %6" PRIu64 " %14" PRIu64 " %14" PRIu64 " %14" PRIu64 " %10.4f\n",
                  cls, r.params, r.surviving, r.clusters, r.bytes_initial, r.bytes_pruned, r.bytes_quantized, r.rate);
    out += line;
  };
  for (const auto& r : report.layers) add(r, r.cls.c_str());
  add(report.totals, "total");
  for (const auto& [stage, value] : report.accuracy_trace) {
    std::snprintf(line, sizeof line, "accuracy[%s] = %.6f\n", stage.c_str(), value);
    out += line;
  }
  return out;
}

void emit_report(const CompressionReport& report, const std::string& format, const std::string& out_path) {
  if (format == "json") {
    if (out_path.empty()) throw ConfigError("json report needs --out");
    save_report(report, out_path);
    return;
  }
  const std::string text = format == "csv" ? render_csv(report) : render_table(report);
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + out_path + " for writing");
    out << text;
  }
}

double population_sigma(std::span<const float> values) {
  double mean = 0.0;
  for (float v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (float v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

void run_inspect(const fs::path& model_path) {
  const Model<float> model = load_model(model_path);
  std::printf("architecture: %s\n", model.arch_name.c_str());
  std::printf("%-14s %-14s %10s %10s %10s %10s %10s  histogram\n", "class", "shape", "n", "surviving", "min", "max",
              "sigma");
  for (const auto& g : model.params) {
    std::uint64_t surviving = 0;
    for (Index i = 0; i < g.mask.size(); ++i) surviving += g.mask[i] ? 1 : 0;
    float lo = g.value[0], hi = g.value[0];
    for (Index i = 0; i < g.value.size(); ++i) {
      lo = std::min(lo, g.value[i]);
      hi = std::max(hi, g.value[i]);
    }
    std::array<std::uint64_t, 10> bins{};
    for (Index i = 0; i < g.value.size(); ++i) {
      const double t = hi > lo ? (g.value[i] - lo) / (hi - lo) : 0.0;
      bins[std::min<std::size_t>(9, static_cast<std::size_t>(t * 10.0))]++;
    }
    std::uint64_t peak = 1;
    for (auto b : bins) peak = std::max(peak, b);
    std::string hist;
    for (auto b : bins) hist += " .:-=+*#%@"[std::min<std::size_t>(9, b * 9 / peak)];
    std::printf("%-14s %-14s %10" PRIu64 " %10" PRIu64 " %10.4f %10.4f %10.4f  |%s|\n", g.cls.c_str(),
                shape_str(g.value.shape()).c_str(), static_cast<std::uint64_t>(g.value.size()), surviving, lo, hi,
                population_sigma(g.value.values()), hist.c_str());
  }
  std::map<std::string, std::uint64_t> layer_totals;
  std::vector<std::string> layer_order;
  for (const auto& g : model.params) {
    const std::string layer = layer_of_class(g.cls);
    if (!layer_totals.count(layer)) layer_order.push_back(layer);
    layer_totals[layer] += static_cast<std::uint64_t>(g.value.size());
  }
  for (const auto& layer : layer_order) {
    std::printf("layer %s: %" PRIu64 " params\n", layer.c_str(), layer_totals[layer]);
  }
  const ParamCounts counts = count_params(model);
  std::printf("total params: %" PRIu64 "\n", counts.total);
  std::printf("surviving params: %" PRIu64 "\n", counts.surviving);
  std::printf("initial bytes: %" PRIu64 "\n", bytes_at_stage(model, Stage::kInitial).total);
}

struct PruneFlags {
  std::string model, data, out, history;
  std::string strategy = "class-blind";
  double target_drop = 0.05;
  double step = 0.05;
  double initial = 0.05;
  double max_percentage = 1.0;
  double lambda = 0.0;
  int retrain_epochs = 3;
  double lr = 0.05;
  Index batch = 32;
  std::uint64_t seed = 0;
};

void add_prune_flags(CLI::App* cmd, PruneFlags& f, bool with_model_out) {
  cmd->add_option("--model", f.model, "input model (.ncmf)")->required();
  cmd->add_option("--data", f.data, "dataset directory from gen-data")->required();
  cmd->add_option("--strategy", f.strategy, "class-blind|layer-wise|class-uniform|class-distribution");
  cmd->add_option("--target-drop", f.target_drop, "max accuracy drop vs baseline (default 0.05)");
  cmd->add_option("--step", f.step, "percentage increment per iteration (default 0.05)");
  cmd->add_option("--initial", f.initial, "starting percentage (default 0.05)");
  cmd->add_option("--max-percentage", f.max_percentage, "stop at this cumulative percentage (default 1.0)");
  cmd->add_option("--lambda", f.lambda, "std-dev scale for class-distribution");
  cmd->add_option("--retrain-epochs", f.retrain_epochs, "epochs per prune iteration, 3..5 (default 3)");
  cmd->add_option("--lr", f.lr, "retraining learning rate (default 0.05)");
  cmd->add_option("--batch", f.batch, "retraining batch size (default 32)");
  cmd->add_option("--seed", f.seed, "rng seed for retraining order");
  cmd->add_option("--history", f.history, "write per-iteration history JSON here");
  if (with_model_out) cmd->add_option("--out", f.out, "output model (.ncmf)")->required();
}

PruneConfig to_config(const PruneFlags& f, unsigned threads) {
  PruneConfig cfg;
  cfg.strategy.kind = parse_strategy(f.strategy);
  cfg.strategy.lambda = cfg.strategy.kind == PruneKind::kClassDistribution ? f.lambda : 0.0;
  cfg.initial_percentage = f.initial;
  cfg.step = f.step;
  cfg.accuracy_drop_threshold = f.target_drop;
  cfg.retrain_epochs = f.retrain_epochs;
  cfg.retrain_lr = f.lr;
  cfg.retrain_batch = f.batch;
  cfg.max_percentage = f.max_percentage;
  cfg.threads = threads;
  return cfg;
}

std::vector<std::pair<std::string, std::string>> config_snapshot(
    std::initializer_list<std::pair<std::string, std::string>> entries) {
  return {entries.begin(), entries.end()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ncomp - iterative magnitude pruning and dynamic k-means weight quantization"};
  app.require_subcommand(1);

  unsigned threads_flag = 1;
  CLI::Option* threads_opt =
      app.add_option("--threads", threads_flag, "worker threads for evaluation (env THREADS; flag wins)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset as IDX files");
  SyntheticSpec spec;
  std::string gen_out;
  gen->add_option("--seed", spec.seed, "rng seed");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--classes", spec.num_classes, "number of classes (default 10)");
  gen->add_option("--train", spec.train_samples, "training samples (default 5000)");
  gen->add_option("--test", spec.test_samples, "test samples (default 1000)");
  gen->add_option("--noise", spec.noise_std, "pixel noise stddev (default 0.3)");

  // train
  auto* tr = app.add_subcommand("train", "train a classifier from scratch");
  std::string tr_data, tr_arch = "toy", tr_out;
  int tr_epochs = 10;
  double tr_lr = 0.05;
  Index tr_batch = 32;
  std::uint64_t tr_seed = 0;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--arch", tr_arch, "mnist|toy (default toy)");
  tr->add_option("--epochs", tr_epochs, "training epochs (default 10)");
  tr->add_option("--lr", tr_lr, "learning rate (default 0.05)");
  tr->add_option("--batch", tr_batch, "batch size (default 32)");
  tr->add_option("--seed", tr_seed, "rng seed for init and shuffling");
  tr->add_option("--out", tr_out, "output model (.ncmf)")->required();

  // prune
  auto* pr = app.add_subcommand("prune", "iterative prune-retrain-validate pipeline");
  PruneFlags pf;
  add_prune_flags(pr, pf, true);

  // quantize
  auto* qu = app.add_subcommand("quantize", "dynamic k-means weight quantization");
  std::string qu_model, qu_out;
  QuantConfig qcfg;
  qu->add_option("--model", qu_model, "input model (.ncmf)")->required();
  qu->add_option("--base-clusters", qcfg.base_clusters, "clusters per set, C (default 32)");
  qu->add_option("--params-per-set", qcfg.params_per_cluster_set, "parameters per cluster set, N (default 100000)");
  qu->add_option("--out", qu_out, "output model (.ncmf)")->required();

  // compress = prune + quantize
  auto* co = app.add_subcommand("compress", "prune then quantize, emitting the full report");
  PruneFlags cf;
  add_prune_flags(co, cf, true);
  QuantConfig co_qcfg;
  std::string co_report, co_format = "json", co_pruned_out;
  co->add_option("--base-clusters", co_qcfg.base_clusters, "clusters per set, C (default 32)");
  co->add_option("--params-per-set", co_qcfg.params_per_cluster_set, "parameters per cluster set, N (default 100000)");
  co->add_option("--report", co_report, "write the compression report here");
  co->add_option("--format", co_format, "report format: json|csv|table (default json)");
  co->add_option("--pruned-out", co_pruned_out, "also save the pruned (pre-quantization) model");

  // report
  auto* re = app.add_subcommand("report", "byte accounting across three model stages");
  std::string re_initial, re_pruned, re_quantized, re_format = "table", re_out, re_data;
  re->add_option("--initial", re_initial, "baseline model")->required();
  re->add_option("--pruned", re_pruned, "pruned model")->required();
  re->add_option("--quantized", re_quantized, "quantized model")->required();
  re->add_option("--format", re_format, "json|csv|table (default table)");
  re->add_option("--out", re_out, "output path (stdout for csv/table if omitted)");
  re->add_option("--data", re_data, "dataset directory for an accuracy trace");

  // inspect
  auto* in = app.add_subcommand("inspect", "per-layer parameter summary");
  std::string in_model;
  in->add_option("--model", in_model, "model to inspect (.ncmf)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  const unsigned threads = resolve_threads(threads_flag, threads_opt->count() > 0);
  try {
    if (*gen) {
      fs::create_directories(gen_out);
      auto [train_set, test_set] = gen_synthetic(spec);
      save_idx(train_set, fs::path(gen_out) / "train-images.idx", fs::path(gen_out) / "train-labels.idx");
      save_idx(test_set, fs::path(gen_out) / "test-images.idx", fs::path(gen_out) / "test-labels.idx");
      std::printf("wrote %lld train and %lld test samples to %s\n", static_cast<long long>(train_set.size()),
                  static_cast<long long>(test_set.size()), gen_out.c_str());
    } else if (*tr) {
      auto [train_set, test_set] = load_data_dir(tr_data);
      Model<float> model;
      if (tr_arch == "mnist") {
        model = build_mnist_classifier<float>(tr_seed);
      } else if (tr_arch == "toy") {
        model = build_toy_classifier<float>({train_set.inputs.dim(1), train_set.inputs.dim(2), train_set.inputs.dim(3)},
                                            train_set.num_classes, tr_seed);
      } else {
        throw ConfigError("unknown architecture: " + tr_arch);
      }
      Rng rng(tr_seed + 1);
      train(model, train_set, tr_epochs, tr_lr, tr_batch, rng);
      std::printf("train accuracy: %.4f\n", evaluate(model, train_set, threads));
      std::printf("test accuracy: %.4f\n", evaluate(model, test_set, threads));
      save_model(model, tr_out);
    } else if (*pr) {
      auto [train_set, test_set] = load_data_dir(pf.data);
      Model<float> model = load_model(pf.model);
      Rng rng(pf.seed + 1);
      auto [selected, history] = iterative_prune(model, train_set, test_set, to_config(pf, threads), rng);
      save_model(selected, pf.out);
      if (!pf.history.empty()) save_history(history, pf.history);
      const int sel = history.selected_iteration;
      std::printf("baseline accuracy: %.4f\n", history.baseline_accuracy);
      std::printf("selected percentage: %.4f\n", sel >= 0 ? history.iterations[sel].percentage : 0.0);
      std::printf("selected accuracy: %.4f\n",
                  sel >= 0 ? history.iterations[sel].accuracy_after_retrain : history.baseline_accuracy);
    } else if (*qu) {
      Model<float> model = load_model(qu_model);
      auto [quantized, records] = quantize_model(std::move(model), qcfg);
      save_model(quantized, qu_out);
      for (const auto& r : records) {
        std::printf("%s: %" PRIu64 " clusters, inertia %.6g\n", r.cls.c_str(), r.clusters, r.inertia);
      }
    } else if (*co) {
      auto [train_set, test_set] = load_data_dir(cf.data);
      const Model<float> baseline = load_model(cf.model);
      Rng rng(cf.seed + 1);
      auto [pruned, history] = iterative_prune(baseline, train_set, test_set, to_config(cf, threads), rng);
      if (!cf.history.empty()) save_history(history, cf.history);
      if (!co_pruned_out.empty()) save_model(pruned, co_pruned_out);
      auto [quantized, records] = quantize_model(pruned, co_qcfg);
      save_model(quantized, cf.out);

      std::vector<StageAccuracy> trace = {{"initial", history.baseline_accuracy},
                                          {"pruned", evaluate(pruned, test_set, threads)},
                                          {"quantized", evaluate(quantized, test_set, threads)}};
      CompressionReport report = build_report(baseline, pruned, quantized, records, trace);
      report.config = config_snapshot({{"strategy", cf.strategy},
                                       {"target_drop", std::to_string(cf.target_drop)},
                                       {"step", std::to_string(cf.step)},
                                       {"initial", std::to_string(cf.initial)},
                                       {"max_percentage", std::to_string(cf.max_percentage)},
                                       {"lambda", std::to_string(cf.lambda)},
                                       {"retrain_epochs", std::to_string(cf.retrain_epochs)},
                                       {"lr", std::to_string(cf.lr)},
                                       {"batch", std::to_string(cf.batch)},
                                       {"base_clusters", std::to_string(co_qcfg.base_clusters)},
                                       {"params_per_set", std::to_string(co_qcfg.params_per_cluster_set)},
                                       {"seed", std::to_string(cf.seed)},
                                       {"threads", std::to_string(threads)}});
      if (!co_report.empty() || co_format != "json") emit_report(report, co_format, co_report);
      std::printf("percentage pruned: %.2f\n",
                  history.selected_iteration >= 0 ? 100.0 * history.iterations[history.selected_iteration].percentage : 0.0);
      std::printf("compress rate: %.2f\n", report.totals.rate);
      for (const auto& t : trace) std::printf("accuracy[%s] = %.4f\n", t.stage.c_str(), t.value);
    } else if (*re) {
      const Model<float> initial = load_model(re_initial);
      const Model<float> pruned = load_model(re_pruned);
      const Model<float> quantized = load_model(re_quantized);
      const std::vector<QuantizedLayer> records = derive_quant_records(quantized);
      std::vector<StageAccuracy> trace;
      if (!re_data.empty()) {
        auto [train_set, test_set] = load_data_dir(re_data);
        (void)train_set;
        trace = {{"initial", evaluate(initial, test_set, threads)},
                 {"pruned", evaluate(pruned, test_set, threads)},
                 {"quantized", evaluate(quantized, test_set, threads)}};
      }
      CompressionReport report = build_report(initial, pruned, quantized, records, trace);
      report.config = config_snapshot({{"initial", re_initial},
                                       {"pruned", re_pruned},
                                       {"quantized", re_quantized},
                                       {"threads", std::to_string(threads)}});
      emit_report(report, re_format, re_out);
    } else if (*in) {
      run_inspect(in_model);
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
