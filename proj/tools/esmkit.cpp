// esmkit: build latency datasets, train surrogate predictors and run the
// full sample-measure-train-evaluate-extend loop from the command line.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "config_file.hpp"
#include "esm/dataset.hpp"
#include "esm/error.hpp"
#include "esm/esm_loop.hpp"
#include "esm/predictor.hpp"
#include "esm/rng.hpp"
#include "esm/version.hpp"

namespace fs = std::filesystem;
using esm::Json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNotConverged = 2;
constexpr int kExitBackend = 3;
constexpr int kExitQc = 4;

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buffer[32];
  std::strftime(buffer, sizeof buffer, "%FT%TZ", std::gmtime(&t));
  return buffer;
}

// Sidecar record that makes a run reproducible: resolved config, seeds and
// artifact paths. Timing lives here, never in the deterministic outputs.
void write_manifest(const fs::path& path, const std::string& command,
                    const Json& resolved_config, const Json& artifacts,
                    const std::string& started, Json extra = Json::object()) {
  Json manifest{{"tool", "esmkit"},
                {"tool_version", esm::kVersion},
                {"command", command},
                {"started", started},
                {"finished", iso_timestamp()},
                {"config", resolved_config},
                {"artifacts", artifacts}};
  for (auto& [key, value] : extra.items()) manifest[key] = value;
  std::ofstream out(path);
  out << manifest.dump(2) << "\n";
}

void write_scatter(const fs::path& path, const esm::EvalReport& report) {
  std::ofstream out(path);
  out << "actual_ms,predicted_ms,bin\n";
  char line[96];
  for (std::size_t i = 0; i < report.actual.size(); ++i) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%d\n", report.actual[i],
                  report.predicted[i], report.sample_bins[i]);
    out << line;
  }
}

Json history_to_json(const esm::EsmHistory& history) {
  Json iterations = Json::array();
  for (const auto& record : history.iterations) {
    Json accs = Json::array();
    for (double acc : record.bin_accuracy)
      accs.push_back(std::isnan(acc) ? Json() : Json(acc));
    iterations.push_back(Json{{"iteration", record.iteration},
                              {"dataset_size", record.dataset_size},
                              {"bin_accuracy", accs},
                              {"overall_accuracy", record.overall_accuracy},
                              {"pass", record.pass},
                              {"allocation", record.allocation},
                              {"train_seed", record.train_seed}});
  }
  return Json{{"converged", history.converged}, {"iterations", iterations}};
}

// Encodes the dataset's non-reference samples, preferring vectors persisted
// by `esmkit encode`.
void dataset_matrix(const esm::LatencyDataset& ds, Eigen::MatrixXd& X,
                    Eigen::VectorXd& y, std::vector<int>& bins_out) {
  const auto rows = ds.nonref_indices();
  const auto dim = esm::encoding_length(ds.spec, ds.scheme);
  X.resize(rows.size(), dim);
  y.resize(rows.size());
  bins_out.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = ds.samples[rows[i]];
    const std::vector<double>& values =
        s.encoded ? *s.encoded : esm::encode(ds.spec, s.arch, ds.scheme).values;
    X.row(i) = Eigen::Map<const Eigen::VectorXd>(
        values.data(), static_cast<Eigen::Index>(values.size()));
    y[i] = s.latency_ms;
    bins_out[i] = esm::bin_index(s.arch, ds.bins);
  }
}

std::string resolve_backend_command(const std::string& flag_value,
                                    const std::string& config_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("ESM_BACKEND_CMD"); env && *env)
    return env;
  return config_value;
}

void print_report(const esm::EvalReport& report, const esm::DepthBins& bins) {
  std::printf("overall accuracy: %.2f%%\n", 100.0 * report.overall_accuracy);
  for (int b = 0; b < bins.n_bins; ++b) {
    const bool last = b + 1 == bins.n_bins;
    if (report.per_bin_count[b] == 0) {
      std::printf("  bin %d [%d, %d%s: empty\n", b, bins.edges[b],
                  bins.edges[b + 1], last ? "]" : ")");
      continue;
    }
    std::printf("  bin %d [%d, %d%s: %.2f%% over %d samples\n", b,
                bins.edges[b], bins.edges[b + 1], last ? "]" : ")",
                100.0 * report.per_bin_accuracy[b], report.per_bin_count[b]);
  }
}

struct SpecOptions {
  std::string spec = "resnet";
  int n_bins = 4;
};

int cmd_space(const SpecOptions& options) {
  const auto spec = esmkit::resolve_spec(Json(options.spec));
  const auto size = esm::space_size(spec);
  std::printf("spec: %s\n", spec.name.c_str());
  std::printf("architectures: %s (%s)\n", size.str().c_str(),
              esm::format_scientific(size).c_str());
  std::printf("total depth: %d .. %d\n", spec.min_total_depth(),
              spec.max_total_depth());
  std::printf(
      "encoding lengths: fcc=%zu fc=%zu statistical=%zu feature=%zu "
      "onehot=%zu\n",
      esm::encoding_length(spec, esm::EncodingScheme::Fcc),
      esm::encoding_length(spec, esm::EncodingScheme::FeatureCount),
      esm::encoding_length(spec, esm::EncodingScheme::Statistical),
      esm::encoding_length(spec, esm::EncodingScheme::Feature),
      esm::encoding_length(spec, esm::EncodingScheme::OneHot));
  const auto bins = esm::make_bins(spec, options.n_bins);
  std::printf("bins (n=%d):", bins.n_bins);
  for (int b = 0; b < bins.n_bins; ++b)
    std::printf(" [%d,%d%s", bins.edges[b], bins.edges[b + 1],
                b + 1 == bins.n_bins ? "]" : ")");
  std::printf("\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latency surrogate models for architecture search"};
  app.set_version_flag("--version", esm::kVersion);
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path,
                 "JSON run configuration (flags override file keys)")
      ->envname("ESM_CONFIG");

  // space
  SpecOptions space_options;
  auto* space = app.add_subcommand("space", "describe an architecture space");
  space->add_option("--spec", space_options.spec,
                    "preset name or spec JSON path");
  space->add_option("--bins", space_options.n_bins, "bin count for the table");

  // shared flag targets
  std::string out_path;
  std::string strategy_flag, scheme_flag, backend_flag, backend_cmd_flag;
  std::string spec_flag;
  std::optional<std::uint64_t> seed_flag;
  std::optional<int> n_flag, bins_flag, runs_flag, refs_flag;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--out", out_path, "output file")->required();
    cmd->add_option("--seed", seed_flag, "root seed override");
  };

  // sample
  auto* sample = app.add_subcommand("sample", "sample architectures to a file");
  sample->add_option("--spec", spec_flag, "preset name or spec JSON path");
  sample->add_option("--strategy", strategy_flag, "random|balanced");
  sample->add_option("--n", n_flag, "number of architectures");
  sample->add_option("--bins", bins_flag, "depth bin count");
  add_common(sample);

  // measure
  auto* measure =
      app.add_subcommand("measure", "measure an arch list into a dataset");
  std::string archs_path;
  measure->add_option("--archs", archs_path, "arch list file")->required();
  measure->add_option("--backend", backend_flag, "oracle|external");
  measure->add_option("--backend-cmd", backend_cmd_flag,
                      "external measurement command");
  measure->add_option("--runs", runs_flag, "runs per architecture");
  measure->add_option("--refs", refs_flag, "number of reference models");
  measure->add_option("--scheme", scheme_flag,
                      "encoding scheme recorded in the dataset");
  add_common(measure);

  // encode
  auto* encode_cmd = app.add_subcommand(
      "encode", "fill persisted encoding vectors in a dataset");
  std::string dataset_path;
  encode_cmd->add_option("--dataset", dataset_path, "dataset file")->required();
  encode_cmd->add_option("--scheme", scheme_flag, "encoding scheme");
  add_common(encode_cmd);

  // train
  auto* train_cmd = app.add_subcommand("train", "train an MLP predictor");
  double test_fraction = 0.0;
  std::string heldout_path;
  std::optional<int> epochs_flag, batch_flag;
  std::optional<double> lr_flag;
  train_cmd->add_option("--dataset", dataset_path, "dataset file")->required();
  train_cmd->add_option("--scheme", scheme_flag, "encoding scheme override");
  train_cmd->add_option("--test-fraction", test_fraction,
                        "hold out a stratified test split");
  train_cmd->add_option("--heldout", heldout_path,
                        "where to write the held-out split");
  train_cmd->add_option("--epochs", epochs_flag, "training epochs");
  train_cmd->add_option("--batch-size", batch_flag, "minibatch size");
  train_cmd->add_option("--learning-rate", lr_flag, "Adam learning rate");
  add_common(train_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a model on a dataset");
  std::string model_path;
  std::string eval_strategy_flag;
  std::optional<double> acc_th_flag;
  eval_cmd->add_option("--model", model_path, "model file")->required();
  eval_cmd->add_option("--dataset", dataset_path, "dataset file")->required();
  eval_cmd->add_option("--strategy", eval_strategy_flag, "overall|bin_wise");
  eval_cmd->add_option("--acc-th", acc_th_flag, "accuracy threshold");
  eval_cmd->add_option("--out", out_path, "report JSON path");

  // esm
  auto* esm_cmd = app.add_subcommand("esm", "run the full iterative loop");
  std::string out_dir_flag;
  std::optional<double> esm_acc_th;
  std::optional<int> esm_max_iter;
  esm_cmd->add_option("--strategy", strategy_flag, "random|balanced");
  esm_cmd->add_option("--scheme", scheme_flag, "encoding scheme");
  esm_cmd->add_option("--backend", backend_flag, "oracle|external");
  esm_cmd->add_option("--backend-cmd", backend_cmd_flag,
                      "external measurement command");
  esm_cmd->add_option("--acc-th", esm_acc_th, "accuracy threshold");
  esm_cmd->add_option("--max-iterations", esm_max_iter, "iteration cap");
  esm_cmd->add_option("--out-dir", out_dir_flag, "artifact directory");
  esm_cmd->add_option("--seed", seed_flag, "root seed override");

  // export-scatter
  auto* scatter_cmd = app.add_subcommand(
      "export-scatter", "write (actual, predicted, bin) rows for plotting");
  scatter_cmd->add_option("--model", model_path, "model file")->required();
  scatter_cmd->add_option("--dataset", dataset_path, "dataset file")
      ->required();
  scatter_cmd->add_option("--out", out_path, "CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  const std::string started = iso_timestamp();
  try {
    if (space->parsed()) return cmd_space(space_options);

    // Config file first, then flag overrides.
    esmkit::FileConfig config;
    bool config_loaded = false;
    if (!config_path.empty()) {
      config = esmkit::load_config_file(config_path);
      config_loaded = true;
    }
    auto& cfg = config.esm;
    if (!spec_flag.empty()) cfg.spec = esmkit::resolve_spec(Json(spec_flag));
    if (seed_flag) cfg.root_seed = *seed_flag;
    if (!strategy_flag.empty())
      cfg.strategy = esm::parse_strategy(strategy_flag);
    if (!scheme_flag.empty()) cfg.scheme = esm::parse_scheme(scheme_flag);
    if (!backend_flag.empty()) {
      if (backend_flag == "oracle")
        cfg.backend.kind = esm::BackendKind::Oracle;
      else if (backend_flag == "external")
        cfg.backend.kind = esm::BackendKind::External;
      else
        throw esm::ConfigError("--backend must be oracle or external");
    }
    cfg.backend.external.command =
        resolve_backend_command(backend_cmd_flag, cfg.backend.external.command);
    if (runs_flag) cfg.runs_per_arch = *runs_flag;
    if (refs_flag) cfg.n_references = *refs_flag;

    if (sample->parsed()) {
      if (!config_loaded && spec_flag.empty())
        throw esm::ConfigError("sample needs --spec or --config");
      if (n_flag) cfg.n_initial = *n_flag;
      if (bins_flag) cfg.n_bins = *bins_flag;
      esm::ArchList list;
      list.spec = cfg.spec;
      list.bins = esm::make_bins(cfg.spec, cfg.n_bins);
      list.root_seed = cfg.root_seed;
      list.archs =
          cfg.strategy == esm::SamplingStrategy::Balanced
              ? esm::sample_balanced(
                    cfg.spec, cfg.n_initial, list.bins,
                    esm::derive_seed(cfg.root_seed, "sample", 0))
              : esm::sample_random(
                    cfg.spec, cfg.n_initial,
                    esm::derive_seed(cfg.root_seed, "sample", 0));
      esm::save_arch_list(list, out_path);
      write_manifest(out_path + ".manifest.json", "sample",
                     esmkit::config_to_json(config),
                     Json{{"arch_list", out_path}}, started);
      std::printf("wrote %zu archs to %s\n", list.archs.size(),
                  out_path.c_str());
      return kExitOk;
    }

    if (measure->parsed()) {
      const auto list = esm::load_arch_list(archs_path);
      cfg.spec = list.spec;
      auto backend = esm::make_backend(cfg.backend, cfg.spec);
      esm::LatencyDataset ds;
      ds.spec = list.spec;
      ds.scheme = cfg.scheme;
      ds.bins = list.bins;
      ds.backend_id = backend->capabilities().id;
      ds.root_seed = cfg.root_seed;
      if (cfg.n_references > 0)
        ds.refs = esm::sample_random(cfg.spec, cfg.n_references,
                                     esm::derive_seed(cfg.root_seed, "refs"));
      esm::measure_and_append(
          ds, *backend, list.archs,
          {cfg.runs_per_arch, cfg.qc_threshold, cfg.qc_max_retries},
          "batch-0000", esm::derive_seed(cfg.root_seed, "measure", 0));
      esm::save_dataset(ds, out_path);
      write_manifest(out_path + ".manifest.json", "measure",
                     esmkit::config_to_json(config),
                     Json{{"arch_list", archs_path}, {"dataset", out_path}},
                     started);
      std::printf("measured %zu samples (%zu references) into %s\n",
                  ds.nonref_size(), ds.samples.size() - ds.nonref_size(),
                  out_path.c_str());
      return kExitOk;
    }

    if (encode_cmd->parsed()) {
      auto ds = esm::load_dataset(dataset_path);
      if (!scheme_flag.empty()) ds.scheme = esm::parse_scheme(scheme_flag);
      for (auto& s : ds.samples)
        s.encoded = esm::encode(ds.spec, s.arch, ds.scheme).values;
      esm::save_dataset(ds, out_path);
      write_manifest(out_path + ".manifest.json", "encode",
                     esmkit::config_to_json(config),
                     Json{{"dataset", out_path}}, started);
      std::printf("encoded %zu samples with scheme %s\n", ds.samples.size(),
                  esm::to_string(ds.scheme).c_str());
      return kExitOk;
    }

    if (train_cmd->parsed()) {
      auto ds = esm::load_dataset(dataset_path);
      if (!scheme_flag.empty()) {
        const auto requested = esm::parse_scheme(scheme_flag);
        if (requested != ds.scheme) {
          ds.scheme = requested;
          for (auto& s : ds.samples) s.encoded.reset();
        }
      }
      if (epochs_flag) cfg.train.epochs = *epochs_flag;
      if (batch_flag) cfg.train.batch_size = *batch_flag;
      if (lr_flag) cfg.train.learning_rate = *lr_flag;
      cfg.train.seed = esm::derive_seed(cfg.root_seed, "train", 0);

      Eigen::MatrixXd X;
      Eigen::VectorXd y;
      std::vector<int> bins;
      if (test_fraction > 0) {
        const auto [train_rows, test_rows] = esm::split(
            ds, test_fraction, esm::derive_seed(cfg.root_seed, "split"));
        esm::LatencyDataset heldout = ds;
        heldout.samples.clear();
        esm::LatencyDataset train_ds = heldout;
        for (auto i : test_rows) heldout.samples.push_back(ds.samples[i]);
        for (auto i : train_rows) train_ds.samples.push_back(ds.samples[i]);
        dataset_matrix(train_ds, X, y, bins);
        if (!heldout_path.empty()) esm::save_dataset(heldout, heldout_path);
      } else {
        dataset_matrix(ds, X, y, bins);
      }

      auto model = esm::train(X, y, cfg.train);
      model.spec_name = ds.spec.name;
      model.scheme = ds.scheme;
      esm::save_model(model, cfg.train, out_path);
      Json artifacts{{"model", out_path}, {"dataset", dataset_path}};
      if (test_fraction > 0 && !heldout_path.empty())
        artifacts["heldout"] = heldout_path;
      write_manifest(out_path + ".manifest.json", "train",
                     esmkit::config_to_json(config), artifacts, started);
      std::printf("trained on %ld samples, model written to %s\n",
                  static_cast<long>(X.rows()), out_path.c_str());
      return kExitOk;
    }

    if (eval_cmd->parsed()) {
      const auto loaded = esm::load_model(model_path);
      const auto ds = esm::load_dataset(dataset_path);
      if (loaded.model.spec_name != ds.spec.name)
        throw esm::ConfigError("model was trained for spec '" +
                               loaded.model.spec_name + "', dataset is '" +
                               ds.spec.name + "'");
      if (loaded.model.scheme != ds.scheme)
        throw esm::ConfigError(
            "model expects scheme " + esm::to_string(loaded.model.scheme) +
            ", dataset carries " + esm::to_string(ds.scheme));
      if (!eval_strategy_flag.empty())
        cfg.eval_strategy = esm::parse_eval_strategy(eval_strategy_flag);
      if (acc_th_flag) cfg.acc_th = *acc_th_flag;

      Eigen::MatrixXd X;
      Eigen::VectorXd y;
      std::vector<int> bins;
      dataset_matrix(ds, X, y, bins);
      const auto report =
          esm::evaluate(loaded.model, X, y, bins, ds.bins.n_bins,
                        cfg.eval_strategy, cfg.acc_th);
      print_report(report, ds.bins);
      std::printf("%s at threshold %.2f%% (%s)\n",
                  report.pass ? "PASS" : "FAIL", 100.0 * cfg.acc_th,
                  esm::to_string(cfg.eval_strategy).c_str());
      if (!out_path.empty()) {
        Json accs = Json::array();
        for (int b = 0; b < ds.bins.n_bins; ++b)
          accs.push_back(report.per_bin_count[b] == 0
                             ? Json()
                             : Json(report.per_bin_accuracy[b]));
        Json doc{{"overall_accuracy", report.overall_accuracy},
                 {"bin_accuracy", accs},
                 {"bin_count", report.per_bin_count},
                 {"pass", report.pass},
                 {"strategy", esm::to_string(cfg.eval_strategy)},
                 {"acc_th", cfg.acc_th}};
        std::ofstream out(out_path);
        out << doc.dump(2) << "\n";
      }
      return report.pass ? kExitOk : kExitNotConverged;
    }

    if (esm_cmd->parsed()) {
      if (!config_loaded) throw esm::ConfigError("esm requires --config");
      if (esm_acc_th) cfg.acc_th = *esm_acc_th;
      if (esm_max_iter) cfg.max_iterations = *esm_max_iter;
      if (!out_dir_flag.empty()) config.out_dir = out_dir_flag;
      const fs::path out_dir = config.out_dir;
      fs::create_directories(out_dir);

      std::vector<double> wall_times;
      esm::EsmCallbacks callbacks;
      callbacks.on_iteration = [&](const esm::IterationRecord& record,
                                   const esm::EvalReport& report) {
        char name[48];
        std::snprintf(name, sizeof name, "scatter_iter%03d.csv",
                      record.iteration);
        write_scatter(out_dir / name, report);
        wall_times.push_back(record.wall_time_s);
        std::printf(
            "iteration %d: %zu samples, overall %.2f%%, min bin %.2f%%, %s\n",
            record.iteration, record.dataset_size,
            100.0 * record.overall_accuracy,
            100.0 * report.min_bin_accuracy(),
            record.pass ? "pass" : "continue");
        std::fflush(stdout);
      };

      const auto result = esm::run_esm(cfg, callbacks);
      esm::save_dataset(result.dataset, out_dir / "dataset.jsonl");
      esm::save_dataset(result.test_set, out_dir / "test_set.jsonl");
      esm::TrainConfig final_train = cfg.train;
      final_train.seed = result.history.iterations.back().train_seed;
      esm::save_model(result.model, final_train, out_dir / "model.jsonl");
      {
        std::ofstream out(out_dir / "history.json");
        out << history_to_json(result.history).dump(2) << "\n";
      }
      write_manifest(out_dir / "manifest.json", "esm",
                     esmkit::config_to_json(config),
                     Json{{"dataset", (out_dir / "dataset.jsonl").string()},
                          {"test_set", (out_dir / "test_set.jsonl").string()},
                          {"model", (out_dir / "model.jsonl").string()},
                          {"history", (out_dir / "history.json").string()}},
                     started, Json{{"iteration_wall_s", wall_times}});
      std::printf("%s after %zu iteration(s); artifacts in %s\n",
                  result.history.converged ? "converged" : "NOT converged",
                  result.history.iterations.size(), out_dir.c_str());
      return result.history.converged ? kExitOk : kExitNotConverged;
    }

    if (scatter_cmd->parsed()) {
      const auto loaded = esm::load_model(model_path);
      const auto ds = esm::load_dataset(dataset_path);
      if (loaded.model.spec_name != ds.spec.name ||
          loaded.model.scheme != ds.scheme)
        throw esm::ConfigError("model and dataset are incompatible (spec '" +
                               loaded.model.spec_name + "'/" +
                               esm::to_string(loaded.model.scheme) + " vs '" +
                               ds.spec.name + "'/" + esm::to_string(ds.scheme) +
                               ")");
      Eigen::MatrixXd X;
      Eigen::VectorXd y;
      std::vector<int> bins;
      dataset_matrix(ds, X, y, bins);
      const auto report =
          esm::evaluate(loaded.model, X, y, bins, ds.bins.n_bins,
                        esm::EvalStrategy::Overall, 0.0);
      write_scatter(out_path, report);
      std::printf("wrote %zu rows to %s\n", report.actual.size(),
                  out_path.c_str());
      return kExitOk;
    }

    throw esm::ConfigError("no subcommand given");
  } catch (const esm::QcError& e) {
    std::fprintf(stderr, "esmkit: quality control: %s\n", e.what());
    return kExitQc;
  } catch (const esm::BackendError& e) {
    std::fprintf(stderr, "esmkit: backend: %s\n", e.what());
    return kExitBackend;
  } catch (const esm::Error& e) {
    std::fprintf(stderr, "esmkit: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "esmkit: unexpected: %s\n", e.what());
    return kExitConfig;
  }
}
