#include "config_file.hpp"

#include <fstream>

#include "esm/error.hpp"

namespace esmkit {

using esm::check_keys;
using esm::ConfigError;
using esm::Json;

esm::SupernetSpec resolve_spec(const Json& value) {
  if (value.is_object()) return value.get<esm::SupernetSpec>();
  if (!value.is_string())
    throw ConfigError("spec must be a preset name, a file path or an object");
  const std::string name = value.get<std::string>();
  if (esm::is_preset(name)) return esm::preset(name);
  std::ifstream in(name);
  if (!in)
    throw ConfigError("spec '" + name +
                      "' is neither a preset (resnet, mobilenetv3, densenet) "
                      "nor a readable file");
  Json doc;
  try {
    in >> doc;
  } catch (const Json::parse_error& e) {
    throw ConfigError("spec file '" + name + "': " + e.what());
  }
  return doc.get<esm::SupernetSpec>();
}

namespace {

void parse_backend(const Json& j, esm::BackendConfig& backend) {
  check_keys(j, {}, {"kind", "oracle", "command", "timeout_s"},
             "measurement.backend");
  const std::string kind = j.value("kind", "oracle");
  if (kind == "oracle")
    backend.kind = esm::BackendKind::Oracle;
  else if (kind == "external")
    backend.kind = esm::BackendKind::External;
  else
    throw ConfigError("backend.kind must be oracle or external, got '" + kind +
                      "'");
  if (j.contains("oracle")) j.at("oracle").get_to(backend.oracle);
  if (j.contains("command"))
    backend.external.command = j.at("command").get<std::string>();
  if (j.contains("timeout_s"))
    backend.external.timeout_s = j.at("timeout_s").get<double>();
}

void parse_training(const Json& j, esm::TrainConfig& train) {
  check_keys(j, {},
             {"learning_rate", "weight_decay", "epochs", "batch_size", "beta1",
              "beta2", "adam_epsilon", "activation", "log_targets"},
             "training");
  if (j.contains("learning_rate"))
    j.at("learning_rate").get_to(train.learning_rate);
  if (j.contains("weight_decay"))
    j.at("weight_decay").get_to(train.weight_decay);
  if (j.contains("epochs")) j.at("epochs").get_to(train.epochs);
  if (j.contains("batch_size")) j.at("batch_size").get_to(train.batch_size);
  if (j.contains("beta1")) j.at("beta1").get_to(train.beta1);
  if (j.contains("beta2")) j.at("beta2").get_to(train.beta2);
  if (j.contains("adam_epsilon"))
    j.at("adam_epsilon").get_to(train.adam_epsilon);
  if (j.contains("activation"))
    train.activation =
        esm::parse_activation(j.at("activation").get<std::string>());
  if (j.contains("log_targets")) j.at("log_targets").get_to(train.log_targets);
}

}  // namespace

FileConfig parse_config(const Json& doc) {
  check_keys(doc, {"spec"},
             {"seed", "out_dir", "sampling", "bins", "measurement", "encoding",
              "training", "evaluation", "extension"},
             "config");
  FileConfig config;
  config.esm.spec = resolve_spec(doc.at("spec"));
  if (doc.contains("seed")) doc.at("seed").get_to(config.esm.root_seed);
  if (doc.contains("out_dir")) doc.at("out_dir").get_to(config.out_dir);

  if (doc.contains("sampling")) {
    const Json& j = doc.at("sampling");
    check_keys(j, {}, {"strategy", "n_initial", "n_step"}, "sampling");
    if (j.contains("strategy"))
      config.esm.strategy =
          esm::parse_strategy(j.at("strategy").get<std::string>());
    if (j.contains("n_initial")) j.at("n_initial").get_to(config.esm.n_initial);
    if (j.contains("n_step")) j.at("n_step").get_to(config.esm.n_step);
  }
  if (doc.contains("bins")) {
    const Json& j = doc.at("bins");
    check_keys(j, {}, {"n_bins"}, "bins");
    if (j.contains("n_bins")) j.at("n_bins").get_to(config.esm.n_bins);
  }
  if (doc.contains("measurement")) {
    const Json& j = doc.at("measurement");
    check_keys(j, {}, {"backend", "runs_per_arch", "references", "qc"},
               "measurement");
    if (j.contains("backend")) parse_backend(j.at("backend"), config.esm.backend);
    if (j.contains("runs_per_arch"))
      j.at("runs_per_arch").get_to(config.esm.runs_per_arch);
    if (j.contains("references"))
      j.at("references").get_to(config.esm.n_references);
    if (j.contains("qc")) {
      const Json& qc = j.at("qc");
      check_keys(qc, {}, {"threshold", "max_retries"}, "measurement.qc");
      if (qc.contains("threshold"))
        qc.at("threshold").get_to(config.esm.qc_threshold);
      if (qc.contains("max_retries"))
        qc.at("max_retries").get_to(config.esm.qc_max_retries);
    }
  }
  if (doc.contains("encoding")) {
    const Json& j = doc.at("encoding");
    check_keys(j, {}, {"scheme"}, "encoding");
    if (j.contains("scheme"))
      config.esm.scheme = esm::parse_scheme(j.at("scheme").get<std::string>());
  }
  if (doc.contains("training")) parse_training(doc.at("training"), config.esm.train);
  if (doc.contains("evaluation")) {
    const Json& j = doc.at("evaluation");
    check_keys(j, {}, {"strategy", "acc_th", "test_size"}, "evaluation");
    if (j.contains("strategy"))
      config.esm.eval_strategy =
          esm::parse_eval_strategy(j.at("strategy").get<std::string>());
    if (j.contains("acc_th")) j.at("acc_th").get_to(config.esm.acc_th);
    if (j.contains("test_size")) j.at("test_size").get_to(config.esm.test_size);
  }
  if (doc.contains("extension")) {
    const Json& j = doc.at("extension");
    check_keys(j, {}, {"w_below", "w_above", "max_iterations"}, "extension");
    if (j.contains("w_below")) j.at("w_below").get_to(config.esm.w_below);
    if (j.contains("w_above")) j.at("w_above").get_to(config.esm.w_above);
    if (j.contains("max_iterations"))
      j.at("max_iterations").get_to(config.esm.max_iterations);
  }
  return config;
}

FileConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  Json doc;
  try {
    in >> doc;
  } catch (const Json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  try {
    return parse_config(doc);
  } catch (const esm::SchemaError& e) {
    // strict-key and spec violations inside a config are config errors
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
}

Json config_to_json(const FileConfig& config) {
  const esm::EsmConfig& cfg = config.esm;
  Json backend{{"kind", cfg.backend.kind == esm::BackendKind::Oracle
                            ? "oracle"
                            : "external"},
               {"oracle", cfg.backend.oracle}};
  if (!cfg.backend.external.command.empty()) {
    backend["command"] = cfg.backend.external.command;
    backend["timeout_s"] = cfg.backend.external.timeout_s;
  }
  return Json{
      {"spec", cfg.spec},
      {"seed", cfg.root_seed},
      {"out_dir", config.out_dir},
      {"sampling",
       {{"strategy", to_string(cfg.strategy)},
        {"n_initial", cfg.n_initial},
        {"n_step", cfg.n_step}}},
      {"bins", {{"n_bins", cfg.n_bins}}},
      {"measurement",
       {{"backend", backend},
        {"runs_per_arch", cfg.runs_per_arch},
        {"references", cfg.n_references},
        {"qc",
         {{"threshold", cfg.qc_threshold},
          {"max_retries", cfg.qc_max_retries}}}}},
      {"encoding", {{"scheme", to_string(cfg.scheme)}}},
      {"training",
       {{"learning_rate", cfg.train.learning_rate},
        {"weight_decay", cfg.train.weight_decay},
        {"epochs", cfg.train.epochs},
        {"batch_size", cfg.train.batch_size},
        {"beta1", cfg.train.beta1},
        {"beta2", cfg.train.beta2},
        {"adam_epsilon", cfg.train.adam_epsilon},
        {"activation", to_string(cfg.train.activation)},
        {"log_targets", cfg.train.log_targets}}},
      {"evaluation",
       {{"strategy", to_string(cfg.eval_strategy)},
        {"acc_th", cfg.acc_th},
        {"test_size", cfg.test_size}}},
      {"extension",
       {{"w_below", cfg.w_below},
        {"w_above", cfg.w_above},
        {"max_iterations", cfg.max_iterations}}}};
}

}  // namespace esmkit
