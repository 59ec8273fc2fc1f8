#include "tetra/config.hpp"

#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "tetra/error.hpp"

namespace tetra {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  require(j.is_object(), ErrorCode::ConfigInvalid, where + " must be an object");
  const std::unordered_set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    require(ok.count(key) > 0, ErrorCode::ConfigInvalid,
            "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get_number(const json& j, const std::string& where, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  require(v.is_number(), ErrorCode::ConfigInvalid,
          where + "." + key + " must be a number");
  return v.get<T>();
}

std::uint64_t get_seed(const json& j, const std::string& where, const char* key,
                       std::uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  require(v.is_number_unsigned() || v.is_number_integer(), ErrorCode::ConfigInvalid,
          where + "." + key + " must be an integer");
  return v.get<std::uint64_t>();
}

std::vector<std::string> get_string_list(const json& j, const std::string& where, const char* key,
                                         std::vector<std::string> fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  require(v.is_array(), ErrorCode::ConfigInvalid, where + "." + key + " must be an array");
  std::vector<std::string> out;
  for (const json& e : v) {
    require(e.is_string(), ErrorCode::ConfigInvalid,
            where + "." + key + " must contain strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

AlphaLaw parse_alpha(const json& j, const std::string& where) {
  check_keys(j, where, {"kind", "value", "lo", "hi"});
  require(j.contains("kind") && j.at("kind").is_string(), ErrorCode::ConfigInvalid,
          where + ".kind must be a string");
  AlphaLaw law;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "fixed") {
    law.kind = AlphaLaw::Kind::Fixed;
    law.value = get_number<double>(j, where, "value", law.value);
  } else if (kind == "uniform") {
    law.kind = AlphaLaw::Kind::Uniform;
    law.lo = get_number<double>(j, where, "lo", law.lo);
    law.hi = get_number<double>(j, where, "hi", law.hi);
  } else {
    fail(ErrorCode::ConfigInvalid, where + ".kind must be 'fixed' or 'uniform'");
  }
  return law;
}

UniverseConfig parse_universe(const json& j) {
  UniverseConfig c = default_universe_config();
  check_keys(j, "universe",
             {"dim", "train_subjects", "test_subjects", "refs_per_subject", "probes_per_subject",
              "ref_noise", "probe_noise", "tools", "morphs_per_tool", "subject_dim",
              "artifact_dim", "artifact_overlap", "artifact_noise", "seed"});
  c.dim = get_number<std::size_t>(j, "universe", "dim", c.dim);
  c.train_subjects = get_number<std::size_t>(j, "universe", "train_subjects", c.train_subjects);
  c.test_subjects = get_number<std::size_t>(j, "universe", "test_subjects", c.test_subjects);
  c.refs_per_subject =
      get_number<std::size_t>(j, "universe", "refs_per_subject", c.refs_per_subject);
  c.probes_per_subject =
      get_number<std::size_t>(j, "universe", "probes_per_subject", c.probes_per_subject);
  c.ref_noise = get_number<double>(j, "universe", "ref_noise", c.ref_noise);
  c.probe_noise = get_number<double>(j, "universe", "probe_noise", c.probe_noise);
  c.morphs_per_tool = get_number<std::size_t>(j, "universe", "morphs_per_tool", c.morphs_per_tool);
  c.subject_dim = get_number<std::size_t>(j, "universe", "subject_dim", c.subject_dim);
  c.artifact_dim = get_number<std::size_t>(j, "universe", "artifact_dim", c.artifact_dim);
  c.artifact_overlap = get_number<double>(j, "universe", "artifact_overlap", c.artifact_overlap);
  c.artifact_noise = get_number<double>(j, "universe", "artifact_noise", c.artifact_noise);
  c.seed = get_seed(j, "universe", "seed", c.seed);
  if (j.contains("tools")) {
    require(j.at("tools").is_array(), ErrorCode::ConfigInvalid,
            "universe.tools must be an array");
    c.tools.clear();
    std::size_t i = 0;
    for (const json& tj : j.at("tools")) {
      const std::string where = "universe.tools[" + std::to_string(i++) + "]";
      check_keys(tj, where, {"name", "alpha", "noise_std", "artifact_strength"});
      require(tj.contains("name") && tj.at("name").is_string(), ErrorCode::ConfigInvalid,
              where + ".name must be a string");
      ToolConfig t;
      t.name = tj.at("name").get<std::string>();
      if (tj.contains("alpha")) t.alpha = parse_alpha(tj.at("alpha"), where + ".alpha");
      t.noise_std = get_number<double>(tj, where, "noise_std", t.noise_std);
      t.artifact_strength = get_number<double>(tj, where, "artifact_strength",
                                               t.artifact_strength);
      c.tools.push_back(std::move(t));
    }
  }
  return c;
}

SplitProtocol parse_protocol(const json& j) {
  SplitProtocol p;
  check_keys(j, "protocol", {"train_tools", "val_tools", "test_tools"});
  p.train_tools = get_string_list(j, "protocol", "train_tools", p.train_tools);
  p.val_tools = get_string_list(j, "protocol", "val_tools", p.val_tools);
  p.test_tools = get_string_list(j, "protocol", "test_tools", p.test_tools);
  return p;
}

TrainConfig parse_train(const json& j) {
  TrainConfig c;
  check_keys(j, "train",
             {"epochs", "batch_size", "learning_rate", "momentum", "decay_coefficient",
              "decay_period_epochs", "patience_epochs", "margin", "scenario", "seed"});
  c.epochs = get_number<std::size_t>(j, "train", "epochs", c.epochs);
  c.batch_size = get_number<std::size_t>(j, "train", "batch_size", c.batch_size);
  c.learning_rate = get_number<double>(j, "train", "learning_rate", c.learning_rate);
  c.momentum = get_number<double>(j, "train", "momentum", c.momentum);
  c.decay_coefficient = get_number<double>(j, "train", "decay_coefficient", c.decay_coefficient);
  c.decay_period_epochs =
      get_number<std::size_t>(j, "train", "decay_period_epochs", c.decay_period_epochs);
  c.patience_epochs = get_number<std::size_t>(j, "train", "patience_epochs", c.patience_epochs);
  c.margin = get_number<double>(j, "train", "margin", c.margin);
  c.seed = get_seed(j, "train", "seed", c.seed);
  if (j.contains("scenario")) {
    require(j.at("scenario").is_string(), ErrorCode::ConfigInvalid,
            "train.scenario must be a string");
    c.scenario = scenario_from_string(j.at("scenario").get<std::string>());
  }
  return c;
}

EvalConfig parse_eval(const json& j) {
  EvalConfig c;
  check_keys(j, "eval", {"fmr_targets", "nonmated_cap", "seed"});
  if (j.contains("fmr_targets")) {
    require(j.at("fmr_targets").is_array(), ErrorCode::ConfigInvalid,
            "eval.fmr_targets must be an array");
    c.fmr_targets.clear();
    for (const json& e : j.at("fmr_targets")) {
      require(e.is_number(), ErrorCode::ConfigInvalid, "eval.fmr_targets must hold numbers");
      const double t = e.get<double>();
      require(t >= 0.0 && t <= 1.0, ErrorCode::ConfigInvalid,
              "eval.fmr_targets entries must lie in [0, 1]");
      c.fmr_targets.push_back(t);
    }
    require(!c.fmr_targets.empty(), ErrorCode::ConfigInvalid, "eval.fmr_targets is empty");
  }
  if (j.contains("nonmated_cap") && !j.at("nonmated_cap").is_null()) {
    require(j.at("nonmated_cap").is_number_unsigned(), ErrorCode::ConfigInvalid,
            "eval.nonmated_cap must be a non-negative integer or null");
    c.nonmated_cap = j.at("nonmated_cap").get<std::size_t>();
  }
  c.seed = get_seed(j, "eval", "seed", c.seed);
  return c;
}

}  // namespace

RunConfig default_run_config() { return RunConfig{}; }

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& e) {
    fail(ErrorCode::ConfigInvalid, std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "config", {"version", "universe", "protocol", "train", "dmad", "eval"});
  require(j.contains("version"), ErrorCode::ConfigInvalid, "config.version is required");
  require(j.at("version").is_number_integer() && j.at("version").get<int>() == 1,
          ErrorCode::ConfigInvalid, "unsupported config version (expected 1)");
  RunConfig c;
  if (j.contains("universe")) c.universe = parse_universe(j.at("universe"));
  if (j.contains("protocol")) c.protocol = parse_protocol(j.at("protocol"));
  if (j.contains("train")) c.train = parse_train(j.at("train"));
  if (j.contains("dmad")) {
    const json& dj = j.at("dmad");
    check_keys(dj, "dmad", {"learning_rate", "epochs", "l2", "seed"});
    c.dmad.learning_rate = get_number<double>(dj, "dmad", "learning_rate", c.dmad.learning_rate);
    c.dmad.epochs = get_number<std::size_t>(dj, "dmad", "epochs", c.dmad.epochs);
    c.dmad.l2 = get_number<double>(dj, "dmad", "l2", c.dmad.l2);
    c.dmad_seed = get_seed(dj, "dmad", "seed", c.dmad_seed);
  }
  if (j.contains("eval")) c.eval = parse_eval(j.at("eval"));
  validate(c.train);
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::ConfigInvalid, "cannot open config '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

std::string run_config_to_json(const RunConfig& config) {
  json j;
  j["version"] = 1;
  json u;
  u["dim"] = config.universe.dim;
  u["train_subjects"] = config.universe.train_subjects;
  u["test_subjects"] = config.universe.test_subjects;
  u["refs_per_subject"] = config.universe.refs_per_subject;
  u["probes_per_subject"] = config.universe.probes_per_subject;
  u["ref_noise"] = config.universe.ref_noise;
  u["probe_noise"] = config.universe.probe_noise;
  u["morphs_per_tool"] = config.universe.morphs_per_tool;
  u["subject_dim"] = config.universe.subject_dim;
  u["artifact_dim"] = config.universe.artifact_dim;
  u["artifact_overlap"] = config.universe.artifact_overlap;
  u["artifact_noise"] = config.universe.artifact_noise;
  u["seed"] = config.universe.seed;
  json tools = json::array();
  for (const ToolConfig& t : config.universe.tools) {
    json tj;
    tj["name"] = t.name;
    if (t.alpha.kind == AlphaLaw::Kind::Fixed) {
      tj["alpha"] = {{"kind", "fixed"}, {"value", t.alpha.value}};
    } else {
      tj["alpha"] = {{"kind", "uniform"}, {"lo", t.alpha.lo}, {"hi", t.alpha.hi}};
    }
    tj["noise_std"] = t.noise_std;
    tj["artifact_strength"] = t.artifact_strength;
    tools.push_back(tj);
  }
  u["tools"] = tools;
  j["universe"] = u;
  j["protocol"] = {{"train_tools", config.protocol.train_tools},
                   {"val_tools", config.protocol.val_tools},
                   {"test_tools", config.protocol.test_tools}};
  j["train"] = {{"epochs", config.train.epochs},
                {"batch_size", config.train.batch_size},
                {"learning_rate", config.train.learning_rate},
                {"momentum", config.train.momentum},
                {"decay_coefficient", config.train.decay_coefficient},
                {"decay_period_epochs", config.train.decay_period_epochs},
                {"patience_epochs", config.train.patience_epochs},
                {"margin", config.train.margin},
                {"scenario", to_string(config.train.scenario)},
                {"seed", config.train.seed}};
  j["dmad"] = {{"learning_rate", config.dmad.learning_rate},
               {"epochs", config.dmad.epochs},
               {"l2", config.dmad.l2},
               {"seed", config.dmad_seed}};
  json ev;
  ev["fmr_targets"] = config.eval.fmr_targets;
  if (config.eval.nonmated_cap) {
    ev["nonmated_cap"] = *config.eval.nonmated_cap;
  } else {
    ev["nonmated_cap"] = nullptr;
  }
  ev["seed"] = config.eval.seed;
  j["eval"] = ev;
  return j.dump(2) + "\n";
}

void save_run_config(const RunConfig& config, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << run_config_to_json(config);
  require(out.good(), ErrorCode::Io, "write to '" + path + "' failed");
}

}  // namespace tetra
