#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tetra/config.hpp"
#include "tetra/dmad.hpp"
#include "tetra/error.hpp"
#include "tetra/metrics.hpp"
#include "tetra/mining.hpp"
#include "tetra/synthdata.hpp"
#include "tetra/trainer.hpp"

namespace fs = std::filesystem;
using namespace tetra;

namespace {

RunConfig load_config_or_default(const std::string& path) {
  return path.empty() ? default_run_config() : load_run_config(path);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::Io, "cannot create output directory '" + dir + "'");
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

struct NamedScores {
  std::string name;
  ScoreSet scores;
};

std::string format_target(double target) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "FMR=%g%%", target * 100.0);
  return buf;
}

void write_report_csv(const std::vector<std::pair<std::string, EvalReport>>& reports,
                      const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << "scenario,fmr_target,threshold,fmr,fnmr,iapar,riapar\n";
  for (const auto& [name, rep] : reports) {
    for (const OperatingPoint& p : rep.points) {
      out << name << ',' << format_value(p.fmr_target) << ',' << format_value(p.threshold) << ','
          << format_value(p.fmr) << ',' << format_value(p.fnmr) << ',' << format_value(p.iapar)
          << ',' << format_value(p.riapar) << "\n";
    }
  }
  require(out.good(), ErrorCode::Io, "write to '" + path + "' failed");
}

std::string render_report_table(const std::vector<std::pair<std::string, EvalReport>>& reports,
                                const std::vector<double>& targets) {
  std::string text;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-14s", "scenario");
  text += buf;
  for (const double t : targets) {
    std::snprintf(buf, sizeof(buf), " | %-26s", format_target(t).c_str());
    text += buf;
  }
  text += "\n";
  std::snprintf(buf, sizeof(buf), "%-14s", "");
  text += buf;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    std::snprintf(buf, sizeof(buf), " | %-8s %-8s %-8s", "IAPAR", "FNMR", "RIAPAR");
    text += buf;
  }
  text += "\n";
  for (const auto& [name, rep] : reports) {
    std::snprintf(buf, sizeof(buf), "%-14s", name.c_str());
    text += buf;
    for (const OperatingPoint& p : rep.points) {
      std::snprintf(buf, sizeof(buf), " | %-8.4f %-8.4f %-8.4f", p.iapar, p.fnmr, p.riapar);
      text += buf;
    }
    text += "\n";
  }
  return text;
}

int cmd_generate(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed) {
  RunConfig cfg = load_config_or_default(config_path);
  if (seed) cfg.universe.seed = *seed;
  const SyntheticUniverse universe = generate_universe(cfg.universe);
  const ProtocolSplits splits = split_protocol(universe, cfg.protocol);

  ensure_dir(out_dir);
  save_embeddings(universe.set, join(out_dir, "universe.emb"));
  save_embeddings(splits.train, join(out_dir, "train.emb"));
  save_embeddings(splits.val, join(out_dir, "val.emb"));
  save_embeddings(splits.test, join(out_dir, "test.emb"));
  save_ground_truth(universe, join(out_dir, "ground_truth.json"));
  save_run_config(cfg, join(out_dir, "resolved_config.json"));

  nlohmann::json manifest;
  manifest["universe"] = "universe.emb";
  manifest["train"] = "train.emb";
  manifest["val"] = "val.emb";
  manifest["test"] = "test.emb";
  manifest["ground_truth"] = "ground_truth.json";
  manifest["counts"] = {{"universe", universe.set.records.size()},
                        {"train", splits.train.records.size()},
                        {"val", splits.val.records.size()},
                        {"test", splits.test.records.size()}};
  std::ofstream mf(join(out_dir, "manifest.json"));
  require(mf.good(), ErrorCode::Io, "cannot write manifest");
  mf << manifest.dump(2) << "\n";

  std::cout << "universe: " << universe.set.records.size() << " records (dim "
            << universe.set.dim << ")\n"
            << "train: " << splits.train.records.size() << " records\n"
            << "val:   " << splits.val.records.size() << " records\n"
            << "test:  " << splits.test.records.size() << " records\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, const std::string& scenario,
              std::optional<std::uint64_t> seed) {
  RunConfig cfg = load_config_or_default(config_path);
  if (!scenario.empty()) cfg.train.scenario = scenario_from_string(scenario);
  if (seed) cfg.train.seed = *seed;
  const EmbeddingSet train_set = load_embeddings(join(data_dir, "train.emb"));
  const EmbeddingSet val_set = load_embeddings(join(data_dir, "val.emb"));

  const TrainResult result = train(cfg.train, train_set, val_set);

  ensure_dir(out_dir);
  save_checkpoint(result.best, join(out_dir, "adapter.tetr"));
  save_history_csv(result.history, join(out_dir, "history.csv"));
  save_run_config(cfg, join(out_dir, "resolved_config.json"));
  std::cout << "trained " << result.history.epochs.size() << " epochs (scenario "
            << to_string(cfg.train.scenario) << "); best epoch " << result.history.best_epoch
            << " with validation loss " << format_value(result.history.best_val_loss) << "\n";
  return 0;
}

int cmd_train_dmad(const std::string& config_path, const std::string& data_dir,
                   const std::string& out_dir, std::optional<std::uint64_t> seed) {
  RunConfig cfg = load_config_or_default(config_path);
  if (seed) cfg.dmad_seed = *seed;
  const EmbeddingSet train_set = load_embeddings(join(data_dir, "train.emb"));
  const ComparisonPairs pairs = enumerate_pairs(train_set);
  const DmadTrainingData data = dmad_training_features(train_set, pairs);
  const DmadModel model = train_dmad(data.bona, data.morph, cfg.dmad, cfg.dmad_seed);

  ensure_dir(out_dir);
  save_dmad(model, join(out_dir, "dmad.bin"));
  save_run_config(cfg, join(out_dir, "resolved_config.json"));
  std::cout << "trained detector on " << data.bona.rows() << " bona fide and "
            << data.morph.rows() << " morph pairs\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& data_dir,
             const std::string& checkpoint, const std::string& dmad_path,
             const std::string& out_dir, const std::vector<double>& fmr_targets) {
  RunConfig cfg = load_config_or_default(config_path);
  if (!fmr_targets.empty()) cfg.eval.fmr_targets = fmr_targets;
  for (const double t : cfg.eval.fmr_targets) {
    require(t >= 0.0 && t <= 1.0, ErrorCode::ConfigInvalid, "FMR targets must lie in [0, 1]");
  }
  const EmbeddingSet test_set = load_embeddings(join(data_dir, "test.emb"));
  ScoreProtocol protocol;
  protocol.nonmated_cap = cfg.eval.nonmated_cap;
  protocol.seed = cfg.eval.seed;
  const ComparisonPairs pairs = enumerate_pairs(test_set, protocol);

  std::optional<Adapter> adapter;
  if (!checkpoint.empty()) adapter = load_checkpoint(checkpoint);
  std::optional<DmadModel> detector;
  if (!dmad_path.empty()) detector = load_dmad(dmad_path);

  std::vector<NamedScores> scored;
  scored.push_back({"original", score_pairs(nullptr, test_set, pairs)});
  std::optional<ScoreSet> mad_scores;
  if (detector) {
    mad_scores = dmad_score_pairs(*detector, test_set, pairs);
    scored.push_back({"original_mad", fuse_scores(scored[0].scores, *mad_scores)});
  }
  if (adapter) {
    scored.push_back({"tetra", score_pairs(&*adapter, test_set, pairs)});
    if (mad_scores) {
      scored.push_back({"tetra_mad", fuse_scores(scored.back().scores, *mad_scores)});
    }
  }

  std::vector<std::pair<std::string, EvalReport>> reports;
  for (const NamedScores& s : scored) {
    reports.emplace_back(s.name, build_report(s.scores, cfg.eval.fmr_targets));
  }

  ensure_dir(out_dir);
  write_report_csv(reports, join(out_dir, "report.csv"));
  const std::string table = render_report_table(reports, cfg.eval.fmr_targets);
  std::ofstream table_file(join(out_dir, "report.txt"));
  require(table_file.good(), ErrorCode::Io, "cannot write report table");
  table_file << table;
  for (const NamedScores& s : scored) {
    save_scores(s.scores, join(out_dir, "scores_" + s.name + ".csv"));
    save_det_csv(det_points(s.scores, 200), join(out_dir, "det_" + s.name + ".csv"));
  }
  save_run_config(cfg, join(out_dir, "resolved_config.json"));
  std::cout << table;
  return 0;
}

int cmd_export_diffs(const std::string& data_dir, const std::string& checkpoint, std::size_t n,
                     std::uint64_t seed, const std::string& out_file) {
  const EmbeddingSet test_set = load_embeddings(join(data_dir, "test.emb"));
  std::optional<Adapter> adapter;
  if (!checkpoint.empty()) adapter = load_checkpoint(checkpoint);
  const fs::path parent = fs::path(out_file).parent_path();
  if (!parent.empty()) ensure_dir(parent.string());
  export_difference_vectors(adapter ? &*adapter : nullptr, test_set, n, seed, out_file);
  std::cout << "wrote difference vectors to " << out_file << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Morphing-attack-hardened embedding verification toolkit"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, checkpoint, dmad_path, scenario;
  std::optional<std::uint64_t> seed;
  std::vector<double> fmr_targets;
  std::size_t diff_count = 1000;
  std::uint64_t diff_seed = 0;

  auto* gen = app.add_subcommand("generate", "Generate a synthetic embedding universe + splits");
  gen->add_option("--config", config_path, "Run config JSON");
  gen->add_option("--out", out_path, "Output directory")->required();
  gen->add_option("--seed", seed, "Override the universe seed");

  auto* tr = app.add_subcommand("train", "Train the embedding adapter");
  tr->add_option("--config", config_path, "Run config JSON");
  tr->add_option("--data", data_dir, "Directory with train.emb/val.emb")->required();
  tr->add_option("--out", out_path, "Output directory")->required();
  tr->add_option("--scenario", scenario, "triplet|tetra|triplet2|tetra2");
  tr->add_option("--seed", seed, "Override the training seed");

  auto* td = app.add_subcommand("train-dmad", "Train the differential detector");
  td->add_option("--config", config_path, "Run config JSON");
  td->add_option("--data", data_dir, "Directory with train.emb")->required();
  td->add_option("--out", out_path, "Output directory")->required();
  td->add_option("--seed", seed, "Override the detector seed");

  auto* ev = app.add_subcommand("eval", "Full-system evaluation on the test split");
  ev->add_option("--config", config_path, "Run config JSON");
  ev->add_option("--data", data_dir, "Directory with test.emb")->required();
  ev->add_option("--checkpoint", checkpoint, "Adapter checkpoint");
  ev->add_option("--dmad", dmad_path, "Detector checkpoint");
  ev->add_option("--out", out_path, "Output directory")->required();
  ev->add_option("--fmr-targets", fmr_targets, "FMR operating points")->delimiter(',');

  auto* ed = app.add_subcommand("export-diffs", "Export squared difference vectors");
  ed->add_option("--data", data_dir, "Directory with test.emb")->required();
  ed->add_option("--checkpoint", checkpoint, "Adapter checkpoint");
  ed->add_option("--n", diff_count, "Pairs per class");
  ed->add_option("--seed", diff_seed, "Sampling seed");
  ed->add_option("--out", out_path, "Output CSV file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_generate(config_path, out_path, seed);
    if (tr->parsed()) return cmd_train(config_path, data_dir, out_path, scenario, seed);
    if (td->parsed()) return cmd_train_dmad(config_path, data_dir, out_path, seed);
    if (ev->parsed()) return cmd_eval(config_path, data_dir, checkpoint, dmad_path, out_path,
                                      fmr_targets);
    if (ed->parsed()) return cmd_export_diffs(data_dir, checkpoint, diff_count, diff_seed,
                                              out_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.error_class());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
