#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mia/config.hpp"
#include "mia/error.hpp"
#include "mia/pipeline.hpp"

namespace fs = std::filesystem;
using namespace mia;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string oracle_url;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out_dir, "Output directory (overrides out_dir)");
  cmd->add_option("--seed", f.seed, "Master seed (overrides seed)");
  cmd->add_option("--workers", f.workers, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--oracle-url", f.oracle_url, "Query a remote /predict endpoint");
}

ExperimentConfig load_config(const CommonFlags& f) {
  ExperimentConfig c = f.config_path.empty() ? ExperimentConfig{} : parse_config(f.config_path);
  if (!f.out_dir.empty()) c.out_dir = f.out_dir;
  if (f.seed) c.seed = *f.seed;
  if (f.workers) c.workers = *f.workers;
  if (!f.oracle_url.empty()) c.oracle_url = f.oracle_url;
  fs::create_directories(c.out_dir);
  return c;
}

std::optional<MlpModel> stage_model(const ExperimentConfig& c) {
  if (!c.oracle_url.empty()) return std::nullopt;
  const fs::path path = c.model.path.empty() ? fs::path(c.out_dir) / artifact::kModel
                                             : fs::path(c.model.path);
  return load_model(path);
}

void print_metrics(const MetricsReport& m) {
  std::printf("auc %.6f  tpr@0.1%%fpr %.4f  tpr@1%%fpr %.4f  (%zu members, %zu nonmembers)\n",
              m.auc, m.tpr_at.at(0.001), m.tpr_at.at(0.01), m.n_members, m.n_nonmembers);
}

ModelServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label-only membership inference via decision-boundary distances"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string kind_override, score_override, data_path, attacks_path, scores_path;
  std::string model_path, host = "127.0.0.1";
  int port = 8080;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic train/test/aux split");
  add_common(gen, flags);

  auto* train = app.add_subcommand("train", "Train the target model on train.miads");
  add_common(train, flags);
  train->add_option("--data", data_path, "Training set (default: <out>/train.miads)");

  auto* attack = app.add_subcommand("attack", "Boundary distances for the evaluation set");
  add_common(attack, flags);
  attack->add_option("--kind", kind_override, "untargeted | all-targeted | multi-targeted");
  attack->add_option("--score", score_override, "single | relative | baseline");

  auto* score = app.add_subcommand("score", "Membership scores from an attack table");
  add_common(score, flags);
  score->add_option("--attacks", attacks_path, "Attack CSV (default: <out>/attacks.csv)");
  score->add_option("--score", score_override, "single | relative | baseline");

  auto* evaluate = app.add_subcommand("evaluate", "ROC curve and metrics from a score CSV");
  add_common(evaluate, flags);
  evaluate->add_option("--scores", scores_path, "Score CSV (default: <out>/scores.csv)");

  auto* stability = app.add_subcommand("stability", "Repeated untargeted attacks per sample");
  add_common(stability, flags);

  auto* full = app.add_subcommand("full-run", "gen-data, train, attack, score and evaluate");
  add_common(full, flags);
  full->add_option("--kind", kind_override, "untargeted | all-targeted | multi-targeted");
  full->add_option("--score", score_override, "single | relative | baseline");

  auto* serve = app.add_subcommand("serve", "Serve a model as a hard-label /predict endpoint");
  serve->add_option("--model", model_path, "Model JSON")->required()->check(CLI::ExistingFile);
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code_for(ErrorCode::kConfigError);
  }

  try {
    if (serve->parsed()) {
      ModelServer server(load_model(model_path));
      const int bound = server.bind(host, port);
      std::printf("listening on %s:%d\n", host.c_str(), bound);
      std::fflush(stdout);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.listen();
      return 0;
    }

    ExperimentConfig config = load_config(flags);
    try {
      if (!kind_override.empty()) config.attack.kind = attack_kind_from_string(kind_override);
      if (!score_override.empty()) config.score = score_kind_from_string(score_override);
    } catch (const Error& e) {
      throw ConfigError(kind_override.empty() ? "--score" : "--kind", e.what());
    }
    const fs::path out = config.out_dir;

    if (gen->parsed()) {
      const auto split = load_or_generate_data(config);
      write_split(split, out);
      std::printf("train %zu  test %zu  aux %zu  -> %s\n", split.train.size(), split.test.size(),
                  split.aux.size(), out.string().c_str());
    } else if (train->parsed()) {
      const Dataset data = read_dataset(data_path.empty() ? out / artifact::kTrain
                                                          : fs::path(data_path));
      const MlpModel model = load_or_train_model(config, data);
      save_model(model, out / artifact::kModel);
      std::printf("train accuracy %.4f -> %s\n", accuracy(model, data),
                  (out / artifact::kModel).string().c_str());
    } else if (attack->parsed() || stability->parsed()) {
      const DatasetSplit split = read_split(out);
      const auto model = stage_model(config);
      auto oracle = make_oracle(config, model ? &*model : nullptr, split.aux.n_classes());
      const EvalSet set = build_eval_set(config, split, *oracle);
      if (attack->parsed()) {
        const AttackTable table = attack_stage(config, set, split.aux, *oracle);
        write_attack_csv(table.rows, out / artifact::kAttacks);
        write_trace_csv(table.trace, out / artifact::kTrace);
        std::printf("%zu attack rows, %llu queries\n", table.rows.size(),
                    static_cast<unsigned long long>(oracle->ledger().total()));
      } else {
        const auto records = stability_stage(config, set, split.aux, *oracle);
        write_stability_csv(records, out / artifact::kStability);
        const std::string summary = stability_summary_json(records);
        write_text(summary, out / artifact::kStabilitySummary);
        std::printf("%s\n", summary.c_str());
      }
    } else if (score->parsed()) {
      const auto rows = read_attack_csv(attacks_path.empty() ? out / artifact::kAttacks
                                                             : fs::path(attacks_path));
      const auto scores = score_stage(config.score, rows);
      write_score_csv(scores, out / artifact::kScores);
      std::printf("%zu scores -> %s\n", scores.size(),
                  (out / artifact::kScores).string().c_str());
    } else if (evaluate->parsed()) {
      const auto scores = read_score_csv(scores_path.empty() ? out / artifact::kScores
                                                             : fs::path(scores_path));
      print_metrics(evaluate_stage(scores, out).metrics);
    } else if (full->parsed()) {
      const RunOutcome outcome = run_experiment(config);
      print_metrics(outcome.metrics);
      std::printf("queries %llu  wall %.2fs\n",
                  static_cast<unsigned long long>(outcome.total_queries), outcome.wall_seconds);
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
