#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "mia/config.hpp"
#include "mia/error.hpp"
#include "mia/pipeline.hpp"

using namespace mia;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mia_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

// Small 4-class configuration that trains and attacks in a few seconds.
ExperimentConfig small_config(const fs::path& out) {
  auto c = parse_config_text(R"({
    "seed": 11,
    "data": {"synthetic": {"n_classes": 4, "n_per_class": 110, "spread": 0.2},
             "n_train_per_class": 25, "n_test_per_class": 75},
    "model": {"epochs": 150, "batch_size": 16},
    "attack": {"kind": "multi-targeted", "T": 15, "T_f": 5},
    "score": {"kind": "relative"},
    "eval": {"kind": "cbalanced", "n_per_side": 50}
  })");
  c.out_dir = out.string();
  return c;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd =
      std::string(MIA_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Pipeline, FullRunWritesArtifactsAndMatchesLedger) {
  const auto dir = scratch("full");
  const auto outcome = run_experiment(small_config(dir));
  for (const char* name : {artifact::kScores, artifact::kRoc, artifact::kMetrics,
                           artifact::kTrace, artifact::kManifest, artifact::kAttacks}) {
    EXPECT_TRUE(fs::exists(dir / name)) << name;
  }
  const auto manifest = nlohmann::json::parse(slurp(dir / artifact::kManifest));
  EXPECT_EQ(manifest["status"], "ok");
  EXPECT_EQ(manifest["total_queries"].get<std::uint64_t>(), outcome.total_queries);
  std::uint64_t phase_sum = 0;
  for (const auto& [name, n] : manifest["queries_by_phase"].items()) {
    phase_sum += n.get<std::uint64_t>();
  }
  EXPECT_EQ(phase_sum, outcome.total_queries);
  EXPECT_EQ(manifest["config"]["seed"], 11);
  EXPECT_GT(manifest["wall_seconds"].get<double>(), 0.0);

  const auto scores = read_score_csv(dir / artifact::kScores);
  ASSERT_EQ(scores.size(), 100u);
  std::uint64_t score_queries = 0;
  for (const auto& s : scores) score_queries += s.queries;
  EXPECT_LE(score_queries, outcome.total_queries);
  EXPECT_EQ(outcome.metrics.n_members, 50u);
  EXPECT_EQ(outcome.metrics.kind, "relative-distance");

  // Stages are pure functions of their persisted inputs.
  const auto rows = read_attack_csv(dir / artifact::kAttacks);
  EXPECT_EQ(rows.size(), 500u);
  const auto rescored = scratch("rescore");
  write_score_csv(score_stage(ScoreKind::kRelativeDistance, rows), rescored / "s.csv");
  EXPECT_EQ(slurp(rescored / "s.csv"), slurp(dir / artifact::kScores));
}

TEST(Pipeline, RepeatedRunsAreByteIdentical) {
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  auto ca = small_config(a);
  auto cb = small_config(b);
  ca.attack.kind = cb.attack.kind = AttackKind::kUntargeted;
  ca.score = cb.score = ScoreKind::kSingleDistance;
  cb.workers = 3;
  run_experiment(ca);
  run_experiment(cb);
  EXPECT_EQ(slurp(a / artifact::kScores), slurp(b / artifact::kScores));
  EXPECT_EQ(slurp(a / artifact::kMetrics), slurp(b / artifact::kMetrics));
  EXPECT_EQ(slurp(a / artifact::kTrace), slurp(b / artifact::kTrace));
}

TEST(Pipeline, FailedStageIsRecordedInManifest) {
  const auto dir = scratch("fail");
  auto c = small_config(dir);
  c.n_per_side = 500;
  try {
    run_experiment(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientCorrect);
  }
  const auto manifest = nlohmann::json::parse(slurp(dir / artifact::kManifest));
  EXPECT_EQ(manifest["status"], "failed");
  EXPECT_EQ(manifest["failed_stage"], "eval-set");
  EXPECT_TRUE(fs::exists(dir / artifact::kModel));
}

TEST(Pipeline, ParallelForCoversEveryIndexAndPropagatesErrors) {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  EXPECT_EQ(std::count(hits.begin(), hits.end(), 1), 100);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 7) throw Error(ErrorCode::kQueryFailure, "x");
                            }),
               Error);
}

TEST(Pipeline, ScoreStageKinds) {
  std::vector<AttackRow> rows;
  auto add = [&](std::size_t id, PointKind p, double d, Label oracle_label) {
    AttackRow r;
    r.sample_id = id;
    r.is_member = id == 0;
    r.point = p;
    r.label = 1;
    r.oracle_label = oracle_label;
    r.distance = d;
    r.queries = 10;
    rows.push_back(r);
  };
  add(0, PointKind::kSample, 0.5, 1);
  for (auto p : {PointKind::kUp, PointKind::kDown, PointKind::kLeft, PointKind::kRight}) {
    add(0, p, 0.2, 1);
  }
  add(1, PointKind::kSample, 0.0, 2);
  for (auto p : {PointKind::kUp, PointKind::kDown, PointKind::kLeft, PointKind::kRight}) {
    add(1, p, 0.1, 1);
  }
  const auto rel = score_stage(ScoreKind::kRelativeDistance, rows);
  ASSERT_EQ(rel.size(), 2u);
  EXPECT_NEAR(rel[0].score, 0.3, 1e-15);
  EXPECT_NEAR(rel[1].score, -0.1, 1e-15);
  EXPECT_EQ(rel[0].queries, 50u);
  EXPECT_EQ(score_stage(ScoreKind::kSingleDistance, rows)[0].score, 0.5);
  const auto base = score_stage(ScoreKind::kBaselineGap, rows);
  EXPECT_EQ(base[0].score, 1.0);
  EXPECT_EQ(base[1].score, 0.0);
}

TEST(Cli, EvaluateHandWrittenScores) {
  const auto dir = scratch("cli_eval");
  write_file(dir / "scores.csv",
             "sample_id,is_member,kind,score,queries\n"
             "0,1,single-distance,0.9,0\n"
             "1,1,single-distance,0.4,0\n"
             "2,0,single-distance,0.8,0\n"
             "3,0,single-distance,0.3,0\n"
             "4,0,single-distance,0.2,0\n"
             "5,0,single-distance,0.1,0\n");
  ASSERT_EQ(run_cli("evaluate --scores " + (dir / "scores.csv").string() + " --out " +
                        dir.string(),
                    dir / "log.txt"),
            0)
      << slurp(dir / "log.txt");
  const auto metrics = nlohmann::json::parse(slurp(dir / artifact::kMetrics));
  // Pairwise count: 0.9 beats all four nonmembers, 0.4 beats three of them.
  EXPECT_DOUBLE_EQ(metrics["auc"].get<double>(), 7.0 / 8.0);
  EXPECT_DOUBLE_EQ(metrics["tpr_at_0.01"].get<double>(), 0.5);
  EXPECT_EQ(metrics["n"], 6);
  EXPECT_EQ(slurp(dir / artifact::kRoc).substr(0, 15), "threshold,fpr,t");
}

TEST(Cli, ConfigErrorsExitWithTwo) {
  const auto dir = scratch("cli_cfg");
  write_file(dir / "bad.json", R"({"attack": {"r": 1.5}})");
  EXPECT_EQ(run_cli("full-run --config " + (dir / "bad.json").string(), dir / "log.txt"), 2);
  EXPECT_NE(slurp(dir / "log.txt").find("attack.r"), std::string::npos);
  EXPECT_EQ(run_cli("full-run --kind sideways --out " + dir.string(), dir / "log.txt"), 2);
  EXPECT_EQ(run_cli("no-such-command", dir / "log.txt"), 2);
}

TEST(Cli, StagedRunWithTwoClassesAndStability) {
  const auto dir = scratch("cli_stages");
  write_file(dir / "c.json", R"({
    "seed": 4,
    "data": {"synthetic": {"n_classes": 2, "n_per_class": 40, "spread": 0.15},
             "n_train_per_class": 10, "n_test_per_class": 20},
    "model": {"epochs": 100, "batch_size": 8},
    "attack": {"T": 8, "T_f": 4},
    "score": {"kind": "single"},
    "eval": {"n_per_side": 6},
    "stability": {"repeats": 10}
  })");
  const std::string common = " --config " + (dir / "c.json").string() + " --out " + dir.string();
  const auto log = dir / "log.txt";
  ASSERT_EQ(run_cli("gen-data" + common, log), 0) << slurp(log);
  ASSERT_EQ(run_cli("train" + common, log), 0) << slurp(log);
  ASSERT_EQ(run_cli("attack --kind all-targeted" + common, log), 0) << slurp(log);
  const auto rows = read_attack_csv(dir / artifact::kAttacks);
  ASSERT_EQ(rows.size(), 12u);
  for (const auto& r : rows) {
    EXPECT_TRUE(r.attacked);
    ASSERT_TRUE(r.target_class.has_value());
    EXPECT_EQ(*r.target_class, 1u - r.label);
  }
  ASSERT_EQ(run_cli("score" + common, log), 0) << slurp(log);
  ASSERT_EQ(run_cli("evaluate" + common, log), 0) << slurp(log);
  EXPECT_TRUE(fs::exists(dir / artifact::kMetrics));

  ASSERT_EQ(run_cli("stability" + common, log), 0) << slurp(log);
  std::ifstream in(dir / artifact::kStability);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 30), "sample_id,is_member,mean,std,s");
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    EXPECT_TRUE(line.find(",stable,") != std::string::npos ||
                line.find(",bias,") != std::string::npos);
  }
  EXPECT_EQ(n, 12u);
  const auto summary = nlohmann::json::parse(slurp(dir / artifact::kStabilitySummary));
  EXPECT_EQ(summary["n"], 12);
}

TEST(Cli, UnreachableOracleExitsWithThree) {
  const auto dir = scratch("cli_remote");
  write_file(dir / "c.json", R"({
    "data": {"synthetic": {"n_classes": 2, "n_per_class": 30},
             "n_train_per_class": 10, "n_test_per_class": 10},
    "eval": {"n_per_side": 4}
  })");
  const std::string common = " --config " + (dir / "c.json").string() + " --out " + dir.string();
  ASSERT_EQ(run_cli("gen-data" + common, dir / "log.txt"), 0);
  EXPECT_EQ(run_cli("attack --oracle-url http://127.0.0.1:9" + common, dir / "log.txt"), 3)
      << slurp(dir / "log.txt");
  EXPECT_EQ(run_cli("full-run --oracle-url http://127.0.0.1:9" + common, dir / "log.txt"), 3);
  const auto manifest = nlohmann::json::parse(slurp(dir / artifact::kManifest));
  EXPECT_EQ(manifest["status"], "failed");
}
