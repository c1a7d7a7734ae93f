#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mia/config.hpp"
#include "mia/eval.hpp"
#include "mia/membership.hpp"
#include "mia/oracle.hpp"

namespace mia {

// File names of the stage artifacts inside the output directory.
namespace artifact {
inline constexpr const char* kTrain = "train.miads";
inline constexpr const char* kTest = "test.miads";
inline constexpr const char* kAux = "aux.miads";
inline constexpr const char* kModel = "model.json";
inline constexpr const char* kAttacks = "attacks.csv";
inline constexpr const char* kTrace = "trace.csv";
inline constexpr const char* kScores = "scores.csv";
inline constexpr const char* kRoc = "roc.csv";
inline constexpr const char* kMetrics = "metrics.json";
inline constexpr const char* kStability = "stability.csv";
inline constexpr const char* kStabilitySummary = "stability_summary.json";
inline constexpr const char* kManifest = "manifest.json";
}  // namespace artifact

// Which point of an evaluation entry a boundary distance belongs to.
enum class PointKind { kSample, kUp, kDown, kLeft, kRight };

const char* to_string(PointKind p);
PointKind point_kind_from_string(const std::string& text);

struct AttackRow {
  std::size_t sample_id = 0;
  bool is_member = false;
  PointKind point = PointKind::kSample;
  Label label = 0;         // ground truth of the evaluation sample
  Label oracle_label = 0;  // oracle's label for this point
  bool attacked = false;   // false when short-circuited to distance 0
  double distance = 0.0;
  std::uint64_t queries = 0;
  std::optional<Label> target_class;
};

struct TraceExportRow {
  std::size_t sample_id = 0;
  TraceRow row;
};

struct AttackTable {
  std::vector<AttackRow> rows;
  std::vector<TraceExportRow> trace;
};

// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

DatasetSplit load_or_generate_data(const ExperimentConfig& config);
void write_split(const DatasetSplit& split, const std::filesystem::path& dir);
DatasetSplit read_split(const std::filesystem::path& dir);

MlpModel load_or_train_model(const ExperimentConfig& config, const Dataset& train);

// In-process oracle for `model`, or a remote client when oracle_url is set.
std::unique_ptr<HardLabelOracle> make_oracle(const ExperimentConfig& config,
                                             const MlpModel* model,
                                             std::size_t n_classes);

EvalSet build_eval_set(const ExperimentConfig& config, const DatasetSplit& split,
                       const HardLabelOracle& oracle);

AttackSetup attack_setup(const ExperimentConfig& config, const Dataset* aux,
                         std::size_t sample_id);

// Boundary distances for every evaluation entry (plus its neighbors when
// the score kind is relative). Misclassified points get distance 0.
AttackTable attack_stage(const ExperimentConfig& config, const EvalSet& set,
                         const Dataset& aux, const HardLabelOracle& oracle);

// Turns an attack table into one score per evaluation sample.
std::vector<ScoreRecord> score_stage(ScoreKind kind, const std::vector<AttackRow>& rows);

std::vector<StabilityRecord> stability_stage(const ExperimentConfig& config,
                                             const EvalSet& set, const Dataset& aux,
                                             const HardLabelOracle& oracle);

// CSV / JSON artifact I/O.
void write_attack_csv(const std::vector<AttackRow>& rows, const std::filesystem::path& path);
std::vector<AttackRow> read_attack_csv(const std::filesystem::path& path);
void write_trace_csv(const std::vector<TraceExportRow>& rows, const std::filesystem::path& path);
void write_score_csv(const std::vector<ScoreRecord>& records, const std::filesystem::path& path);
std::vector<ScoreRecord> read_score_csv(const std::filesystem::path& path);
void write_roc_csv(const RocCurve& curve, const std::filesystem::path& path);
void write_text(const std::string& text, const std::filesystem::path& path);
void write_stability_csv(const std::vector<StabilityRecord>& records,
                         const std::filesystem::path& path);
std::string stability_summary_json(const std::vector<StabilityRecord>& records);

struct EvaluationOutput {
  RocCurve curve;
  MetricsReport metrics;
};

EvaluationOutput evaluate_stage(const std::vector<ScoreRecord>& scores,
                                const std::filesystem::path& out_dir);

struct RunOutcome {
  MetricsReport metrics;
  std::uint64_t total_queries = 0;
  double wall_seconds = 0.0;
};

// gen-data -> train -> attack -> score -> evaluate, writing every artifact
// and a manifest. On failure the manifest names the failed stage and the
// error is rethrown.
RunOutcome run_experiment(const ExperimentConfig& config);

}  // namespace mia
