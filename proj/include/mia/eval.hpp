#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mia/membership.hpp"
#include "mia/oracle.hpp"

namespace mia {

enum class EvalKind { kBalanced, kCBalanced };

const char* to_string(EvalKind kind);
EvalKind eval_kind_from_string(const std::string& text);

struct EvalEntry {
  LabeledSample item;
  bool is_member = false;
  std::size_t source_index = 0;  // index in the train/test dataset
};

struct EvalSet {
  std::vector<EvalEntry> entries;  // members first, then nonmembers
  EvalKind kind = EvalKind::kBalanced;
  std::uint64_t seed = 0;
};

EvalSet build_balanced_set(const Dataset& train, const Dataset& test,
                           std::size_t n_per_side, std::uint64_t seed);

// Only samples the oracle classifies correctly are eligible. Throws
// kInsufficientCorrect naming the side that ran short.
EvalSet build_cbalanced_set(const Dataset& train, const Dataset& test,
                            const HardLabelOracle& oracle,
                            std::size_t n_per_side, std::uint64_t seed);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

// Points from a descending threshold sweep; the first point is (0,0) at
// threshold +inf and the last is (1,1).
struct RocCurve {
  std::vector<RocPoint> points;
};

RocCurve roc_curve(std::span<const ScoreRecord> records);
double auc(const RocCurve& curve);
// Largest TPR among sweep points with FPR <= fpr_level.
double tpr_at_fpr(const RocCurve& curve, double fpr_level);

struct MetricsReport {
  double auc = 0.0;
  std::map<double, double> tpr_at;  // fpr level -> tpr
  std::size_t n_members = 0;
  std::size_t n_nonmembers = 0;
  std::string kind;
};

inline constexpr double kLowFprLevels[] = {0.001, 0.01};

MetricsReport compute_metrics(std::span<const ScoreRecord> records);
std::string metrics_to_json(const MetricsReport& report);

enum class Stability { kStable, kBias };

// Stable iff std < 0.1 * mean; (0, 0) counts as stable.
Stability stability_classify(double mean, double std_dev);

// Reached iff the method's distance is within [d_min, 1.1 * d_min], d_min
// being the smallest finite distance across all methods.
std::map<std::string, bool> min_region_analysis(
    const std::map<std::string, double>& distances);

// Pearson correlation of average ranks.
double spearman(std::span<const double> a, std::span<const double> b);

struct StabilityRecord {
  std::size_t sample_id = 0;
  bool is_member = false;
  double mean = 0.0;
  double std_dev = 0.0;
  Stability stability = Stability::kStable;
  bool same_target = false;       // one adversarial label over all repeats
  std::size_t reached_count = 0;  // repeats inside the min region
  bool reached_min_region = false;
  std::vector<Label> target_classes;
  std::vector<double> distances;
};

// Mean, population std and flags over repeated distances. reference_min, if
// finite, joins the repeats when locating d_min.
StabilityRecord summarize_repeats(std::size_t sample_id, bool is_member,
                                  std::span<const double> distances,
                                  std::span<const Label> target_classes,
                                  double reference_min);

}  // namespace mia
