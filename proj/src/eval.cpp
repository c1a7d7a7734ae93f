#include "mia/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "mia/error.hpp"
#include "rng.hpp"

namespace mia {

const char* to_string(EvalKind kind) {
  return kind == EvalKind::kBalanced ? "balanced" : "cbalanced";
}

EvalKind eval_kind_from_string(const std::string& text) {
  if (text == "balanced") return EvalKind::kBalanced;
  if (text == "cbalanced") return EvalKind::kCBalanced;
  throw Error(ErrorCode::kInvalidArgument, "unknown eval-set kind '" + text + "'");
}

namespace {

std::vector<std::size_t> permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  detail::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

EvalSet build_balanced_set(const Dataset& train, const Dataset& test,
                           std::size_t n_per_side, std::uint64_t seed) {
  if (train.size() < n_per_side || test.size() < n_per_side) {
    throw Error(ErrorCode::kInvalidArgument,
                "need " + std::to_string(n_per_side) + " samples per side, have " +
                    std::to_string(train.size()) + " train and " +
                    std::to_string(test.size()) + " test");
  }
  auto rng = detail::make_stream(seed, 0xba1);
  EvalSet set{{}, EvalKind::kBalanced, seed};
  const auto members = permutation(train.size(), rng);
  const auto nonmembers = permutation(test.size(), rng);
  for (std::size_t i = 0; i < n_per_side; ++i) {
    set.entries.push_back({train[members[i]], true, members[i]});
  }
  for (std::size_t i = 0; i < n_per_side; ++i) {
    set.entries.push_back({test[nonmembers[i]], false, nonmembers[i]});
  }
  return set;
}

EvalSet build_cbalanced_set(const Dataset& train, const Dataset& test,
                            const HardLabelOracle& oracle, std::size_t n_per_side,
                            std::uint64_t seed) {
  auto rng = detail::make_stream(seed, 0xba1);
  EvalSet set{{}, EvalKind::kCBalanced, seed};
  auto draw = [&](const Dataset& data, bool member, const char* side) {
    std::size_t taken = 0;
    for (std::size_t idx : permutation(data.size(), rng)) {
      if (taken == n_per_side) break;
      if (oracle.query(data[idx].sample, "eval") == data[idx].label) {
        set.entries.push_back({data[idx], member, idx});
        ++taken;
      }
    }
    if (taken < n_per_side) {
      throw Error(ErrorCode::kInsufficientCorrect,
                  std::string(side) + " side has only " + std::to_string(taken) +
                      " correctly classified samples, need " + std::to_string(n_per_side));
    }
  };
  draw(train, true, "member");
  draw(test, false, "nonmember");
  return set;
}

RocCurve roc_curve(std::span<const ScoreRecord> records) {
  std::size_t positives = 0;
  for (const auto& r : records) positives += r.is_member ? 1 : 0;
  const std::size_t negatives = records.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "ROC needs at least one member and one nonmember");
  }
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return records[a].score > records[b].score;
  });
  RocCurve curve;
  curve.points.push_back({INFINITY, 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = records[order[i]].score;
    for (; i < order.size() && records[order[i]].score == threshold; ++i) {
      (records[order[i]].is_member ? tp : fp) += 1;
    }
    curve.points.push_back({threshold, static_cast<double>(fp) / static_cast<double>(negatives),
                            static_cast<double>(tp) / static_cast<double>(positives)});
  }
  return curve;
}

double auc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return area;
}

double tpr_at_fpr(const RocCurve& curve, double fpr_level) {
  double best = 0.0;
  for (const auto& p : curve.points) {
    if (p.fpr <= fpr_level) best = std::max(best, p.tpr);
  }
  return best;
}

MetricsReport compute_metrics(std::span<const ScoreRecord> records) {
  const RocCurve curve = roc_curve(records);
  MetricsReport report;
  report.auc = auc(curve);
  for (double level : kLowFprLevels) report.tpr_at[level] = tpr_at_fpr(curve, level);
  for (const auto& r : records) (r.is_member ? report.n_members : report.n_nonmembers) += 1;
  report.kind = to_string(records.front().kind);
  return report;
}

std::string metrics_to_json(const MetricsReport& report) {
  nlohmann::ordered_json doc;
  doc["auc"] = report.auc;
  doc["tpr_at_0.001"] = report.tpr_at.at(0.001);
  doc["tpr_at_0.01"] = report.tpr_at.at(0.01);
  doc["kind"] = report.kind;
  doc["n"] = report.n_members + report.n_nonmembers;
  return doc.dump(2);
}

Stability stability_classify(double mean, double std_dev) {
  if (mean < 0.0 || std_dev < 0.0 || std::isnan(mean) || std::isnan(std_dev)) {
    throw Error(ErrorCode::kInvalidArgument, "mean and std must be non-negative");
  }
  if (mean == 0.0) return std_dev == 0.0 ? Stability::kStable : Stability::kBias;
  return std_dev < 0.1 * mean ? Stability::kStable : Stability::kBias;
}

std::map<std::string, bool> min_region_analysis(const std::map<std::string, double>& distances) {
  double d_min = INFINITY;
  for (const auto& [name, d] : distances) {
    if (std::isfinite(d)) d_min = std::min(d_min, d);
  }
  if (!std::isfinite(d_min)) {
    throw Error(ErrorCode::kInvalidArgument, "min-region analysis needs a finite distance");
  }
  std::map<std::string, bool> reached;
  for (const auto& [name, d] : distances) reached[name] = d <= 1.1 * d_min;
  return reached;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    // 1-based ranks i+1 .. j share their mean.
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kInvalidArgument, "spearman inputs differ in length");
  }
  if (a.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "spearman needs at least two pairs");
  }
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw Error(ErrorCode::kUndefinedCorrelation, "spearman of a constant list");
  }
  return sab / std::sqrt(saa * sbb);
}

StabilityRecord summarize_repeats(std::size_t sample_id, bool is_member,
                                  std::span<const double> distances,
                                  std::span<const Label> target_classes,
                                  double reference_min) {
  if (distances.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no repeated distances");
  }
  StabilityRecord rec;
  rec.sample_id = sample_id;
  rec.is_member = is_member;
  rec.distances.assign(distances.begin(), distances.end());
  rec.target_classes.assign(target_classes.begin(), target_classes.end());
  const double n = static_cast<double>(distances.size());
  rec.mean = std::accumulate(distances.begin(), distances.end(), 0.0) / n;
  double var = 0.0;
  for (double d : distances) var += (d - rec.mean) * (d - rec.mean);
  rec.std_dev = std::sqrt(var / n);
  rec.stability = stability_classify(rec.mean, rec.std_dev);
  rec.same_target = !target_classes.empty() &&
                    std::all_of(target_classes.begin(), target_classes.end(),
                                [&](Label c) { return c == target_classes.front(); });
  double d_min = *std::min_element(distances.begin(), distances.end());
  if (std::isfinite(reference_min)) d_min = std::min(d_min, reference_min);
  rec.reached_count = static_cast<std::size_t>(
      std::count_if(distances.begin(), distances.end(),
                    [&](double d) { return d <= 1.1 * d_min; }));
  rec.reached_min_region = rec.reached_count == distances.size();
  return rec;
}

}  // namespace mia
