#include "mia/membership.hpp"

#include <algorithm>
#include <numeric>

#include "mia/error.hpp"

namespace mia {

const char* to_string(Direction d) {
  switch (d) {
    case Direction::kUp: return "up";
    case Direction::kDown: return "down";
    case Direction::kLeft: return "left";
    case Direction::kRight: return "right";
  }
  return "unknown";
}

Sample shift_image(const Sample& x, Direction d) {
  const Shape& s = x.shape();
  std::vector<float> out(x.size(), 0.0f);
  // Content moves one pixel in direction d; the source pixel of output
  // (r, c) is (r + dr, c + dc).
  long dr = 0, dc = 0;
  switch (d) {
    case Direction::kUp: dr = 1; break;
    case Direction::kDown: dr = -1; break;
    case Direction::kLeft: dc = 1; break;
    case Direction::kRight: dc = -1; break;
  }
  const long h = static_cast<long>(s.height), w = static_cast<long>(s.width);
  for (long r = 0; r < h; ++r) {
    const long sr = r + dr;
    if (sr < 0 || sr >= h) continue;
    for (long c = 0; c < w; ++c) {
      const long sc = c + dc;
      if (sc < 0 || sc >= w) continue;
      for (std::size_t ch = 0; ch < s.channels; ++ch) {
        out[(static_cast<std::size_t>(r) * s.width + static_cast<std::size_t>(c)) * s.channels + ch] =
            x.at(static_cast<std::size_t>(sr), static_cast<std::size_t>(sc), ch);
      }
    }
  }
  return Sample(std::move(out), s);
}

NeighborSet neighboring_points(const Sample& x) {
  if (x.shape().height < 2 || x.shape().width < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "neighboring points need an image of at least 2x2 pixels");
  }
  NeighborSet set;
  for (std::size_t i = 0; i < NeighborSet::kDirections.size(); ++i) {
    set.neighbors[i] = shift_image(x, NeighborSet::kDirections[i]);
  }
  return set;
}

const char* to_string(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::kSingleDistance: return "single-distance";
    case ScoreKind::kRelativeDistance: return "relative-distance";
    case ScoreKind::kBaselineGap: return "baseline-gap";
  }
  return "unknown";
}

ScoreKind score_kind_from_string(const std::string& text) {
  if (text == "single-distance" || text == "single") return ScoreKind::kSingleDistance;
  if (text == "relative-distance" || text == "relative") return ScoreKind::kRelativeDistance;
  if (text == "baseline-gap" || text == "baseline") return ScoreKind::kBaselineGap;
  throw Error(ErrorCode::kInvalidArgument, "unknown score kind '" + text + "'");
}

const char* to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::kUntargeted: return "untargeted";
    case AttackKind::kAllTargeted: return "all-targeted";
    case AttackKind::kMultiTargeted: return "multi-targeted";
  }
  return "unknown";
}

AttackKind attack_kind_from_string(const std::string& text) {
  if (text == "untargeted") return AttackKind::kUntargeted;
  if (text == "all-targeted") return AttackKind::kAllTargeted;
  if (text == "multi-targeted") return AttackKind::kMultiTargeted;
  throw Error(ErrorCode::kInvalidArgument, "unknown attack kind '" + text + "'");
}

BoundaryResult run_boundary_attack(const Sample& x, Label y,
                                   const HardLabelOracle& oracle,
                                   const AttackSetup& setup) {
  if (setup.kind == AttackKind::kUntargeted) {
    return untargeted_hsja(x, y, oracle, setup.params);
  }
  if (setup.aux == nullptr) {
    throw Error(ErrorCode::kInsufficientAux,
                std::string(to_string(setup.kind)) + " attack needs auxiliary data");
  }
  if (setup.kind == AttackKind::kMultiTargeted) {
    return multi_targeted_hsja(x, y, *setup.aux, oracle, setup.multi, setup.params);
  }
  std::uint64_t selection = 0;
  const auto inits = select_initial_points(y, *setup.aux, oracle, setup.multi.seed, &selection);
  auto result = all_targeted_hsja(x, y, inits, oracle, setup.params);
  result.queries += selection;
  return result;
}

ScoreRecord boundary_distance_score(std::size_t sample_id, bool is_member,
                                    const Sample& x, Label y,
                                    const HardLabelOracle& oracle,
                                    const AttackSetup& setup) {
  const auto result = run_boundary_attack(x, y, oracle, setup);
  return {sample_id, is_member, result.distance, ScoreKind::kSingleDistance,
          result.queries};
}

double relative_score(double sample_distance, std::span<const double> neighbor_distances) {
  if (neighbor_distances.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no neighbor distances");
  }
  const double mean = std::accumulate(neighbor_distances.begin(), neighbor_distances.end(), 0.0) /
                      static_cast<double>(neighbor_distances.size());
  return sample_distance - mean;
}

RelativeScoreDetail relative_boundary_score(std::size_t sample_id, bool is_member,
                                            const Sample& x, Label y,
                                            const HardLabelOracle& oracle,
                                            const AttackSetup& setup) {
  const auto neighbors = neighboring_points(x);
  RelativeScoreDetail detail;
  const auto own = run_boundary_attack(x, y, oracle, setup);
  detail.sample_distance = own.distance;
  detail.attack_runs = 1;
  std::uint64_t queries = own.queries;
  for (std::size_t i = 0; i < neighbors.neighbors.size(); ++i) {
    const Sample& n = neighbors.neighbors[i];
    const Label label = oracle.query(n, "neighbor");
    ++queries;
    detail.neighbor_labels[i] = label;
    if (label != y) {
      detail.neighbor_distances[i] = 0.0;
      continue;
    }
    const auto r = run_boundary_attack(n, label, oracle, setup);
    detail.neighbor_distances[i] = r.distance;
    queries += r.queries;
    ++detail.attack_runs;
  }
  detail.record = {sample_id, is_member,
                   relative_score(detail.sample_distance, detail.neighbor_distances),
                   ScoreKind::kRelativeDistance, queries};
  return detail;
}

ScoreRecord baseline_gap_attack(std::size_t sample_id, bool is_member, const Sample& x,
                                Label y_true, const HardLabelOracle& oracle) {
  const Label label = oracle.query(x, "baseline");
  return {sample_id, is_member, label == y_true ? 1.0 : 0.0, ScoreKind::kBaselineGap, 1};
}

}  // namespace mia
