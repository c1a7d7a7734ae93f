#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "mia/boundary.hpp"

namespace mia {

enum class Direction { kUp, kDown, kLeft, kRight };

// One-pixel translations of an image. The vacated row or column is
// zero-filled; all channels move together.
struct NeighborSet {
  static constexpr std::array<Direction, 4> kDirections = {
      Direction::kUp, Direction::kDown, Direction::kLeft, Direction::kRight};
  std::array<Sample, 4> neighbors;
};

const char* to_string(Direction d);

Sample shift_image(const Sample& x, Direction d);
// Throws kInvalidArgument when height or width < 2.
NeighborSet neighboring_points(const Sample& x);

enum class ScoreKind { kSingleDistance, kRelativeDistance, kBaselineGap };

const char* to_string(ScoreKind kind);
ScoreKind score_kind_from_string(const std::string& text);

struct ScoreRecord {
  std::size_t sample_id = 0;
  bool is_member = false;
  double score = 0.0;  // higher means more member-like
  ScoreKind kind = ScoreKind::kSingleDistance;
  std::uint64_t queries = 0;
};

enum class AttackKind { kUntargeted, kAllTargeted, kMultiTargeted };

const char* to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& text);

// Everything a boundary-distance run needs besides the sample itself.
struct AttackSetup {
  AttackKind kind = AttackKind::kMultiTargeted;
  HsjaParams params;
  MultiTargetConfig multi;
  const Dataset* aux = nullptr;  // required for targeted kinds
};

// Dispatches to the selected driver. Targeted kinds select their initial
// points from setup.aux with setup.multi.seed.
BoundaryResult run_boundary_attack(const Sample& x, Label y,
                                   const HardLabelOracle& oracle,
                                   const AttackSetup& setup);

ScoreRecord boundary_distance_score(std::size_t sample_id, bool is_member,
                                    const Sample& x, Label y,
                                    const HardLabelOracle& oracle,
                                    const AttackSetup& setup);

// d(x) - mean(neighbor distances).
double relative_score(double sample_distance,
                      std::span<const double> neighbor_distances);

struct RelativeScoreDetail {
  ScoreRecord record;
  double sample_distance = 0.0;
  std::array<double, 4> neighbor_distances{};
  std::array<Label, 4> neighbor_labels{};
  std::size_t attack_runs = 0;
};

// Attacks x and each neighbor with the same driver. A neighbor whose oracle
// label differs from y contributes distance 0 and is not attacked.
RelativeScoreDetail relative_boundary_score(std::size_t sample_id,
                                            bool is_member, const Sample& x,
                                            Label y,
                                            const HardLabelOracle& oracle,
                                            const AttackSetup& setup);

// 1 when the oracle agrees with the ground truth, 0 otherwise.
ScoreRecord baseline_gap_attack(std::size_t sample_id, bool is_member,
                                const Sample& x, Label y_true,
                                const HardLabelOracle& oracle);

inline bool decide_membership(const ScoreRecord& record, double threshold) {
  return record.score >= threshold;
}

}  // namespace mia
