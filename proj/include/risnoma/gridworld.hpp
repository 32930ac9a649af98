#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "risnoma/geometry.hpp"

namespace risnoma::gridworld {

using geom::Box;
using geom::Vec3;

/// Discretized 2D motion space with 3D obstacle boxes. Immutable after
/// construction; safe to share read-only across concurrent runs.
struct GridMap {
  double x_max = 0.0;      // meters
  double y_max = 0.0;      // meters
  double delta = 0.0;      // cell resolution, meters
  double robot_height = 0.5;
  std::vector<Box> obstacles;
  Vec3 ap_pos;
  Vec3 ris_pos;

  int cols = 0;  // x_max / delta
  int rows = 0;  // y_max / delta

  long cell_count() const { return static_cast<long>(cols) * rows; }

  /// Column-major cell id counted from the origin corner.
  long cell_id(int col, int row) const { return static_cast<long>(col) * rows + row; }

  Vec3 cell_center(int col, int row) const {
    return {(col + 0.5) * delta, (row + 0.5) * delta, robot_height};
  }

  bool in_bounds(int col, int row) const {
    return col >= 0 && col < cols && row >= 0 && row < rows;
  }

  /// A cell is an obstacle cell when its center lies inside a footprint.
  bool cell_obstructed(int col, int row) const;

  bool cell_valid(int col, int row) const {
    return in_bounds(col, row) && !cell_obstructed(col, row);
  }

  /// Nearest valid cell to a continuous point (expanding ring search).
  std::pair<int, int> snap_to_cell(double x, double y) const;
};

struct MapConfig {
  double x_max = 0.0;
  double y_max = 0.0;
  double delta = 0.0;
  double robot_height = 0.5;
  std::vector<Box> obstacles;
  Vec3 ap_pos;
  Vec3 ris_pos;
};

/// Validates and freezes a map description. Throws std::invalid_argument
/// naming the offending field.
GridMap build_map(const MapConfig& config);

/// The indoor scene used by the default experiment profile: 8m x 6m, four
/// 1x1x3 m pillars, two 1x1x1 m parterres, one 1.5x1.5x1 m fountain, RIS at
/// ceiling center (3 m), AP on the left wall at 2 m.
MapConfig default_map_config();

/// True iff the open segment a->b crosses any obstacle box.
bool segment_blocked(const Vec3& a, const Vec3& b, const GridMap& map);

enum class Move : std::uint8_t { right, left, still, up, down };
constexpr int kMoveCount = 5;
const char* to_string(Move m);

struct RobotPose {
  int col = 0;
  int row = 0;
  int robot_id = 1;  // 1-based

  Vec3 position(const GridMap& map) const { return map.cell_center(col, row); }
};

struct EndpointPair {
  double init_x = 0.0, init_y = 0.0;   // epsilon
  double final_x = 0.0, final_y = 0.0; // xi
};

struct StepResult {
  RobotPose pose;
  bool collision = false;  // within delta of another robot after the step
  bool valid = true;       // false: move rejected (obstacle/off-map/occupied)
};

/// Applies one move. Moves into obstacles or off-map are rejected
/// (valid=false, pose unchanged). Moves onto an occupied cell are rejected
/// with collision=true: cells are held exclusively. Otherwise the pose
/// advances and collision reports whether any other robot is within delta.
StepResult apply_action(const RobotPose& pose, Move move, const GridMap& map,
                        const std::vector<RobotPose>& others);

/// Lower bound on the shared episode horizon:
/// max_i(|x-span| + |y-span| - 1) in cells, clamped at zero.
int min_horizon(const std::vector<std::pair<int, int>>& initial_cells,
                const std::vector<std::pair<int, int>>& final_cells);

}  // namespace risnoma::gridworld
