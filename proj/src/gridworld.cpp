#include "risnoma/gridworld.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace risnoma::gridworld {

bool GridMap::cell_obstructed(int col, int row) const {
  Vec3 c = cell_center(col, row);
  for (const Box& b : obstacles) {
    if (b.contains_xy(c.x, c.y)) return true;
  }
  return false;
}

std::pair<int, int> GridMap::snap_to_cell(double x, double y) const {
  int col = static_cast<int>(std::floor(x / delta));
  int row = static_cast<int>(std::floor(y / delta));
  col = std::max(0, std::min(cols - 1, col));
  row = std::max(0, std::min(rows - 1, row));
  if (cell_valid(col, row)) return {col, row};
  for (int radius = 1; radius < cols + rows; ++radius) {
    for (int dc = -radius; dc <= radius; ++dc) {
      for (int dr = -radius; dr <= radius; ++dr) {
        if (std::max(std::abs(dc), std::abs(dr)) != radius) continue;
        if (cell_valid(col + dc, row + dr)) return {col + dc, row + dr};
      }
    }
  }
  throw std::runtime_error("snap_to_cell: map has no valid cell");
}

GridMap build_map(const MapConfig& config) {
  if (config.delta <= 0.0) throw std::invalid_argument("map.delta must be > 0");
  if (config.x_max <= 0.0) throw std::invalid_argument("map.x_max must be > 0");
  if (config.y_max <= 0.0) throw std::invalid_argument("map.y_max must be > 0");
  if (config.robot_height <= 0.0)
    throw std::invalid_argument("map.robot_height must be > 0");

  GridMap map;
  map.x_max = config.x_max;
  map.y_max = config.y_max;
  map.delta = config.delta;
  map.robot_height = config.robot_height;
  map.obstacles = config.obstacles;
  map.ap_pos = config.ap_pos;
  map.ris_pos = config.ris_pos;

  double cols_f = config.x_max / config.delta;
  double rows_f = config.y_max / config.delta;
  map.cols = static_cast<int>(std::lround(cols_f));
  map.rows = static_cast<int>(std::lround(rows_f));
  if (std::abs(cols_f - map.cols) > 1e-9 || std::abs(rows_f - map.rows) > 1e-9)
    throw std::invalid_argument("map.delta must evenly divide x_max and y_max");

  for (std::size_t i = 0; i < map.obstacles.size(); ++i) {
    const Box& b = map.obstacles[i];
    std::string field = "map.obstacles[" + std::to_string(i) + "]";
    if (b.x0 >= b.x1 || b.y0 >= b.y1 || b.height <= 0.0)
      throw std::invalid_argument(field + " has an empty extent");
    if (b.x0 < 0.0 || b.x1 > map.x_max || b.y0 < 0.0 || b.y1 > map.y_max)
      throw std::invalid_argument(field + " lies outside the map bounds");
    if (b.height <= map.robot_height)
      throw std::invalid_argument(field + " is not taller than the robot");
  }
  for (const Box& b : map.obstacles) {
    if (b.contains(map.ap_pos))
      throw std::invalid_argument("map.ap_pos lies inside an obstacle");
    if (b.contains(map.ris_pos))
      throw std::invalid_argument("map.ris_pos lies inside an obstacle");
  }
  return map;
}

MapConfig default_map_config() {
  MapConfig cfg;
  cfg.x_max = 8.0;
  cfg.y_max = 6.0;
  cfg.delta = 0.1;
  cfg.robot_height = 0.5;
  cfg.obstacles = {
      {1.0, 2.0, 1.0, 2.0, 3.0},      // pillars
      {6.0, 7.0, 1.0, 2.0, 3.0},
      {1.0, 2.0, 4.0, 5.0, 3.0},
      {6.0, 7.0, 4.0, 5.0, 3.0},
      {2.0, 3.0, 2.5, 3.5, 1.0},      // parterres
      {5.0, 6.0, 2.5, 3.5, 1.0},
      {3.25, 4.75, 2.25, 3.75, 1.0},  // fountain
  };
  cfg.ap_pos = {0.1, 3.0, 2.0};
  cfg.ris_pos = {4.0, 3.0, 3.0};
  return cfg;
}

bool segment_blocked(const Vec3& a, const Vec3& b, const GridMap& map) {
  for (const Box& box : map.obstacles) {
    if (geom::segment_intersects_box(a, b, box)) return true;
  }
  return false;
}

const char* to_string(Move m) {
  switch (m) {
    case Move::right: return "right";
    case Move::left: return "left";
    case Move::still: return "still";
    case Move::up: return "up";
    case Move::down: return "down";
  }
  return "?";
}

StepResult apply_action(const RobotPose& pose, Move move, const GridMap& map,
                        const std::vector<RobotPose>& others) {
  int col = pose.col, row = pose.row;
  switch (move) {
    case Move::right: ++col; break;
    case Move::left: --col; break;
    case Move::up: ++row; break;
    case Move::down: --row; break;
    case Move::still: break;
  }

  StepResult result;
  result.pose = pose;
  if (!map.cell_valid(col, row)) {
    result.valid = false;
    return result;
  }
  for (const RobotPose& other : others) {
    if (other.robot_id == pose.robot_id) continue;
    if (other.col == col && other.row == row) {
      // Cells are held exclusively; the move is refused and flagged.
      result.valid = false;
      result.collision = true;
      return result;
    }
  }
  result.pose.col = col;
  result.pose.row = row;

  Vec3 p = result.pose.position(map);
  for (const RobotPose& other : others) {
    if (other.robot_id == pose.robot_id) continue;
    if (geom::distance_xy(p, other.position(map)) <= map.delta + 1e-9) {
      result.collision = true;
      break;
    }
  }
  return result;
}

int min_horizon(const std::vector<std::pair<int, int>>& initial_cells,
                const std::vector<std::pair<int, int>>& final_cells) {
  int horizon = 0;
  for (std::size_t i = 0; i < initial_cells.size(); ++i) {
    int manhattan = std::abs(initial_cells[i].first - final_cells[i].first) +
                    std::abs(initial_cells[i].second - final_cells[i].second);
    horizon = std::max(horizon, manhattan - 1);
  }
  return horizon;
}

}  // namespace risnoma::gridworld
