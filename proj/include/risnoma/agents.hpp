#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "risnoma/channel.hpp"
#include "risnoma/gridworld.hpp"
#include "risnoma/neural.hpp"
#include "risnoma/rng.hpp"

namespace risnoma::agents {

using neural::Vector;

enum class Variant { double_dqn, dueling, d3qn };
const char* to_string(Variant v);
Variant variant_from_string(const std::string& name);

/// Factored action space: one phase branch (the sub-surface updated this
/// epoch, round-robin), one move branch per robot, one power branch per
/// robot. Per-step choice count is 2^B0 + 5X + aX.
struct BranchLayout {
  int phase_choices = 8;  // 2^B0
  int robots = 2;         // X
  int power_levels = 4;   // a

  int branches() const { return 1 + 2 * robots; }
  int size(int branch) const {
    if (branch == 0) return phase_choices;
    return branch <= robots ? gridworld::kMoveCount : power_levels;
  }
  int offset(int branch) const {
    int off = 0;
    for (int b = 0; b < branch; ++b) off += size(b);
    return off;
  }
  int total() const { return offset(branches()); }
  int move_branch(int robot) const { return 1 + robot; }
  int power_branch(int robot) const { return 1 + robots + robot; }
};

/// State featurization: phases scaled by 2*pi, positions by the map bounds,
/// powers by the budget. Length M + 3X.
struct StateFeatures {
  std::vector<double> phases;  // M angles
  std::vector<std::pair<double, double>> positions;  // X cell centers, meters
  std::vector<double> powers;  // X watts

  Vector featurize(double x_max, double y_max, double budget) const;
};

struct JointAction {
  int sub_surface = 0;  // m updated this epoch
  int phase_index = 0;  // n0
  std::vector<int> moves;         // per robot, gridworld::Move values
  std::vector<int> power_levels;  // per robot, menu index

  /// Flat branch choices in layout order (phase, moves..., powers...).
  std::vector<int> branch_choices(const BranchLayout& layout) const;
};

/// Static per-branch masks for one decision epoch. The sequential selection
/// rules (no all-still joint step, power budget) are applied on top during
/// selection.
struct FactoredActions {
  BranchLayout layout;
  std::vector<std::vector<bool>> masks;  // per branch, true = selectable

  std::size_t choice_count() const;
  bool any_valid(int branch) const;
};

struct ActionContext {
  const gridworld::GridMap* map = nullptr;
  std::vector<gridworld::RobotPose> poses;
  std::vector<std::pair<int, int>> goals;      // goal cells per robot
  const std::vector<int>* goal_distance = nullptr;  // BFS fields, per robot
  int remaining_after = 0;  // steps left after this one executes
};

/// Move feasibility for a single robot: the target cell must be valid and
/// the goal must stay reachable within the remaining budget.
std::vector<bool> move_mask(const ActionContext& ctx, std::size_t robot,
                            const std::vector<int>& distance_field);

/// Builds the static masks. Throws when a robot has no feasible move.
FactoredActions enumerate_actions(const ActionContext& ctx,
                                  const std::vector<std::vector<int>>& fields,
                                  const BranchLayout& layout);

/// BFS distance in cells from every valid cell to `goal` (4-neighborhood).
/// Unreachable or obstructed cells hold a large sentinel.
std::vector<int> distance_field(const gridworld::GridMap& map,
                                std::pair<int, int> goal);
constexpr int kUnreachable = 1 << 28;

/// Epoch reward: -10 on any proximity violation, otherwise the sum-rate
/// difference minus a soft penalty per robot below the QoS threshold.
double reward(double prev_sum_rate, double next_sum_rate,
              const std::vector<double>& next_rates, double qos_threshold,
              double qos_penalty, bool collision);

/// Greedy with probability 1-eps (lowest index on ties), otherwise uniform
/// over the valid entries.
std::size_t epsilon_greedy(const Vector& qvals, double eps, rng::Stream& stream,
                           const std::vector<bool>* valid = nullptr);

/// Mean-centered dueling assembly Q = V + A - mean(A).
Vector dueling_q(double value, const Vector& advantage);

/// Double-DQN rule: terminal -> r; else r + gamma * Q_target[argmax Q_current].
double double_dqn_target(double reward_value, bool terminal, double gamma,
                         const Vector& q_next_current, const Vector& q_next_target,
                         const std::vector<bool>* valid = nullptr);

/// Double selection with dueling target evaluation.
double d3qn_target(double reward_value, bool terminal, double gamma,
                   const Vector& q_next_current, double value_target,
                   const Vector& advantage_target,
                   const std::vector<bool>* valid = nullptr);

// ---------------------------------------------------------------------------
// Replay

struct Transition {
  Vector features;
  std::vector<int> action;  // branch choices
  double reward = 0.0;
  Vector next_features;
  bool terminal = false;
  std::vector<std::vector<bool>> next_masks;  // per branch, for bootstrapping
  double priority = 1.0;
};

/// Ring buffer with proportional prioritized sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void store(Transition t);  // enters at the current max priority
  std::size_t size() const { return storage_.size(); }
  std::size_t capacity() const { return capacity_; }
  Transition& at(std::size_t i) { return storage_[i]; }
  const Transition& at(std::size_t i) const { return storage_[i]; }

  struct Batch {
    std::vector<std::size_t> indices;
    std::vector<double> weights;  // importance weights, max-normalized
  };
  /// Sampling probability proportional to priority^omega; importance weights
  /// (size * prob)^-beta normalized by the largest weight in the buffer.
  Batch sample(std::size_t batch, double omega, double beta,
               rng::Stream& stream) const;

  void update_priority(std::size_t index, double priority);
  double max_priority() const { return max_priority_; }

 private:
  std::size_t capacity_;
  std::vector<Transition> storage_;
  std::size_t next_ = 0;
  double max_priority_ = 1.0;
};

// ---------------------------------------------------------------------------
// Networks

/// Trunk + advantage head, with an optional parallel value head for the
/// dueling variants.
struct QNetwork {
  neural::DenseNet trunk;        // input -> last hidden, relu
  neural::DenseLayer advantage;  // hidden -> layout.total(), identity
  neural::DenseLayer value;      // hidden -> 1, identity (dueling only)
  bool dueling = false;

  Vector q_values(const Vector& x, const BranchLayout& layout) const;
  std::size_t param_count() const;
};

QNetwork make_q_network(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                        const BranchLayout& layout, bool dueling,
                        std::uint64_t seed);

struct QNetworkPair {
  Variant variant = Variant::d3qn;
  BranchLayout layout;
  QNetwork current;
  QNetwork target;
  int sync_period = 10;  // T

  void save(std::ostream& out) const;
  static QNetworkPair load(std::istream& in);
};

QNetworkPair make_pair(Variant variant, std::size_t input_dim,
                       const std::vector<std::size_t>& hidden,
                       const BranchLayout& layout, int sync_period,
                       std::uint64_t seed);

/// Exact copy of the current parameters into the target.
void sync_target(QNetworkPair& pair);

/// Sync schedule from the algorithm: episodes ≡ 1 (mod T), 1-based.
bool sync_due(long episode_1based, int period);

/// Per-branch TD target for a stored transition under the pair's variant.
std::vector<double> branch_targets(const QNetworkPair& pair, const Transition& t,
                                   double gamma);

struct LearnStats {
  double mean_loss = 0.0;
  std::vector<double> new_priorities;  // |TD| + eps_p per sampled transition
};

/// One semi-gradient step on the current network over the sampled batch:
/// per-branch squared TD errors, importance-weighted, L2-decayed. Target
/// parameters are untouched. Refreshed priorities are written back into the
/// buffer and returned.
LearnStats learn_step(QNetworkPair& pair, ReplayBuffer& buffer,
                      const ReplayBuffer::Batch& batch, double lr, double gamma,
                      double l2, double priority_eps);

}  // namespace risnoma::agents
