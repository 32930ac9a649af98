#include "risnoma/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace risnoma::experiment {

using agents::BranchLayout;
using agents::JointAction;
using agents::QNetworkPair;
using agents::Transition;
using channel::PhaseConfig;
using config::RunConfig;
using gridworld::GridMap;
using gridworld::Move;
using gridworld::RobotPose;

const char* to_string(BaselineVariant v) {
  switch (v) {
    case BaselineVariant::ris_noma: return "ris-noma";
    case BaselineVariant::ris_oma: return "ris-oma";
    case BaselineVariant::no_ris_noma: return "no-ris-noma";
    case BaselineVariant::no_ris_oma: return "no-ris-oma";
    case BaselineVariant::random_phase: return "random-phase";
    case BaselineVariant::fixed_phase: return "fixed-phase";
    case BaselineVariant::one_bit: return "1bit";
    case BaselineVariant::two_bit: return "2bit";
    case BaselineVariant::random_order: return "random-order";
    case BaselineVariant::fixed_order: return "fixed-order";
  }
  return "ris-noma";
}

BaselineVariant baseline_from_string(const std::string& name) {
  for (BaselineVariant v :
       {BaselineVariant::ris_noma, BaselineVariant::ris_oma,
        BaselineVariant::no_ris_noma, BaselineVariant::no_ris_oma,
        BaselineVariant::random_phase, BaselineVariant::fixed_phase,
        BaselineVariant::one_bit, BaselineVariant::two_bit,
        BaselineVariant::random_order, BaselineVariant::fixed_order}) {
    if (name == to_string(v)) return v;
  }
  throw std::invalid_argument("unknown baseline variant '" + name + "'");
}

namespace {

struct Switches {
  bool use_ris = true;
  bool oma = false;
  enum class Phase { learned, random, fixed } phase = Phase::learned;
  enum class Order { optimal, random, fixed } order = Order::optimal;
  int bits_override = 0;
};

Switches switches_for(BaselineVariant v) {
  Switches s;
  switch (v) {
    case BaselineVariant::ris_noma: break;
    case BaselineVariant::ris_oma: s.oma = true; break;
    case BaselineVariant::no_ris_noma: s.use_ris = false; break;
    case BaselineVariant::no_ris_oma: s.use_ris = false; s.oma = true; break;
    case BaselineVariant::random_phase: s.phase = Switches::Phase::random; break;
    case BaselineVariant::fixed_phase: s.phase = Switches::Phase::fixed; break;
    case BaselineVariant::one_bit: s.bits_override = 1; break;
    case BaselineVariant::two_bit: s.bits_override = 2; break;
    case BaselineVariant::random_order: s.order = Switches::Order::random; break;
    case BaselineVariant::fixed_order: s.order = Switches::Order::fixed; break;
  }
  return s;
}

struct EnvState {
  PhaseConfig phases;
  std::vector<RobotPose> poses;
  std::vector<int> power_levels;
};

struct RateEval {
  double sum_rate = 0.0;
  std::vector<double> rates;
  noma::DecodingOrder order;
};

/// One candidate's environment: endpoints, reachability fields, horizon, and
/// the seeded channel source.
struct Env {
  const RunConfig* cfg = nullptr;
  const Switches* sw = nullptr;
  const GridMap* map = nullptr;
  channel::ChannelModel channels;
  BranchLayout layout;
  int bits = 1;
  std::vector<std::pair<int, int>> starts, goals;
  std::vector<std::vector<int>> fields;
  int horizon = 0;
  PhaseConfig fixed_phases;  // frozen configuration for the fixed policy
  noma::DecodingOrder frozen_order;
  std::uint64_t channel_seed = 0;
  rng::Stream order_stream;
  rng::Stream phase_stream;

  Env(const RunConfig& config, const Switches& switches, const GridMap& grid,
      const std::vector<gridworld::EndpointPair>& pairs, std::uint64_t chan_seed,
      std::uint64_t policy_seed)
      : cfg(&config),
        sw(&switches),
        map(&grid),
        channels(grid, adjusted_params(config, switches), chan_seed),
        channel_seed(chan_seed),
        order_stream(rng::hash_seed(policy_seed, {0x0defULL})),
        phase_stream(rng::hash_seed(policy_seed, {0xfadeULL})) {
    bits = switches.bits_override ? switches.bits_override
                                  : config.channel.phase_bits;
    layout.phase_choices = 1 << bits;
    layout.robots = config.experiment.robots;
    layout.power_levels = static_cast<int>(config.noma.power_levels.size());

    for (const auto& p : pairs) {
      starts.push_back(grid.snap_to_cell(p.init_x, p.init_y));
      goals.push_back(grid.snap_to_cell(p.final_x, p.final_y));
    }
    int span = 0;
    for (std::size_t i = 0; i < goals.size(); ++i) {
      fields.push_back(agents::distance_field(grid, goals[i]));
      int d = fields[i][grid.cell_id(starts[i].first, starts[i].second)];
      if (d >= agents::kUnreachable)
        throw std::runtime_error("endpoint pair " + std::to_string(i + 1) +
                                 " is disconnected on this map");
      span = std::max(span, d);
    }
    horizon = span + config.experiment.horizon_slack;

    fixed_phases = zero_phases();
    for (double& theta : fixed_phases.thetas)
      theta = channel::quantize_phase(
          static_cast<int>(phase_stream.below(layout.phase_choices)), bits);
  }

  static channel::ChannelParams adjusted_params(const RunConfig& config,
                                                const Switches& switches) {
    channel::ChannelParams p = config.channel;
    if (switches.bits_override) p.phase_bits = switches.bits_override;
    return p;
  }

  int sub_surfaces() const { return cfg->channel.sub_surfaces(); }

  PhaseConfig zero_phases() const {
    PhaseConfig phase;
    phase.thetas.assign(sub_surfaces(), 0.0);
    phase.bits = bits;
    phase.k_total = cfg->channel.k_total;
    phase.k_per_sub = cfg->channel.k_per_sub;
    return phase;
  }

  EnvState reset() const {
    EnvState state;
    state.phases =
        sw->phase == Switches::Phase::fixed ? fixed_phases : zero_phases();
    for (std::size_t i = 0; i < starts.size(); ++i) {
      state.poses.push_back(
          {starts[i].first, starts[i].second, static_cast<int>(i) + 1});
    }
    state.power_levels.assign(starts.size(), 0);
    return state;
  }

  noma::PowerAllocation allocation(const EnvState& state) const {
    noma::PowerAllocation alloc;
    alloc.budget = cfg->noma.power_budget_w;
    for (int level : state.power_levels)
      alloc.p.push_back(cfg->noma.power_levels[level] * alloc.budget);
    return alloc;
  }

  RateEval evaluate(const EnvState& state, std::uint64_t episode,
                    std::uint64_t epoch, const noma::DecodingOrder* forced) const {
    std::vector<geom::Vec3> positions;
    std::vector<long> cells;
    for (const RobotPose& pose : state.poses) {
      positions.push_back(pose.position(*map));
      cells.push_back(map->cell_id(pose.col, pose.row));
    }
    channel::ChannelSet set = channels.at(positions, cells, episode, epoch);
    std::vector<double> gains(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
      gains[i] = sw->use_ris
                     ? std::norm(channel::effective_channel(set.h, state.phases,
                                                            set.g[i], set.l[i]))
                     : std::norm(set.l[i]);
    }
    noma::PowerAllocation alloc = allocation(state);
    double noise = cfg->channel.noise_power;
    RateEval eval;
    if (sw->oma) {
      noma::RateReport report = noma::oma_rate(gains, alloc, noise, cfg->noma.qos_rate);
      eval.rates = report.per_robot_rate;
      eval.sum_rate = report.sum_rate;
      eval.order = noma::DecodingOrder::identity(gains.size());
      return eval;
    }
    noma::DecodingOrder order;
    if (forced) {
      order = *forced;
    } else {
      order = noma::best_order(gains, alloc, noise, cfg->noma.qos_rate,
                               cfg->noma.order_cap)
                  .order;
    }
    noma::RateReport report =
        noma::evaluate(order, gains, alloc, noise, cfg->noma.qos_rate);
    eval.rates = report.per_robot_rate;
    eval.sum_rate = report.sum_rate;
    eval.order = order;
    return eval;
  }

  /// Order used for both evaluations of one epoch under the active policy.
  noma::DecodingOrder epoch_order(bool* use_forced) {
    *use_forced = true;
    if (sw->order == Switches::Order::fixed) return frozen_order;
    if (sw->order == Switches::Order::random) {
      std::vector<std::size_t> seq(starts.size());
      for (std::size_t i = 0; i < seq.size(); ++i) seq[i] = i;
      for (std::size_t i = seq.size(); i > 1; --i)
        std::swap(seq[i - 1], seq[order_stream.below(i)]);
      return noma::DecodingOrder{seq};
    }
    *use_forced = false;
    return noma::DecodingOrder{};
  }

  bool all_at_goals(const EnvState& state) const {
    for (std::size_t i = 0; i < state.poses.size(); ++i) {
      if (state.poses[i].col != goals[i].first ||
          state.poses[i].row != goals[i].second)
        return false;
    }
    return true;
  }

  /// Network input. Phases enter as (cos, sin) pairs: the achievable rate is
  /// a low-order trigonometric polynomial in the phase angles, so this
  /// encoding makes the value landscape nearly linear where the raw angle
  /// wraps. A one-hot cursor marks the sub-surface whose phase the action
  /// sets this epoch.
  neural::Vector build_features(const EnvState& state, int step_idx) const {
    neural::Vector v;
    int m = sub_surfaces();
    v.reserve(2 * m + 3 * state.poses.size() + m);
    for (double theta : state.phases.thetas) {
      v.push_back(std::cos(theta));
      v.push_back(std::sin(theta));
    }
    for (const RobotPose& pose : state.poses) {
      geom::Vec3 p = pose.position(*map);
      v.push_back(p.x / map->x_max);
      v.push_back(p.y / map->y_max);
    }
    for (int level : state.power_levels)
      v.push_back(cfg->noma.power_levels[level]);
    for (int k = 0; k < m; ++k)
      v.push_back(k == step_idx % m ? 1.0 : 0.0);
    return v;
  }

  std::size_t input_dim() const {
    return 3 * static_cast<std::size_t>(sub_surfaces()) + 3 * starts.size();
  }
};

struct StepOut {
  EnvState next;
  JointAction action;
  RateEval next_eval;
  double reward = 0.0;
  bool terminal = false;
  bool collision = false;
  std::vector<std::vector<bool>> next_masks;
  std::vector<bool> stilled;  // per robot: chose stillness
  std::vector<bool> moved;    // per robot: cell changed
  neural::Vector features;       // network input at the pre-step state
  neural::Vector next_features;  // network input after the step
};

StepOut do_step(Env& env, const EnvState& state, int step_idx, long episode_1b,
                int& horizon, const agents::QNetwork& net, double eps,
                rng::Stream& explore, const StepObserver& observer) {
  const RunConfig& cfg = *env.cfg;
  const BranchLayout& layout = env.layout;
  int robots = layout.robots;
  std::uint64_t epoch = static_cast<std::uint64_t>(episode_1b - 1) *
                            (4ULL * env.horizon) +
                        step_idx;

  bool use_forced = false;
  noma::DecodingOrder forced = env.epoch_order(&use_forced);
  const noma::DecodingOrder* forced_ptr = use_forced ? &forced : nullptr;

  RateEval prev_eval = env.evaluate(state, episode_1b, epoch, forced_ptr);

  neural::Vector features = env.build_features(state, step_idx);
  neural::Vector qvals = net.q_values(features, layout);

  auto slice = [&](int branch) {
    int off = layout.offset(branch);
    return neural::Vector(qvals.begin() + off,
                          qvals.begin() + off + layout.size(branch));
  };

  StepOut out;
  out.action.sub_surface = env.sub_surfaces() > 0
                               ? step_idx % env.sub_surfaces()
                               : 0;
  out.action.phase_index =
      static_cast<int>(agents::epsilon_greedy(slice(0), eps, explore));

  // Moves pick sequentially so occupancy and the no-all-still rule stay
  // enforceable; robot order is fixed.
  std::vector<RobotPose> work = state.poses;
  int stills = 0;
  out.stilled.assign(robots, false);
  out.moved.assign(robots, false);
  bool collision = false;
  for (int i = 0; i < robots; ++i) {
    int remaining_after = horizon - step_idx - 1;
    agents::ActionContext ctx;
    ctx.map = env.map;
    ctx.poses = work;
    ctx.goals = env.goals;
    ctx.remaining_after = remaining_after;
    std::vector<bool> mask = agents::move_mask(ctx, i, env.fields[i]);
    if (robots == 1 || (i == robots - 1 && stills == robots - 1))
      mask[static_cast<int>(Move::still)] = false;
    bool any = false;
    for (bool v : mask) any |= v;
    int mv;
    if (any) {
      mv = static_cast<int>(
          agents::epsilon_greedy(slice(layout.move_branch(i)), eps, explore, &mask));
    } else {
      // Congested corner: another robot holds the only budget-feasible cell.
      // Take the least-regressing safe move and stretch this episode's
      // horizon so the goal stays reachable.
      const int dc[5] = {1, -1, 0, 0, 0};
      const int dr[5] = {0, 0, 0, 1, -1};
      mv = static_cast<int>(Move::still);
      int best_dist = agents::kUnreachable;
      for (int m = 0; m < gridworld::kMoveCount; ++m) {
        if (m == static_cast<int>(Move::still)) continue;
        int c2 = work[i].col + dc[m], r2 = work[i].row + dr[m];
        if (!env.map->cell_valid(c2, r2)) continue;
        bool occupied = false;
        for (int j = 0; j < robots; ++j)
          occupied |= j != i && work[j].col == c2 && work[j].row == r2;
        if (occupied) continue;
        int d = env.fields[i][env.map->cell_id(c2, r2)];
        if (d < best_dist) {
          best_dist = d;
          mv = m;
        }
      }
      if (mv == static_cast<int>(Move::still))
        best_dist = env.fields[i][env.map->cell_id(work[i].col, work[i].row)];
      horizon += std::max(0, best_dist - remaining_after);
    }
    out.action.moves.push_back(mv);
    gridworld::StepResult result =
        gridworld::apply_action(work[i], static_cast<Move>(mv), *env.map, work);
    if (!result.valid)
      throw std::runtime_error("masked selection produced an invalid move");
    collision |= result.collision;
    out.moved[i] = result.pose.col != work[i].col || result.pose.row != work[i].row;
    work[i] = result.pose;
    if (static_cast<Move>(mv) == Move::still) {
      ++stills;
      out.stilled[i] = true;
    }
  }

  // Power levels with sequential budget masking.
  const std::vector<double>& fractions = cfg.noma.power_levels;
  double min_frac = *std::min_element(fractions.begin(), fractions.end());
  double running = 0.0;
  for (int i = 0; i < robots; ++i) {
    std::vector<bool> mask(layout.power_levels, true);
    double reserve = (robots - i - 1) * min_frac;
    for (int l = 0; l < layout.power_levels; ++l)
      if (running + fractions[l] + reserve > 1.0 + 1e-12) mask[l] = false;
    int lv = static_cast<int>(
        agents::epsilon_greedy(slice(layout.power_branch(i)), eps, explore, &mask));
    out.action.power_levels.push_back(lv);
    running += fractions[lv];
  }

  out.next.poses = work;
  out.next.power_levels = out.action.power_levels;
  out.next.phases = state.phases;
  switch (env.sw->phase) {
    case Switches::Phase::learned:
      out.next.phases.thetas[out.action.sub_surface] =
          channel::quantize_phase(out.action.phase_index, env.bits);
      break;
    case Switches::Phase::random:
      for (double& theta : out.next.phases.thetas)
        theta = channel::quantize_phase(
            static_cast<int>(env.phase_stream.below(layout.phase_choices)),
            env.bits);
      break;
    case Switches::Phase::fixed:
      break;
  }

  out.next_eval = env.evaluate(out.next, episode_1b, epoch, forced_ptr);
  out.collision = collision;
  out.reward = agents::reward(prev_eval.sum_rate, out.next_eval.sum_rate,
                              out.next_eval.rates, cfg.noma.qos_rate,
                              cfg.agent.qos_penalty, collision);
  out.terminal = (step_idx >= horizon - 1) ||
                 (step_idx >= 4 * env.horizon - 1) || env.all_at_goals(out.next);
  out.features = std::move(features);
  out.next_features = env.build_features(out.next, step_idx + 1);

  if (!out.terminal) {
    out.next_masks.assign(layout.branches(), {});
    out.next_masks[0].assign(layout.phase_choices, true);
    agents::ActionContext next_ctx;
    next_ctx.map = env.map;
    next_ctx.poses = out.next.poses;
    next_ctx.goals = env.goals;
    next_ctx.remaining_after = horizon - step_idx - 2;
    for (int i = 0; i < robots; ++i) {
      std::vector<bool> mask = agents::move_mask(next_ctx, i, env.fields[i]);
      bool any = false;
      for (bool v : mask) any |= v;
      if (!any) mask.assign(gridworld::kMoveCount, true);  // bootstrap fallback
      out.next_masks[layout.move_branch(i)] = mask;
    }
    for (int i = 0; i < robots; ++i)
      out.next_masks[layout.power_branch(i)].assign(layout.power_levels, true);
  }

  if (observer) {
    StepRecord record;
    record.episode = episode_1b;
    record.step = step_idx;
    record.epoch = epoch;
    record.channel_seed = env.channel_seed;
    for (const RobotPose& pose : out.next.poses)
      record.cells.push_back({pose.col, pose.row});
    record.phases = out.next.phases;
    record.powers = env.allocation(out.next).p;
    record.order = out.next_eval.order;
    record.rates = out.next_eval.rates;
    record.sum_rate = out.next_eval.sum_rate;
    record.reward = out.reward;
    record.collision = collision;
    observer(record);
  }
  return out;
}

/// Assigns one predicted pair per robot, preferring starts and goals a couple
/// of cells apart (forecast outputs cluster near the range centers, and
/// co-located endpoints force needless corridor contention).
std::vector<gridworld::EndpointPair> assign_pairs(
    const forecast::ForecastReport& report, int candidate, int robots,
    const GridMap& map) {
  int n = static_cast<int>(report.candidates.size());
  if (n == 0) throw std::runtime_error("forecast produced no candidates");
  for (int min_sep : {2, 1, 0}) {
    std::vector<std::pair<std::pair<int, int>, std::pair<int, int>>> used;
    std::vector<gridworld::EndpointPair> pairs;
    bool ok = true;
    for (int i = 0; i < robots && ok; ++i) {
      int k = (candidate + i) % n;
      int tries = 0;
      while (true) {
        const gridworld::EndpointPair& p = report.candidates[k].snapped;
        auto start = map.snap_to_cell(p.init_x, p.init_y);
        auto goal = map.snap_to_cell(p.final_x, p.final_y);
        bool clash = false;
        for (const auto& [s, g] : used) {
          int ds = std::max(std::abs(s.first - start.first),
                            std::abs(s.second - start.second));
          int dg = std::max(std::abs(g.first - goal.first),
                            std::abs(g.second - goal.second));
          clash |= ds <= min_sep || dg <= min_sep;
        }
        if (!clash) {
          used.push_back({start, goal});
          pairs.push_back(p);
          break;
        }
        k = (k + 1) % n;
        if (++tries > n) {
          ok = false;
          break;
        }
      }
    }
    if (ok) return pairs;
  }
  throw std::runtime_error(
      "candidate endpoints collapse onto too few distinct cells");
}

}  // namespace

long convergence_episode(const std::vector<double>& returns, int window, double tol) {
  if (returns.empty() || window < 1) return -1;
  long n = static_cast<long>(returns.size());
  std::vector<double> prefix(n + 1, 0.0);
  for (long i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + returns[i];
  auto trailing_mean = [&](long t) {  // t is 1-based
    long lo = std::max<long>(0, t - window);
    return (prefix[t] - prefix[lo]) / static_cast<double>(t - lo);
  };
  double final_value = trailing_mean(n);
  long last_out = 0;
  for (long t = 1; t <= n; ++t) {
    if (std::abs(trailing_mean(t) - final_value) > tol) last_out = t;
  }
  long first_stable = last_out + 1;
  if (first_stable + window - 1 > n) return -1;
  return first_stable;
}

namespace {
RunResult run_training_impl(const RunConfig& cfg, BaselineVariant variant,
                            std::uint64_t seed, const StepObserver& observer);
}

RunResult run_training(const RunConfig& cfg, BaselineVariant variant,
                       std::uint64_t seed, const StepObserver& observer) {
  try {
    return run_training_impl(cfg, variant, seed, observer);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("run[variant=") + to_string(variant) +
                             " seed=" + std::to_string(seed) + "]: " + e.what());
  }
}

namespace {
RunResult run_training_impl(const RunConfig& cfg, BaselineVariant variant,
                            std::uint64_t seed, const StepObserver& observer) {
  Switches sw = switches_for(variant);
  GridMap map = gridworld::build_map(cfg.map);
  forecast::ForecastReport forecast_report =
      forecast::run_forecast(cfg.forecast, map, rng::hash_seed(seed, {0xf0ULL}));

  int robots = cfg.experiment.robots;
  int candidates = cfg.experiment.candidates;
  long budget = std::max<long>(1, cfg.experiment.episodes / candidates);

  RunResult result;
  double best_score = -1e300;
  std::vector<TrajectoryPoint> best_traj;
  agents::QNetworkPair best_pair;

  long global_episode = 0;
  for (int cand = 0; cand < candidates; ++cand) {
    std::vector<gridworld::EndpointPair> pairs =
        assign_pairs(forecast_report, cand, robots, map);
    std::uint64_t c = static_cast<std::uint64_t>(cand);
    Env env(cfg, sw, map, pairs, rng::hash_seed(seed, {0xc4a2ULL, c}),
            rng::hash_seed(seed, {0x9019ULL, c}));

    QNetworkPair pair =
        agents::make_pair(cfg.agent.variant, env.input_dim(), cfg.agent.hidden,
                          env.layout, cfg.agent.target_sync,
                          rng::hash_seed(seed, {0x4e76ULL, c}));
    agents::ReplayBuffer buffer(cfg.agent.replay_capacity);
    rng::Stream explore(rng::hash_seed(seed, {0xe791ULL, c}));
    rng::Stream replay_stream(rng::hash_seed(seed, {0x9e91ULL, c}));

    if (sw.order == Switches::Order::fixed) {
      EnvState initial = env.reset();
      env.frozen_order = env.evaluate(initial, 1, 0, nullptr).order;
    }

    std::vector<double> returns;
    double prev_return = 0.0;
    int stable_streak = 0;
    long steps_done = 0;

    for (long ep = 1; ep <= budget; ++ep) {
      if (agents::sync_due(ep, pair.sync_period)) agents::sync_target(pair);
      EnvState state = env.reset();
      EpisodeMetrics m;
      m.candidate = cand;
      m.episode = ++global_episode;
      m.epsilon = cfg.agent.epsilon;
      m.path_length.assign(robots, 0.0);
      m.stillness.assign(robots, 0);
      double loss_sum = 0.0;
      long loss_count = 0;
      double beta =
          cfg.agent.per_beta0 +
          (1.0 - cfg.agent.per_beta0) *
              std::min(1.0, static_cast<double>(ep) / static_cast<double>(budget));

      int horizon = env.horizon;
      for (int n = 0; n < horizon && n < 4 * env.horizon; ++n) {
        StepOut step = do_step(env, state, n, ep, horizon, pair.current,
                               cfg.agent.epsilon, explore, observer);
        Transition t;
        t.features = step.features;
        t.next_features = step.next_features;
        t.action = step.action.branch_choices(env.layout);
        t.reward = step.reward;
        t.terminal = step.terminal;
        t.next_masks = step.next_masks;
        buffer.store(std::move(t));

        ++steps_done;
        if (buffer.size() >= cfg.agent.batch &&
            steps_done % cfg.agent.learn_every == 0) {
          agents::ReplayBuffer::Batch batch = buffer.sample(
              cfg.agent.batch, cfg.agent.per_omega, beta, replay_stream);
          agents::LearnStats stats =
              agents::learn_step(pair, buffer, batch, cfg.agent.lr,
                                 cfg.agent.discount, cfg.agent.l2,
                                 cfg.agent.per_eps);
          loss_sum += stats.mean_loss;
          ++loss_count;
        }

        m.episode_return += step.reward;
        m.final_sum_rate = step.next_eval.sum_rate;
        if (step.collision) ++m.collisions;
        for (int i = 0; i < robots; ++i) {
          if (step.stilled[i]) ++m.stillness[i];
          if (step.moved[i]) m.path_length[i] += map.delta;
        }
        state = step.next;
        if (step.terminal) break;
      }
      m.loss_mean = loss_count ? loss_sum / loss_count : 0.0;
      result.metrics.push_back(m);
      returns.push_back(m.episode_return);

      if (ep > 1 && std::abs(m.episode_return - prev_return) <= cfg.experiment.stop_delta)
        ++stable_streak;
      else
        stable_streak = 0;
      prev_return = m.episode_return;
      if (stable_streak >= cfg.experiment.stop_patience) break;
    }

    CandidateOutcome outcome;
    outcome.index = cand;
    outcome.pairs = pairs;
    outcome.episodes_run = static_cast<long>(returns.size());
    double tail = 0.0;
    {
      int w = std::min<int>(cfg.experiment.convergence_window,
                            static_cast<int>(returns.size()));
      for (std::size_t i = returns.size() - w; i < returns.size(); ++i)
        tail += returns[i];
      tail /= w;
    }
    outcome.convergence_episode =
        convergence_episode(returns, cfg.experiment.convergence_window,
                            cfg.experiment.convergence_tol * std::abs(tail));

    // Greedy evaluation over fresh channel seeds.
    std::vector<TrajectoryPoint> traj;
    for (int r = 0; r < cfg.experiment.eval_rollouts; ++r) {
      Env eval_env(cfg, sw, map, pairs,
                   rng::hash_seed(seed, {0xea10ULL, c, static_cast<std::uint64_t>(r)}),
                   rng::hash_seed(seed, {0xea20ULL, c, static_cast<std::uint64_t>(r)}));
      if (sw.order == Switches::Order::fixed) eval_env.frozen_order = env.frozen_order;
      rng::Stream greedy_stream(rng::hash_seed(seed, {0xea30ULL, c}));
      EnvState state = eval_env.reset();
      if (r == 0) {
        for (int i = 0; i < robots; ++i) {
          geom::Vec3 p = state.poses[i].position(map);
          traj.push_back({i + 1, 0, p.x, p.y});
        }
      }
      double rollout_return = 0.0, rate_sum = 0.0;
      int steps = 0;
      int horizon = eval_env.horizon;
      for (int n = 0; n < horizon && n < 4 * eval_env.horizon; ++n) {
        StepOut step = do_step(eval_env, state, n, 1, horizon, pair.current, 0.0,
                               greedy_stream, nullptr);
        rollout_return += step.reward;
        rate_sum += step.next_eval.sum_rate;
        ++steps;
        if (r == 0) {
          for (int i = 0; i < robots; ++i) {
            geom::Vec3 p = step.next.poses[i].position(map);
            traj.push_back({i + 1, n + 1, p.x, p.y});
          }
        }
        state = step.next;
        if (step.terminal) break;
      }
      outcome.eval_return += rollout_return / cfg.experiment.eval_rollouts;
      outcome.eval_sum_rate += (rate_sum / steps) / cfg.experiment.eval_rollouts;
    }
    result.candidates.push_back(outcome);

    if (outcome.eval_return > best_score) {
      best_score = outcome.eval_return;
      result.best_candidate = cand;
      result.best_eval_return = outcome.eval_return;
      result.best_eval_sum_rate = outcome.eval_sum_rate;
      best_traj = traj;
      best_pair = pair;
    }
  }
  result.best_trajectory = best_traj;
  result.winner_network = best_pair;
  return result;
}
}  // namespace

// ---------------------------------------------------------------------------
// Writers

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_metrics_csv(const std::string& path, const RunResult& result,
                       int robots) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "candidate,episode,return,final_sum_rate,collisions,epsilon,loss_mean";
  for (int i = 1; i <= robots; ++i) out << ",path_len_" << i;
  for (int i = 1; i <= robots; ++i) out << ",still_" << i;
  out << "\n";
  for (const EpisodeMetrics& m : result.metrics) {
    out << m.candidate << "," << m.episode << "," << format_double(m.episode_return)
        << "," << format_double(m.final_sum_rate) << "," << m.collisions << ","
        << format_double(m.epsilon) << "," << format_double(m.loss_mean);
    for (double v : m.path_length) out << "," << format_double(v);
    for (int v : m.stillness) out << "," << v;
    out << "\n";
  }
}

void write_trajectory_csv(const std::string& path, const RunResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "robot,step,x,y\n";
  for (const TrajectoryPoint& p : result.best_trajectory)
    out << p.robot << "," << p.step << "," << format_double(p.x) << ","
        << format_double(p.y) << "\n";
}

void write_result_json(const std::string& path, const RunResult& result,
                       BaselineVariant variant, std::uint64_t seed) {
  nlohmann::json j;
  j["variant"] = to_string(variant);
  j["seed"] = seed;
  j["best_candidate"] = result.best_candidate;
  j["best_eval_return"] = result.best_eval_return;
  j["best_eval_sum_rate"] = result.best_eval_sum_rate;
  for (const CandidateOutcome& c : result.candidates) {
    nlohmann::json jc;
    jc["index"] = c.index;
    jc["eval_return"] = c.eval_return;
    jc["eval_sum_rate"] = c.eval_sum_rate;
    jc["convergence_episode"] = c.convergence_episode;
    jc["episodes_run"] = c.episodes_run;
    for (const auto& p : c.pairs) {
      jc["pairs"].push_back({{"initial", {p.init_x, p.init_y}},
                             {"final", {p.final_x, p.final_y}}});
    }
    j["candidates"].push_back(jc);
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << "\n";
}

void write_forecast_csv(const std::string& path,
                        const forecast::ForecastReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "index,pred_init_x,pred_init_y,pred_final_x,pred_final_y,"
         "snap_init_x,snap_init_y,snap_final_x,snap_final_y,"
         "los_frac_ap,los_frac_ris,w_lstm,w_arima,rmse,accepted\n";
  for (std::size_t i = 0; i < report.candidates.size(); ++i) {
    const forecast::CandidateSummary& c = report.candidates[i];
    out << i << "," << format_double(c.predicted.init_x) << ","
        << format_double(c.predicted.init_y) << ","
        << format_double(c.predicted.final_x) << ","
        << format_double(c.predicted.final_y) << ","
        << format_double(c.snapped.init_x) << "," << format_double(c.snapped.init_y)
        << "," << format_double(c.snapped.final_x) << ","
        << format_double(c.snapped.final_y) << "," << format_double(c.los_frac_ap)
        << "," << format_double(c.los_frac_ris) << ","
        << format_double(report.weights.w_lstm) << ","
        << format_double(report.weights.w_arima) << ","
        << format_double(report.rmse) << "," << (report.accepted ? 1 : 0) << "\n";
  }
}

RunResult run_and_write(const RunConfig& config, BaselineVariant variant,
                        std::uint64_t seed, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  RunResult result = run_training(config, variant, seed);
  write_metrics_csv(out_dir + "/metrics.csv", result, config.experiment.robots);
  write_trajectory_csv(out_dir + "/trajectory.csv", result);
  write_result_json(out_dir + "/result.json", result, variant, seed);
  std::ofstream checkpoint(out_dir + "/checkpoint.qnet");
  result.winner_network.save(checkpoint);
  return result;
}

std::vector<RunResult> run_many(const std::vector<Job>& jobs, int threads) {
  std::vector<RunResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors(jobs.size());
  auto worker = [&]() {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        results[i] = run_training(jobs[i].config, jobs[i].variant, jobs[i].seed);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  int n = std::max(1, threads);
  std::vector<std::thread> pool;
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!errors[i].empty())
      throw std::runtime_error("job '" + jobs[i].label + "' failed: " + errors[i]);
  }
  return results;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty set");
  std::sort(values.begin(), values.end());
  std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

}  // namespace risnoma::experiment
