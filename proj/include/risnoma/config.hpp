#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "risnoma/agents.hpp"
#include "risnoma/channel.hpp"
#include "risnoma/forecast.hpp"
#include "risnoma/gridworld.hpp"

namespace risnoma::config {

struct NomaConfig {
  double power_budget_w = 0.01;  // 10 dBm
  std::vector<double> power_levels{0.1, 0.2, 0.3, 0.4};  // fractions of the budget
  double qos_rate = 0.2;   // bits/s/Hz per robot
  std::size_t order_cap = 6;
};

struct AgentConfig {
  agents::Variant variant = agents::Variant::d3qn;
  std::vector<std::size_t> hidden{48, 48};
  std::size_t replay_capacity = 1000;
  std::size_t batch = 64;
  double discount = 0.9;
  double lr = 0.05;
  double epsilon = 0.1;
  double l2 = 0.0;
  int target_sync = 5;    // T
  int learn_every = 2;    // env steps per gradient step
  double per_omega = 0.6;
  double per_beta0 = 0.4;
  double per_eps = 1e-6;
  double qos_penalty = 1.0;
};

struct ExperimentConfig {
  long episodes = 2000;      // total across candidates
  int horizon_slack = 2;
  int candidates = 1;        // endpoint pairs trained per run
  int eval_rollouts = 5;
  double stop_delta = 1e-3;  // return-closeness threshold
  int stop_patience = 50;    // consecutive episodes before early stop
  int convergence_window = 100;
  double convergence_tol = 0.05;  // fraction of the final moving average
  int robots = 2;            // X
};

struct RunConfig {
  gridworld::MapConfig map;
  channel::ChannelParams channel;
  NomaConfig noma;
  forecast::ForecastConfig forecast;
  AgentConfig agent;
  ExperimentConfig experiment;
};

/// Desk-scale profile: 4m x 3m, X=2, K=8, M=2, 2000 episodes; sized so the
/// full acceptance suite completes in minutes.
RunConfig desk_profile();

/// Full-scale profile: 8m x 6m scene, X=3, K=20, 10000 episodes.
RunConfig full_profile();

RunConfig profile_by_name(const std::string& name);

/// Parses a JSON config file. Unknown keys and malformed values raise errors
/// naming the offending field. Missing blocks fall back to the desk profile.
RunConfig load_config(const std::string& path);

RunConfig parse_config(const std::string& json_text);

std::string to_json_text(const RunConfig& config);

}  // namespace risnoma::config
