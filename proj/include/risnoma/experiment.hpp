#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "risnoma/config.hpp"
#include "risnoma/noma.hpp"

namespace risnoma::experiment {

enum class BaselineVariant {
  ris_noma,  // the proposed scheme: learned phases, optimal order, NOMA
  ris_oma,
  no_ris_noma,
  no_ris_oma,
  random_phase,
  fixed_phase,
  one_bit,
  two_bit,
  random_order,
  fixed_order,
};

const char* to_string(BaselineVariant v);
BaselineVariant baseline_from_string(const std::string& name);

struct EpisodeMetrics {
  int candidate = 0;
  long episode = 0;  // 1-based, global across candidates
  double episode_return = 0.0;
  double final_sum_rate = 0.0;  // bits/s/Hz at the episode's last state
  std::vector<double> path_length;  // meters per robot
  std::vector<int> stillness;       // `still` choices per robot
  int collisions = 0;
  double epsilon = 0.0;
  double loss_mean = 0.0;
};

struct TrajectoryPoint {
  int robot = 1;  // 1-based
  int step = 0;
  double x = 0.0;
  double y = 0.0;
};

struct CandidateOutcome {
  int index = 0;
  std::vector<gridworld::EndpointPair> pairs;  // snapped, one per robot
  double eval_return = 0.0;     // greedy rollouts averaged over channel seeds
  double eval_sum_rate = 0.0;   // mean per-step sum-rate, same rollouts
  long convergence_episode = -1;
  long episodes_run = 0;
};

struct RunResult {
  std::vector<EpisodeMetrics> metrics;
  std::vector<CandidateOutcome> candidates;
  int best_candidate = 0;
  std::vector<TrajectoryPoint> best_trajectory;
  double best_eval_return = 0.0;
  double best_eval_sum_rate = 0.0;
  agents::QNetworkPair winner_network;
};

/// Per-step audit record handed to the observer hook.
struct StepRecord {
  long episode = 0;
  int step = 0;
  std::uint64_t epoch = 0;
  std::uint64_t channel_seed = 0;  // seed of the run's channel source
  std::vector<std::pair<int, int>> cells;  // per robot, after the step
  channel::PhaseConfig phases;
  std::vector<double> powers;
  noma::DecodingOrder order;
  std::vector<double> rates;
  double sum_rate = 0.0;
  double reward = 0.0;
  bool collision = false;
};
using StepObserver = std::function<void(const StepRecord&)>;

/// Algorithm's outer loop: forecast -> candidate pairs -> per-pair training
/// -> greedy evaluation -> winner selection.
RunResult run_training(const config::RunConfig& config, BaselineVariant variant,
                       std::uint64_t seed, const StepObserver& observer = nullptr);

inline RunResult run_baseline(const config::RunConfig& config,
                              BaselineVariant variant, std::uint64_t seed) {
  return run_training(config, variant, seed);
}

/// First episode whose trailing moving-average return stays within +-tol of
/// its final value through the end of the series. Returns -1 when the stable
/// tail is shorter than `window` episodes.
long convergence_episode(const std::vector<double>& returns, int window, double tol);

// ---------------------------------------------------------------------------
// Output files (deterministic formatting: identical inputs give identical bytes)

std::string format_double(double v);

void write_metrics_csv(const std::string& path, const RunResult& result, int robots);
void write_trajectory_csv(const std::string& path, const RunResult& result);
void write_result_json(const std::string& path, const RunResult& result,
                       BaselineVariant variant, std::uint64_t seed);
void write_forecast_csv(const std::string& path, const forecast::ForecastReport& report);

/// Runs `train` end to end and writes metrics.csv, trajectory.csv,
/// result.json and checkpoint.qnet under out_dir.
RunResult run_and_write(const config::RunConfig& config, BaselineVariant variant,
                        std::uint64_t seed, const std::string& out_dir);

// ---------------------------------------------------------------------------
// Fan-out

struct Job {
  config::RunConfig config;
  BaselineVariant variant = BaselineVariant::ris_noma;
  std::uint64_t seed = 0;
  std::string label;
};

/// Executes independent jobs on a small thread pool; results are returned in
/// job order regardless of scheduling.
std::vector<RunResult> run_many(const std::vector<Job>& jobs, int threads);

double median(std::vector<double> values);

}  // namespace risnoma::experiment
