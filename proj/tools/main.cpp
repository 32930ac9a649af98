// Command-line front end: predict / train / baseline / sweep / report.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "risnoma/config.hpp"
#include "risnoma/experiment.hpp"

namespace {

using risnoma::config::RunConfig;

struct CommonOpts {
  std::string config_path;
  std::string profile = "desk";
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  long episodes = -1;
  std::string variant;        // agent variant override
  int robots = -1;
  int elements = -1;          // K override
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool seed_required,
                bool k_override = true) {
  cmd->add_option("--config", opts.config_path, "JSON config file");
  cmd->add_option("--profile", opts.profile, "built-in profile when no config file")
      ->check(CLI::IsMember({"desk", "full"}));
  cmd->add_option("--out", opts.out_dir, "output directory");
  auto* seed = cmd->add_option_function<std::uint64_t>(
      "--seed",
      [&opts](std::uint64_t s) {
        opts.seed = s;
        opts.seed_set = true;
      },
      "run seed (explicit, no wall-clock default)");
  if (seed_required) seed->required();
  cmd->add_option("--episodes", opts.episodes, "override experiment.episodes");
  cmd->add_option("--agent", opts.variant, "override agent.variant")
      ->check(CLI::IsMember({"double", "dueling", "d3qn"}));
  cmd->add_option("--robots", opts.robots, "override experiment.robots");
  if (k_override)
    cmd->add_option("--elements", opts.elements, "override channel.k_elements");
}

RunConfig resolve_config(const CommonOpts& opts) {
  RunConfig cfg = opts.config_path.empty()
                      ? risnoma::config::profile_by_name(opts.profile)
                      : risnoma::config::load_config(opts.config_path);
  if (opts.episodes > 0) cfg.experiment.episodes = opts.episodes;
  if (!opts.variant.empty())
    cfg.agent.variant = risnoma::agents::variant_from_string(opts.variant);
  if (opts.robots > 0) cfg.experiment.robots = opts.robots;
  if (opts.elements > 0) {
    if (opts.elements % cfg.channel.k_per_sub != 0)
      throw std::invalid_argument(
          "--elements must be a multiple of channel.k_per_subsurface");
    cfg.channel.k_total = opts.elements;
  }
  return cfg;
}

int cmd_predict(const CommonOpts& opts) {
  RunConfig cfg = resolve_config(opts);
  auto map = risnoma::gridworld::build_map(cfg.map);
  auto report = risnoma::forecast::run_forecast(
      cfg.forecast, map, risnoma::rng::hash_seed(opts.seed, {0xf0ULL}));
  std::filesystem::create_directories(opts.out_dir);
  risnoma::experiment::write_forecast_csv(opts.out_dir + "/predictions.csv", report);
  std::cout << "accepted=" << (report.accepted ? 1 : 0) << " rmse=" << report.rmse
            << " (lstm " << report.rmse_lstm << ", arima " << report.rmse_arima
            << ") attempts=" << report.attempts << "\n"
            << "candidates=" << report.candidates.size() << " -> "
            << opts.out_dir << "/predictions.csv\n";
  return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& baseline) {
  RunConfig cfg = resolve_config(opts);
  auto variant = risnoma::experiment::baseline_from_string(baseline);
  auto result =
      risnoma::experiment::run_and_write(cfg, variant, opts.seed, opts.out_dir);
  std::cout << "variant=" << risnoma::experiment::to_string(variant)
            << " episodes=" << result.metrics.size()
            << " best_candidate=" << result.best_candidate
            << " eval_sum_rate=" << result.best_eval_sum_rate
            << " eval_return=" << result.best_eval_return << "\n"
            << "outputs in " << opts.out_dir << "\n";
  return 0;
}

int cmd_sweep(const CommonOpts& opts, const std::string& elements_csv,
              const std::string& seeds_csv, int threads) {
  std::vector<int> elements;
  for (std::stringstream ss(elements_csv); ss.good();) {
    std::string tok;
    if (!std::getline(ss, tok, ',')) break;
    elements.push_back(std::stoi(tok));
  }
  std::vector<std::uint64_t> seeds;
  if (seeds_csv.empty()) {
    seeds.push_back(opts.seed);
  } else {
    for (std::stringstream ss(seeds_csv); ss.good();) {
      std::string tok;
      if (!std::getline(ss, tok, ',')) break;
      seeds.push_back(std::stoull(tok));
    }
  }

  std::vector<risnoma::experiment::Job> jobs;
  for (int k : elements) {
    for (std::uint64_t s : seeds) {
      CommonOpts o = opts;
      o.elements = k;
      risnoma::experiment::Job job;
      job.config = resolve_config(o);
      job.seed = s;
      job.label = "K=" + std::to_string(k) + " seed=" + std::to_string(s);
      jobs.push_back(job);
    }
  }
  auto results = risnoma::experiment::run_many(jobs, threads);

  std::filesystem::create_directories(opts.out_dir);
  std::ofstream out(opts.out_dir + "/sweep.csv");
  out << "k_elements,seed,eval_sum_rate,eval_return\n";
  std::size_t idx = 0;
  for (int k : elements) {
    std::vector<double> rates;
    for (std::uint64_t s : seeds) {
      const auto& r = results[idx++];
      out << k << "," << s << ","
          << risnoma::experiment::format_double(r.best_eval_sum_rate) << ","
          << risnoma::experiment::format_double(r.best_eval_return) << "\n";
      rates.push_back(r.best_eval_sum_rate);
    }
    std::cout << "K=" << k
              << " median_sum_rate=" << risnoma::experiment::median(rates) << "\n";
  }
  std::cout << "rows -> " << opts.out_dir << "/sweep.csv\n";
  return 0;
}

int cmd_report(const std::string& runs_dir) {
  namespace fs = std::filesystem;
  // Aggregates result.json files found one level below runs_dir, grouped by
  // the "variant" field.
  std::map<std::string, std::vector<double>> rates;
  std::map<std::string, std::vector<double>> returns;
  for (const auto& entry : fs::directory_iterator(runs_dir)) {
    fs::path p = entry.path() / "result.json";
    if (!fs::exists(p)) continue;
    std::ifstream in(p);
    nlohmann::json j = nlohmann::json::parse(in);
    std::string variant = j.value("variant", "?");
    rates[variant].push_back(j.value("best_eval_sum_rate", 0.0));
    returns[variant].push_back(j.value("best_eval_return", 0.0));
  }
  if (rates.empty()) {
    std::cerr << "no result.json files under " << runs_dir << "\n";
    return 1;
  }
  std::cout << "variant,runs,median_sum_rate,median_return\n";
  for (auto& [variant, values] : rates) {
    std::cout << variant << "," << values.size() << ","
              << risnoma::experiment::median(values) << ","
              << risnoma::experiment::median(returns[variant]) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RIS-assisted NOMA multi-robot trajectory toolkit"};
  app.require_subcommand(1);

  CommonOpts predict_opts, train_opts, baseline_opts, sweep_opts;
  std::string baseline_variant = "ris-noma";
  std::string elements_csv = "10,20,30";
  std::string seeds_csv;
  std::string runs_dir;
  int threads = 2;

  CLI::App* predict = app.add_subcommand("predict", "endpoint forecast only");
  add_common(predict, predict_opts, false);

  CLI::App* train = app.add_subcommand("train", "full training pipeline");
  add_common(train, train_opts, true);

  CLI::App* baseline = app.add_subcommand("baseline", "train a benchmark variant");
  add_common(baseline, baseline_opts, true);
  baseline->add_option("--variant", baseline_variant, "benchmark scheme")
      ->required()
      ->check(CLI::IsMember({"ris-noma", "ris-oma", "no-ris-noma", "no-ris-oma",
                             "random-phase", "fixed-phase", "1bit", "2bit",
                             "random-order", "fixed-order"}));

  CLI::App* sweep = app.add_subcommand("sweep", "element-count sweep");
  add_common(sweep, sweep_opts, true, /*k_override=*/false);
  sweep->add_option("--elements", elements_csv, "comma-separated K values");
  sweep->add_option("--seeds", seeds_csv, "comma-separated seeds");
  sweep->add_option("--threads", threads, "parallel runs");

  CLI::App* report = app.add_subcommand("report", "aggregate run directories");
  report->add_option("--runs", runs_dir, "directory holding run subdirectories")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (predict->parsed()) return cmd_predict(predict_opts);
    if (train->parsed()) return cmd_train(train_opts, "ris-noma");
    if (baseline->parsed()) return cmd_train(baseline_opts, baseline_variant);
    if (sweep->parsed()) return cmd_sweep(sweep_opts, elements_csv, seeds_csv, threads);
    if (report->parsed()) return cmd_report(runs_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
