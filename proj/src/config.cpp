#include "risnoma/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace risnoma::config {

using nlohmann::json;

RunConfig desk_profile() {
  RunConfig cfg;
  cfg.map.x_max = 4.0;
  cfg.map.y_max = 3.0;
  cfg.map.delta = 0.1;
  cfg.map.robot_height = 0.5;
  // A screen wall shadows the east half of the floor from the low-mounted
  // AP; the RIS hangs above the screen with line of sight to both sides, so
  // the reflected path carries the shadowed region. A low block in the east
  // adds a pocket the reflected path cannot reach either.
  cfg.map.obstacles = {
      {0.8, 1.2, 0.0, 2.0, 1.5},
      {2.6, 3.0, 1.4, 1.8, 1.5},
  };
  cfg.map.ap_pos = {0.1, 0.1, 1.0};
  cfg.map.ris_pos = {1.0, 1.0, 2.4};

  cfg.channel.k_total = 8;
  cfg.channel.k_per_sub = 4;
  cfg.channel.phase_bits = 3;
  // The desk preset pins the deterministic channel mode so short runs are
  // reproducible and comparisons stay sharp.
  cfg.channel.nlos_mode = channel::NlosMode::expected;

  // Enough transmit power that reflected-path rates in the shadow sit well
  // above the QoS floor.
  cfg.noma.power_budget_w = 0.0398107170553497;  // 16 dBm

  cfg.forecast.n_unit = 30;
  cfg.forecast.initial_range = {0.5, 3.5, 2.5, 3.0};
  cfg.forecast.final_range = {0.5, 3.5, 0.0, 0.5};
  cfg.forecast.rmse_threshold = 1.2;

  cfg.experiment.robots = 2;
  cfg.experiment.episodes = 2000;
  return cfg;
}

RunConfig full_profile() {
  RunConfig cfg;
  cfg.map = gridworld::default_map_config();

  cfg.channel.k_total = 20;
  cfg.channel.k_per_sub = 5;
  cfg.channel.phase_bits = 3;
  cfg.channel.nlos_mode = channel::NlosMode::realization;

  cfg.forecast.n_unit = 90;
  cfg.forecast.initial_range = {1.0, 7.0, 5.0, 6.0};
  cfg.forecast.final_range = {1.1, 6.9, 0.0, 1.0};
  cfg.forecast.rmse_threshold = 1.5;

  cfg.agent.hidden = {128, 128};
  cfg.agent.learn_every = 1;

  cfg.experiment.robots = 3;
  cfg.experiment.episodes = 10000;
  cfg.experiment.candidates = 5;
  return cfg;
}

RunConfig profile_by_name(const std::string& name) {
  if (name == "desk") return desk_profile();
  if (name == "full") return full_profile();
  throw std::invalid_argument("unknown profile '" + name + "' (desk|full)");
}

namespace {

double get_num(const json& j, const std::string& block, const char* key,
               double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number())
    throw std::invalid_argument(block + "." + key + " must be a number");
  return j[key].get<double>();
}

long get_int(const json& j, const std::string& block, const char* key,
             long fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer())
    throw std::invalid_argument(block + "." + key + " must be an integer");
  return j[key].get<long>();
}

bool get_bool(const json& j, const std::string& block, const char* key,
              bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_boolean())
    throw std::invalid_argument(block + "." + key + " must be a boolean");
  return j[key].get<bool>();
}

std::string get_str(const json& j, const std::string& block, const char* key,
                    const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_string())
    throw std::invalid_argument(block + "." + key + " must be a string");
  return j[key].get<std::string>();
}

geom::Vec3 get_vec3(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3)
    throw std::invalid_argument(field + " must be [x, y, z] in meters");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

forecast::Rect get_rect(const json& j, const std::string& field,
                        const forecast::Rect& fallback) {
  if (j.is_null()) return fallback;
  if (!j.is_array() || j.size() != 4)
    throw std::invalid_argument(field + " must be [x_lo, x_hi, y_lo, y_hi]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
          j[3].get<double>()};
}

void parse_map(const json& j, gridworld::MapConfig& map);

/// A map block may delegate to a standalone description file via "path".
void parse_map_or_path(const json& j, gridworld::MapConfig& map) {
  if (j.contains("path")) {
    std::ifstream in(j["path"].get<std::string>());
    if (!in)
      throw std::invalid_argument("map.path: cannot open '" +
                                  j["path"].get<std::string>() + "'");
    json file_json;
    try {
      file_json = json::parse(in);
    } catch (const json::parse_error& e) {
      throw std::invalid_argument(std::string("map.path: invalid JSON: ") + e.what());
    }
    parse_map(file_json, map);
    return;
  }
  parse_map(j, map);
}

void parse_map(const json& j, gridworld::MapConfig& map) {
  map.x_max = get_num(j, "map", "x_max", map.x_max);
  map.y_max = get_num(j, "map", "y_max", map.y_max);
  map.delta = get_num(j, "map", "delta", map.delta);
  map.robot_height = get_num(j, "map", "robot_height", map.robot_height);
  if (j.contains("ap")) map.ap_pos = get_vec3(j["ap"], "map.ap");
  if (j.contains("ris")) map.ris_pos = get_vec3(j["ris"], "map.ris");
  if (j.contains("obstacles")) {
    if (!j["obstacles"].is_array())
      throw std::invalid_argument("map.obstacles must be an array");
    map.obstacles.clear();
    for (std::size_t i = 0; i < j["obstacles"].size(); ++i) {
      const json& o = j["obstacles"][i];
      std::string field = "map.obstacles[" + std::to_string(i) + "]";
      if (!o.contains("x") || !o.contains("y") || !o.contains("height"))
        throw std::invalid_argument(field + " needs x, y ranges and height");
      geom::Box box;
      box.x0 = o["x"][0].get<double>();
      box.x1 = o["x"][1].get<double>();
      box.y0 = o["y"][0].get<double>();
      box.y1 = o["y"][1].get<double>();
      box.height = o["height"].get<double>();
      map.obstacles.push_back(box);
    }
  }
}

void parse_channel(const json& j, channel::ChannelParams& ch) {
  double c_db = get_num(j, "channel", "c_db", 10.0 * std::log10(ch.path_loss.c_ref));
  ch.path_loss.c_ref = std::pow(10.0, c_db / 10.0);
  ch.path_loss.gamma_ap_robot =
      get_num(j, "channel", "gamma_ap_robot", ch.path_loss.gamma_ap_robot);
  ch.path_loss.gamma_ris_robot =
      get_num(j, "channel", "gamma_ris_robot", ch.path_loss.gamma_ris_robot);
  ch.path_loss.gamma_ap_ris =
      get_num(j, "channel", "gamma_ap_ris", ch.path_loss.gamma_ap_ris);
  double noise_dbw = get_num(j, "channel", "noise_dbw", 10.0 * std::log10(ch.noise_power));
  ch.noise_power = std::pow(10.0, noise_dbw / 10.0);
  ch.a_bar = get_num(j, "channel", "rician_a_bar", ch.a_bar);
  ch.carrier_hz = get_num(j, "channel", "carrier_hz", ch.carrier_hz);
  ch.spacing_wavelengths =
      get_num(j, "channel", "element_spacing_wavelengths", ch.spacing_wavelengths);
  ch.k_total = static_cast<int>(get_int(j, "channel", "k_elements", ch.k_total));
  ch.k_per_sub =
      static_cast<int>(get_int(j, "channel", "k_per_subsurface", ch.k_per_sub));
  ch.phase_bits = static_cast<int>(get_int(j, "channel", "phase_bits", ch.phase_bits));
  std::string mode = get_str(j, "channel", "nlos_mode",
                             ch.nlos_mode == channel::NlosMode::expected
                                 ? "expected"
                                 : "realization");
  if (mode == "expected")
    ch.nlos_mode = channel::NlosMode::expected;
  else if (mode == "realization")
    ch.nlos_mode = channel::NlosMode::realization;
  else
    throw std::invalid_argument("channel.nlos_mode must be realization|expected");
  ch.redraw_ap_ris_per_epoch =
      get_bool(j, "channel", "redraw_ap_ris_per_epoch", ch.redraw_ap_ris_per_epoch);
  if (ch.k_per_sub <= 0 || ch.k_total <= 0 || ch.k_total % ch.k_per_sub != 0)
    throw std::invalid_argument(
        "channel.k_elements must be a positive multiple of k_per_subsurface");
  if (ch.phase_bits < 1)
    throw std::invalid_argument("channel.phase_bits must be >= 1");
}

void parse_noma(const json& j, NomaConfig& cfg) {
  double dbm = get_num(j, "noma", "power_dbm",
                       10.0 * std::log10(cfg.power_budget_w * 1000.0));
  cfg.power_budget_w = std::pow(10.0, dbm / 10.0) / 1000.0;
  if (j.contains("power_levels")) {
    if (!j["power_levels"].is_array() || j["power_levels"].empty())
      throw std::invalid_argument("noma.power_levels must be a nonempty array");
    cfg.power_levels.clear();
    for (const json& v : j["power_levels"]) cfg.power_levels.push_back(v.get<double>());
  }
  cfg.qos_rate = get_num(j, "noma", "qos_rate", cfg.qos_rate);
  cfg.order_cap =
      static_cast<std::size_t>(get_int(j, "noma", "order_cap", cfg.order_cap));
  for (double f : cfg.power_levels)
    if (f <= 0.0 || f > 1.0)
      throw std::invalid_argument("noma.power_levels entries must lie in (0, 1]");
}

void parse_forecast(const json& j, forecast::ForecastConfig& cfg) {
  cfg.n_unit = static_cast<int>(get_int(j, "forecast", "n_unit", cfg.n_unit));
  cfg.initial_range = get_rect(j.contains("initial_range") ? j["initial_range"] : json(),
                               "forecast.initial_range", cfg.initial_range);
  cfg.final_range = get_rect(j.contains("final_range") ? j["final_range"] : json(),
                             "forecast.final_range", cfg.final_range);
  cfg.lstm_hidden = static_cast<std::size_t>(
      get_int(j, "forecast", "lstm_hidden", cfg.lstm_hidden));
  cfg.lstm.epochs = static_cast<int>(get_int(j, "forecast", "lstm_epochs", cfg.lstm.epochs));
  cfg.lstm.lr = get_num(j, "forecast", "lstm_lr", cfg.lstm.lr);
  cfg.lstm.l2 = get_num(j, "forecast", "lstm_l2", cfg.lstm.l2);
  if (j.contains("arima_order")) {
    const json& o = j["arima_order"];
    if (!o.is_array() || o.size() != 3)
      throw std::invalid_argument("forecast.arima_order must be [a, d, b]");
    cfg.arima_a = o[0].get<int>();
    cfg.arima_d = o[1].get<int>();
    cfg.arima_b = o[2].get<int>();
  }
  cfg.rmse_threshold = get_num(j, "forecast", "rmse_threshold", cfg.rmse_threshold);
  cfg.rmse_verbatim = get_bool(j, "forecast", "rmse_verbatim", cfg.rmse_verbatim);
  cfg.retry_cap = static_cast<int>(get_int(j, "forecast", "retry_cap", cfg.retry_cap));
}

void parse_agent(const json& j, AgentConfig& cfg) {
  cfg.variant = agents::variant_from_string(
      get_str(j, "agent", "variant", agents::to_string(cfg.variant)));
  if (j.contains("hidden")) {
    if (!j["hidden"].is_array() || j["hidden"].empty())
      throw std::invalid_argument("agent.hidden must be a nonempty array");
    cfg.hidden.clear();
    for (const json& v : j["hidden"])
      cfg.hidden.push_back(v.get<std::size_t>());
  }
  cfg.replay_capacity = static_cast<std::size_t>(
      get_int(j, "agent", "replay_capacity", cfg.replay_capacity));
  cfg.batch = static_cast<std::size_t>(get_int(j, "agent", "batch", cfg.batch));
  cfg.discount = get_num(j, "agent", "discount", cfg.discount);
  cfg.lr = get_num(j, "agent", "lr", cfg.lr);
  cfg.epsilon = get_num(j, "agent", "epsilon", cfg.epsilon);
  cfg.l2 = get_num(j, "agent", "l2", cfg.l2);
  cfg.target_sync = static_cast<int>(get_int(j, "agent", "target_sync", cfg.target_sync));
  cfg.learn_every = static_cast<int>(get_int(j, "agent", "learn_every", cfg.learn_every));
  cfg.per_omega = get_num(j, "agent", "per_omega", cfg.per_omega);
  cfg.per_beta0 = get_num(j, "agent", "per_beta0", cfg.per_beta0);
  cfg.per_eps = get_num(j, "agent", "per_eps", cfg.per_eps);
  cfg.qos_penalty = get_num(j, "agent", "qos_penalty", cfg.qos_penalty);
}

void parse_experiment(const json& j, ExperimentConfig& cfg) {
  cfg.episodes = get_int(j, "experiment", "episodes", cfg.episodes);
  cfg.horizon_slack =
      static_cast<int>(get_int(j, "experiment", "horizon_slack", cfg.horizon_slack));
  cfg.candidates =
      static_cast<int>(get_int(j, "experiment", "candidates", cfg.candidates));
  cfg.eval_rollouts =
      static_cast<int>(get_int(j, "experiment", "eval_rollouts", cfg.eval_rollouts));
  cfg.stop_delta = get_num(j, "experiment", "stop_delta", cfg.stop_delta);
  cfg.stop_patience =
      static_cast<int>(get_int(j, "experiment", "stop_patience", cfg.stop_patience));
  cfg.convergence_window = static_cast<int>(
      get_int(j, "experiment", "convergence_window", cfg.convergence_window));
  cfg.convergence_tol =
      get_num(j, "experiment", "convergence_tol", cfg.convergence_tol);
  cfg.robots = static_cast<int>(get_int(j, "experiment", "robots", cfg.robots));
  if (cfg.robots < 1) throw std::invalid_argument("experiment.robots must be >= 1");
  if (cfg.candidates < 1)
    throw std::invalid_argument("experiment.candidates must be >= 1");
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig cfg = profile_by_name(get_str(j, "config", "profile", "desk"));
  if (j.contains("map")) parse_map_or_path(j["map"], cfg.map);
  if (j.contains("channel")) parse_channel(j["channel"], cfg.channel);
  if (j.contains("noma")) parse_noma(j["noma"], cfg.noma);
  if (j.contains("forecast")) parse_forecast(j["forecast"], cfg.forecast);
  if (j.contains("agent")) parse_agent(j["agent"], cfg.agent);
  if (j.contains("experiment")) parse_experiment(j["experiment"], cfg.experiment);
  gridworld::build_map(cfg.map);  // validate eagerly
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string to_json_text(const RunConfig& cfg) {
  json j;
  j["map"]["x_max"] = cfg.map.x_max;
  j["map"]["y_max"] = cfg.map.y_max;
  j["map"]["delta"] = cfg.map.delta;
  j["map"]["robot_height"] = cfg.map.robot_height;
  j["map"]["ap"] = {cfg.map.ap_pos.x, cfg.map.ap_pos.y, cfg.map.ap_pos.z};
  j["map"]["ris"] = {cfg.map.ris_pos.x, cfg.map.ris_pos.y, cfg.map.ris_pos.z};
  for (const geom::Box& b : cfg.map.obstacles) {
    j["map"]["obstacles"].push_back(
        {{"x", {b.x0, b.x1}}, {"y", {b.y0, b.y1}}, {"height", b.height}});
  }
  j["channel"]["c_db"] = 10.0 * std::log10(cfg.channel.path_loss.c_ref);
  j["channel"]["gamma_ap_robot"] = cfg.channel.path_loss.gamma_ap_robot;
  j["channel"]["gamma_ris_robot"] = cfg.channel.path_loss.gamma_ris_robot;
  j["channel"]["gamma_ap_ris"] = cfg.channel.path_loss.gamma_ap_ris;
  j["channel"]["noise_dbw"] = 10.0 * std::log10(cfg.channel.noise_power);
  j["channel"]["rician_a_bar"] = cfg.channel.a_bar;
  j["channel"]["carrier_hz"] = cfg.channel.carrier_hz;
  j["channel"]["element_spacing_wavelengths"] = cfg.channel.spacing_wavelengths;
  j["channel"]["k_elements"] = cfg.channel.k_total;
  j["channel"]["k_per_subsurface"] = cfg.channel.k_per_sub;
  j["channel"]["phase_bits"] = cfg.channel.phase_bits;
  j["channel"]["nlos_mode"] =
      cfg.channel.nlos_mode == channel::NlosMode::expected ? "expected" : "realization";
  j["channel"]["redraw_ap_ris_per_epoch"] = cfg.channel.redraw_ap_ris_per_epoch;
  j["noma"]["power_dbm"] = 10.0 * std::log10(cfg.noma.power_budget_w * 1000.0);
  j["noma"]["power_levels"] = cfg.noma.power_levels;
  j["noma"]["qos_rate"] = cfg.noma.qos_rate;
  j["noma"]["order_cap"] = cfg.noma.order_cap;
  j["forecast"]["n_unit"] = cfg.forecast.n_unit;
  j["forecast"]["initial_range"] = {cfg.forecast.initial_range.x_lo,
                                    cfg.forecast.initial_range.x_hi,
                                    cfg.forecast.initial_range.y_lo,
                                    cfg.forecast.initial_range.y_hi};
  j["forecast"]["final_range"] = {cfg.forecast.final_range.x_lo,
                                  cfg.forecast.final_range.x_hi,
                                  cfg.forecast.final_range.y_lo,
                                  cfg.forecast.final_range.y_hi};
  j["forecast"]["lstm_hidden"] = cfg.forecast.lstm_hidden;
  j["forecast"]["lstm_epochs"] = cfg.forecast.lstm.epochs;
  j["forecast"]["lstm_lr"] = cfg.forecast.lstm.lr;
  j["forecast"]["lstm_l2"] = cfg.forecast.lstm.l2;
  j["forecast"]["arima_order"] = {cfg.forecast.arima_a, cfg.forecast.arima_d,
                                  cfg.forecast.arima_b};
  j["forecast"]["rmse_threshold"] = cfg.forecast.rmse_threshold;
  j["forecast"]["rmse_verbatim"] = cfg.forecast.rmse_verbatim;
  j["forecast"]["retry_cap"] = cfg.forecast.retry_cap;
  j["agent"]["variant"] = agents::to_string(cfg.agent.variant);
  j["agent"]["hidden"] = cfg.agent.hidden;
  j["agent"]["replay_capacity"] = cfg.agent.replay_capacity;
  j["agent"]["batch"] = cfg.agent.batch;
  j["agent"]["discount"] = cfg.agent.discount;
  j["agent"]["lr"] = cfg.agent.lr;
  j["agent"]["epsilon"] = cfg.agent.epsilon;
  j["agent"]["l2"] = cfg.agent.l2;
  j["agent"]["target_sync"] = cfg.agent.target_sync;
  j["agent"]["learn_every"] = cfg.agent.learn_every;
  j["agent"]["per_omega"] = cfg.agent.per_omega;
  j["agent"]["per_beta0"] = cfg.agent.per_beta0;
  j["agent"]["per_eps"] = cfg.agent.per_eps;
  j["agent"]["qos_penalty"] = cfg.agent.qos_penalty;
  j["experiment"]["episodes"] = cfg.experiment.episodes;
  j["experiment"]["horizon_slack"] = cfg.experiment.horizon_slack;
  j["experiment"]["candidates"] = cfg.experiment.candidates;
  j["experiment"]["eval_rollouts"] = cfg.experiment.eval_rollouts;
  j["experiment"]["stop_delta"] = cfg.experiment.stop_delta;
  j["experiment"]["stop_patience"] = cfg.experiment.stop_patience;
  j["experiment"]["convergence_window"] = cfg.experiment.convergence_window;
  j["experiment"]["convergence_tol"] = cfg.experiment.convergence_tol;
  j["experiment"]["robots"] = cfg.experiment.robots;
  return j.dump(2);
}

}  // namespace risnoma::config
