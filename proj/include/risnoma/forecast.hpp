#pragma once

#include <cstdint>
#include <vector>

#include "risnoma/gridworld.hpp"
#include "risnoma/neural.hpp"

namespace risnoma::forecast {

using gridworld::EndpointPair;
using gridworld::GridMap;
using neural::Matrix;
using neural::Vector;

// ---------------------------------------------------------------------------
// History generation and normalization

struct Rect {
  double x_lo = 0.0, x_hi = 0.0;
  double y_lo = 0.0, y_hi = 0.0;
};

/// 6N synthetic position pairs: train = first 4N, test = next N,
/// inference = last N.
struct HistorySet {
  std::vector<EndpointPair> samples;
  int n_unit = 0;  // N

  std::vector<EndpointPair> train() const;
  std::vector<EndpointPair> test() const;
  std::vector<EndpointPair> inference() const;
};

HistorySet generate_history(const Rect& initial_range, const Rect& final_range,
                            int n, std::uint64_t seed);

struct NormStats {
  double s_min = 0.0;
  double s_max = 1.0;
};

/// Min-max stats over every coordinate of both positions in the set.
NormStats norm_stats(const std::vector<EndpointPair>& samples);

double normalize(double s, const NormStats& stats);
double denormalize(double v, const NormStats& stats);

// ---------------------------------------------------------------------------
// LSTM branch

struct GateParams {
  Matrix wx;  // hidden x input
  Matrix wh;  // hidden x hidden
  Vector b;   // hidden
};

struct LstmState {
  Vector hidden;
  Vector cell;
};

/// Single-layer LSTM with a linear readout. Gate order: input, forget,
/// output, candidate.
struct LstmCell {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  GateParams input_gate, forget_gate, output_gate, candidate;
  neural::DenseLayer readout;  // hidden -> input_size, identity

  LstmState zero_state() const;
  std::size_t param_count() const;
};

LstmCell make_lstm(std::size_t input_size, std::size_t hidden_size,
                   std::uint64_t seed);

/// One recurrence step: returns the normalized readout and advances the state.
Vector lstm_step(const LstmCell& cell, const Vector& x, LstmState& state);

/// Gradient container mirroring LstmCell shapes.
struct LstmGrad {
  neural::LayerGrad input_gate, forget_gate, output_gate, candidate;
  neural::LayerGrad readout;
};

/// Full-batch MSE over next-sample prediction with exact BPTT gradients.
/// inputs[t] is regressed onto targets[t].
double lstm_loss_and_grad(const LstmCell& cell, const std::vector<Vector>& inputs,
                          const std::vector<Vector>& targets, LstmGrad* grad);

struct LstmTrainOptions {
  int epochs = 300;
  double lr = 0.02;
  double l2 = 1e-4;  // applied to the readout layer only
};

struct LstmTrainResult {
  LstmCell cell;
  std::vector<double> loss_per_epoch;  // non-increasing by construction
};

/// Deterministic full-batch descent with backtracking so the recorded loss
/// never increases. Throws on non-finite loss.
LstmTrainResult lstm_train(const std::vector<Vector>& sequence,
                           std::size_t hidden_size, const LstmTrainOptions& options,
                           std::uint64_t seed);

/// Runs the recurrence over `sequence`, returning the readout after each
/// input (the prediction of the following sample).
std::vector<Vector> lstm_apply(const LstmCell& cell,
                               const std::vector<Vector>& sequence);

// ---------------------------------------------------------------------------
// ARIMA branch

/// Applies (1-L)^d; output shrinks by d. Throws when the series is too short.
Vector difference(const Vector& series, int d);

struct ArimaModel {
  int ar_order = 0;    // a
  int diff_order = 0;  // d
  int ma_order = 0;    // b
  Vector ar_coeffs;    // kappa
  Vector ma_coeffs;    // phi
  double intercept = 0.0;  // mu
};

/// Two-stage Hannan-Rissanen fit on the d-differenced series: AR residuals
/// first, then a joint least-squares regression with lagged residuals.
ArimaModel arima_fit(const Vector& series, int a, int d, int b);

/// One-step-ahead forecast: AR+MA on the differenced scale, integrated back.
double arima_predict(const ArimaModel& model, const Vector& history);

// ---------------------------------------------------------------------------
// Fusion and the acceptance gate

struct FusionWeights {
  double w_lstm = 0.5;
  double w_arima = 0.5;
};

/// CRITIC weighting over the two candidates' error series: information
/// content C_j = sigma_j * (1 - r), weights C_j / sum C. Degenerate
/// (both zero) falls back to an even split.
FusionWeights critic_weights(const Vector& pred_lstm, const Vector& pred_arima,
                             const Vector& truth);

double fuse(double lstm_value, double arima_value, const FusionWeights& w);

struct GateResult {
  double score = 0.0;  // the indicator I
  bool accept = false;
};

/// Root-mean-square error against truth, accepted when score <= threshold.
/// `verbatim` switches to sqrt(mean |error|) instead of the squared form.
GateResult rmse_gate(const Vector& pred, const Vector& truth, double threshold,
                     bool verbatim = false);

// ---------------------------------------------------------------------------
// Pipeline

struct ForecastConfig {
  int n_unit = 30;
  Rect initial_range{1.0, 7.0, 5.0, 6.0};
  Rect final_range{1.1, 6.9, 0.0, 1.0};
  std::size_t lstm_hidden = 16;
  LstmTrainOptions lstm;
  int arima_a = 2, arima_d = 1, arima_b = 2;
  double rmse_threshold = 1.5;
  bool rmse_verbatim = false;
  int retry_cap = 5;
};

struct CandidateSummary {
  EndpointPair predicted;   // fused model output, meters
  EndpointPair snapped;     // nearest valid cell centers
  double los_frac_ap = 0.0;   // corridor cells with AP line of sight
  double los_frac_ris = 0.0;  // corridor cells with RIS line of sight
};

struct ForecastReport {
  std::vector<CandidateSummary> candidates;  // N entries
  FusionWeights weights;
  double rmse = 0.0;
  double rmse_lstm = 0.0;
  double rmse_arima = 0.0;
  bool accepted = false;
  int attempts = 0;
};

/// End-to-end prediction pipeline: generate, normalize, train both branches,
/// fuse, gate, and emit snapped endpoint candidates. Retries with fresh seeds
/// up to config.retry_cap, then throws.
ForecastReport run_forecast(const ForecastConfig& config, const GridMap& map,
                            std::uint64_t seed);

}  // namespace risnoma::forecast
