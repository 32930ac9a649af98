#include "risnoma/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "risnoma/rng.hpp"

namespace risnoma::forecast {

namespace {

double uniform_in(rng::Stream& stream, double lo, double hi) {
  return lo + stream.uniform_open() * (hi - lo);  // strictly interior
}

std::vector<Vector> to_coordinate_series(const std::vector<EndpointPair>& samples) {
  std::vector<Vector> series(4);
  for (const EndpointPair& s : samples) {
    series[0].push_back(s.init_x);
    series[1].push_back(s.init_y);
    series[2].push_back(s.final_x);
    series[3].push_back(s.final_y);
  }
  return series;
}

Vector flatten(const EndpointPair& s) {
  return {s.init_x, s.init_y, s.final_x, s.final_y};
}

/// Solves X beta = y in the least-squares sense via normal equations with
/// partial pivoting. Throws std::runtime_error when the system is singular.
Vector solve_least_squares(const std::vector<Vector>& rows, const Vector& y) {
  std::size_t n = rows.empty() ? 0 : rows[0].size();
  std::vector<Vector> a(n, Vector(n + 1, 0.0));  // augmented [X'X | X'y]
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) a[i][j] += rows[t][i] * rows[t][j];
      a[i][n] += rows[t][i] * y[t];
    }
  }
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-12)
      throw std::runtime_error(
          "singular regression; consider reducing the ARIMA orders (a,d,b)");
    std::swap(a[col], a[pivot]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      double f = a[r][col] / a[col][col];
      for (std::size_t j = col; j <= n; ++j) a[r][j] -= f * a[col][j];
    }
  }
  Vector beta(n);
  for (std::size_t i = 0; i < n; ++i) beta[i] = a[i][n] / a[i][i];
  return beta;
}

}  // namespace

// ---------------------------------------------------------------------------
// History

std::vector<EndpointPair> HistorySet::train() const {
  return {samples.begin(), samples.begin() + 4 * n_unit};
}
std::vector<EndpointPair> HistorySet::test() const {
  return {samples.begin() + 4 * n_unit, samples.begin() + 5 * n_unit};
}
std::vector<EndpointPair> HistorySet::inference() const {
  return {samples.begin() + 5 * n_unit, samples.begin() + 6 * n_unit};
}

HistorySet generate_history(const Rect& initial_range, const Rect& final_range,
                            int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("forecast.n_unit must be >= 1");
  for (const Rect* r : {&initial_range, &final_range}) {
    if (r->x_lo >= r->x_hi || r->y_lo >= r->y_hi)
      throw std::invalid_argument("forecast: empty generation rectangle");
  }
  HistorySet set;
  set.n_unit = n;
  rng::Stream stream(rng::hash_seed(seed, {0x6869737479ULL}));
  for (int i = 0; i < 6 * n; ++i) {
    EndpointPair pair;
    pair.init_x = uniform_in(stream, initial_range.x_lo, initial_range.x_hi);
    pair.init_y = uniform_in(stream, initial_range.y_lo, initial_range.y_hi);
    pair.final_x = uniform_in(stream, final_range.x_lo, final_range.x_hi);
    pair.final_y = uniform_in(stream, final_range.y_lo, final_range.y_hi);
    set.samples.push_back(pair);
  }
  return set;
}

NormStats norm_stats(const std::vector<EndpointPair>& samples) {
  NormStats stats;
  stats.s_min = samples.at(0).init_x;
  stats.s_max = samples.at(0).init_x;
  for (const EndpointPair& s : samples) {
    for (double v : {s.init_x, s.init_y, s.final_x, s.final_y}) {
      stats.s_min = std::min(stats.s_min, v);
      stats.s_max = std::max(stats.s_max, v);
    }
  }
  if (stats.s_max <= stats.s_min)
    throw std::invalid_argument("norm_stats: s_max must exceed s_min");
  return stats;
}

double normalize(double s, const NormStats& stats) {
  return (s - stats.s_min) / (stats.s_max - stats.s_min);
}

double denormalize(double v, const NormStats& stats) {
  return v * (stats.s_max - stats.s_min) + stats.s_min;
}

// ---------------------------------------------------------------------------
// LSTM

namespace {

GateParams make_gate(std::size_t input, std::size_t hidden, rng::Stream& stream) {
  GateParams g;
  g.wx = Matrix(hidden, input);
  g.wh = Matrix(hidden, hidden);
  g.b.assign(hidden, 0.0);
  double bound = 1.0 / std::sqrt(static_cast<double>(input + hidden));
  for (double& v : g.wx.data) v = stream.uniform(-bound, bound);
  for (double& v : g.wh.data) v = stream.uniform(-bound, bound);
  for (double& v : g.b) v = stream.uniform(-bound, bound);
  return g;
}

Vector gate_preact(const GateParams& g, const Vector& x, const Vector& h_prev) {
  Vector z = g.b;
  for (std::size_t r = 0; r < z.size(); ++r) {
    const double* wx = &g.wx.data[r * g.wx.cols];
    for (std::size_t c = 0; c < x.size(); ++c) z[r] += wx[c] * x[c];
    const double* wh = &g.wh.data[r * g.wh.cols];
    for (std::size_t c = 0; c < h_prev.size(); ++c) z[r] += wh[c] * h_prev[c];
  }
  return z;
}

struct StepCache {
  Vector x, h_prev, c_prev;
  Vector gi, gf, go, gc;  // post-activation gate values
  Vector c, tanh_c, h;
  Vector y;
};

Vector run_step(const LstmCell& cell, const Vector& x, LstmState& state,
                StepCache* cache) {
  std::size_t u = cell.hidden_size;
  Vector zi = gate_preact(cell.input_gate, x, state.hidden);
  Vector zf = gate_preact(cell.forget_gate, x, state.hidden);
  Vector zo = gate_preact(cell.output_gate, x, state.hidden);
  Vector zc = gate_preact(cell.candidate, x, state.hidden);
  Vector gi(u), gf(u), go(u), gc(u), c(u), tanh_c(u), h(u);
  for (std::size_t k = 0; k < u; ++k) {
    gi[k] = 1.0 / (1.0 + std::exp(-zi[k]));
    gf[k] = 1.0 / (1.0 + std::exp(-zf[k]));
    go[k] = 1.0 / (1.0 + std::exp(-zo[k]));
    gc[k] = std::tanh(zc[k]);
    c[k] = gf[k] * state.cell[k] + gi[k] * gc[k];
    tanh_c[k] = std::tanh(c[k]);
    h[k] = go[k] * tanh_c[k];
  }
  Vector y = neural::layer_forward(cell.readout, h);
  if (cache) {
    cache->x = x;
    cache->h_prev = state.hidden;
    cache->c_prev = state.cell;
    cache->gi = gi;
    cache->gf = gf;
    cache->go = go;
    cache->gc = gc;
    cache->c = c;
    cache->tanh_c = tanh_c;
    cache->h = h;
    cache->y = y;
  }
  state.hidden = std::move(h);
  state.cell = std::move(c);
  return y;
}

void ensure_gate_grad(neural::LayerGrad& grad, const GateParams& gate) {
  if (grad.dw.rows == 0) {
    // dw packs [wx | wh] side by side so one LayerGrad covers the gate.
    grad.dw = Matrix(gate.wx.rows, gate.wx.cols + gate.wh.cols);
    grad.db.assign(gate.b.size(), 0.0);
  }
}

void accumulate_gate(neural::LayerGrad& grad, const GateParams& gate,
                     const Vector& dz, const Vector& x, const Vector& h_prev,
                     Vector& dx, Vector& dh_prev) {
  ensure_gate_grad(grad, gate);
  std::size_t nx = gate.wx.cols;
  for (std::size_t r = 0; r < dz.size(); ++r) {
    if (dz[r] == 0.0) continue;
    grad.db[r] += dz[r];
    double* gw = &grad.dw.data[r * grad.dw.cols];
    for (std::size_t c = 0; c < nx; ++c) gw[c] += dz[r] * x[c];
    for (std::size_t c = 0; c < h_prev.size(); ++c)
      gw[nx + c] += dz[r] * h_prev[c];
    const double* wx = &gate.wx.data[r * gate.wx.cols];
    for (std::size_t c = 0; c < nx; ++c) dx[c] += dz[r] * wx[c];
    const double* wh = &gate.wh.data[r * gate.wh.cols];
    for (std::size_t c = 0; c < h_prev.size(); ++c) dh_prev[c] += dz[r] * wh[c];
  }
}

void apply_gate_update(GateParams& gate, const neural::LayerGrad& grad, double lr,
                       const std::string& path) {
  std::size_t nx = gate.wx.cols;
  for (std::size_t r = 0; r < gate.wx.rows; ++r) {
    for (std::size_t c = 0; c < nx; ++c)
      gate.wx.data[r * nx + c] += lr * grad.dw.data[r * grad.dw.cols + c];
    for (std::size_t c = 0; c < gate.wh.cols; ++c)
      gate.wh.data[r * gate.wh.cols + c] +=
          lr * grad.dw.data[r * grad.dw.cols + nx + c];
    gate.b[r] += lr * grad.db[r];
  }
  for (double v : gate.wx.data)
    if (!std::isfinite(v)) throw std::runtime_error("non-finite update at " + path);
}

}  // namespace

LstmState LstmCell::zero_state() const {
  return {Vector(hidden_size, 0.0), Vector(hidden_size, 0.0)};
}

std::size_t LstmCell::param_count() const {
  auto gate_params = [](const GateParams& g) {
    return g.wx.data.size() + g.wh.data.size() + g.b.size();
  };
  return gate_params(input_gate) + gate_params(forget_gate) +
         gate_params(output_gate) + gate_params(candidate) +
         readout.param_count();
}

LstmCell make_lstm(std::size_t input_size, std::size_t hidden_size,
                   std::uint64_t seed) {
  rng::Stream stream(rng::hash_seed(seed, {0x6c73746dULL}));
  LstmCell cell;
  cell.input_size = input_size;
  cell.hidden_size = hidden_size;
  cell.input_gate = make_gate(input_size, hidden_size, stream);
  cell.forget_gate = make_gate(input_size, hidden_size, stream);
  cell.output_gate = make_gate(input_size, hidden_size, stream);
  cell.candidate = make_gate(input_size, hidden_size, stream);
  cell.readout =
      neural::make_layer(hidden_size, input_size, neural::Activation::identity, stream);
  return cell;
}

Vector lstm_step(const LstmCell& cell, const Vector& x, LstmState& state) {
  if (x.size() != cell.input_size)
    throw std::invalid_argument("lstm_step: input dimension mismatch");
  return run_step(cell, x, state, nullptr);
}

std::vector<Vector> lstm_apply(const LstmCell& cell,
                               const std::vector<Vector>& sequence) {
  LstmState state = cell.zero_state();
  std::vector<Vector> out;
  out.reserve(sequence.size());
  for (const Vector& x : sequence) out.push_back(run_step(cell, x, state, nullptr));
  return out;
}

double lstm_loss_and_grad(const LstmCell& cell, const std::vector<Vector>& inputs,
                          const std::vector<Vector>& targets, LstmGrad* grad) {
  if (inputs.size() != targets.size() || inputs.empty())
    throw std::invalid_argument("lstm_loss_and_grad: empty or mismatched data");
  std::size_t steps = inputs.size();
  std::size_t u = cell.hidden_size;
  double inv_count = 1.0 / static_cast<double>(steps * cell.input_size);

  LstmState state = cell.zero_state();
  std::vector<StepCache> caches(steps);
  double loss = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    run_step(cell, inputs[t], state, &caches[t]);
    for (std::size_t k = 0; k < cell.input_size; ++k) {
      double e = caches[t].y[k] - targets[t][k];
      loss += e * e * inv_count;
    }
  }
  if (!grad) return loss;

  Vector dh_next(u, 0.0), dc_next(u, 0.0);
  for (std::size_t t = steps; t-- > 0;) {
    const StepCache& s = caches[t];
    Vector dy(cell.input_size);
    for (std::size_t k = 0; k < cell.input_size; ++k)
      dy[k] = 2.0 * (s.y[k] - targets[t][k]) * inv_count;
    Vector dh = neural::layer_backward(cell.readout, s.h, s.y, dy, grad->readout);
    for (std::size_t k = 0; k < u; ++k) dh[k] += dh_next[k];

    Vector dc(u), dzi(u), dzf(u), dzo(u), dzc(u);
    for (std::size_t k = 0; k < u; ++k) {
      double dgo = dh[k] * s.tanh_c[k];
      dc[k] = dh[k] * s.go[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]) + dc_next[k];
      dzo[k] = dgo * s.go[k] * (1.0 - s.go[k]);
      dzi[k] = dc[k] * s.gc[k] * s.gi[k] * (1.0 - s.gi[k]);
      dzc[k] = dc[k] * s.gi[k] * (1.0 - s.gc[k] * s.gc[k]);
      dzf[k] = dc[k] * s.c_prev[k] * s.gf[k] * (1.0 - s.gf[k]);
    }
    Vector dx(cell.input_size, 0.0);
    Vector dh_prev(u, 0.0);
    accumulate_gate(grad->input_gate, cell.input_gate, dzi, s.x, s.h_prev, dx, dh_prev);
    accumulate_gate(grad->forget_gate, cell.forget_gate, dzf, s.x, s.h_prev, dx, dh_prev);
    accumulate_gate(grad->output_gate, cell.output_gate, dzo, s.x, s.h_prev, dx, dh_prev);
    accumulate_gate(grad->candidate, cell.candidate, dzc, s.x, s.h_prev, dx, dh_prev);
    dh_next = dh_prev;
    for (std::size_t k = 0; k < u; ++k) dc_next[k] = dc[k] * s.gf[k];
  }
  return loss;
}

LstmTrainResult lstm_train(const std::vector<Vector>& sequence,
                           std::size_t hidden_size, const LstmTrainOptions& options,
                           std::uint64_t seed) {
  if (sequence.size() < 2)
    throw std::invalid_argument("lstm_train: training set is empty");
  std::vector<Vector> inputs(sequence.begin(), sequence.end() - 1);
  std::vector<Vector> targets(sequence.begin() + 1, sequence.end());

  LstmTrainResult result;
  result.cell = make_lstm(sequence[0].size(), hidden_size, seed);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    LstmGrad grad;
    double loss = lstm_loss_and_grad(result.cell, inputs, targets, &grad);
    if (!std::isfinite(loss))
      throw std::runtime_error("lstm_train: loss diverged at epoch " +
                               std::to_string(epoch));
    result.loss_per_epoch.push_back(loss);
    if (options.lr <= 0.0) continue;

    // Backtracking keeps the recorded loss non-increasing.
    double lr = options.lr;
    LstmCell saved = result.cell;
    bool stepped = false;
    for (int tries = 0; tries < 24; ++tries) {
      LstmCell trial = saved;
      apply_gate_update(trial.input_gate, grad.input_gate, -lr, "lstm.input_gate");
      apply_gate_update(trial.forget_gate, grad.forget_gate, -lr, "lstm.forget_gate");
      apply_gate_update(trial.output_gate, grad.output_gate, -lr, "lstm.output_gate");
      apply_gate_update(trial.candidate, grad.candidate, -lr, "lstm.candidate");
      neural::LayerGrad descent = grad.readout;
      for (double& v : descent.dw.data) v = -v;
      for (double& v : descent.db) v = -v;
      neural::apply_update(trial.readout, descent, lr, options.l2, "lstm.readout");
      double trial_loss = lstm_loss_and_grad(trial, inputs, targets, nullptr);
      if (std::isfinite(trial_loss) && trial_loss <= loss) {
        result.cell = std::move(trial);
        stepped = true;
        break;
      }
      lr *= 0.5;
    }
    if (!stepped) break;  // no descent direction left at double precision
  }
  if (result.loss_per_epoch.empty()) {
    result.loss_per_epoch.push_back(
        lstm_loss_and_grad(result.cell, inputs, targets, nullptr));
  }
  return result;
}

// ---------------------------------------------------------------------------
// ARIMA

Vector difference(const Vector& series, int d) {
  if (d < 0) throw std::invalid_argument("difference: d must be >= 0");
  if (static_cast<int>(series.size()) <= d)
    throw std::invalid_argument("difference: series too short for order d");
  Vector out = series;
  for (int k = 0; k < d; ++k) {
    Vector next(out.size() - 1);
    for (std::size_t t = 0; t + 1 < out.size(); ++t) next[t] = out[t + 1] - out[t];
    out = std::move(next);
  }
  return out;
}

namespace {

/// Recursive residuals of an ARMA recursion on an already-differenced series
/// (presample values treated as zero).
Vector arma_residuals(const Vector& w, const Vector& kappa, const Vector& phi,
                      double mu) {
  Vector zeta(w.size(), 0.0);
  for (std::size_t t = 0; t < w.size(); ++t) {
    double pred = mu;
    for (std::size_t z = 0; z < kappa.size(); ++z)
      if (t >= z + 1) pred += kappa[z] * w[t - z - 1];
    for (std::size_t z = 0; z < phi.size(); ++z)
      if (t >= z + 1) pred += phi[z] * zeta[t - z - 1];
    zeta[t] = w[t] - pred;
  }
  return zeta;
}

}  // namespace

ArimaModel arima_fit(const Vector& series, int a, int d, int b) {
  if (a < 0 || d < 0 || b < 0)
    throw std::invalid_argument("arima_fit: orders must be >= 0");
  if (static_cast<int>(series.size()) < a + d + b + 1)
    throw std::invalid_argument("arima_fit: series length must be >= a+d+b+1");

  ArimaModel model;
  model.ar_order = a;
  model.diff_order = d;
  model.ma_order = b;
  Vector w = difference(series, d);

  if (a == 0 && b == 0) {
    double sum = 0.0;
    for (double v : w) sum += v;
    model.intercept = w.empty() ? 0.0 : sum / static_cast<double>(w.size());
    return model;
  }

  // Stage 1: long-AR residual estimate when MA terms are present.
  Vector zeta(w.size(), 0.0);
  int p0 = 0;
  if (b > 0) {
    p0 = std::min<int>(std::max(a, b) + 2, static_cast<int>(w.size()) / 2);
    p0 = std::max(p0, 1);
    std::vector<Vector> rows;
    Vector y;
    for (std::size_t t = p0; t < w.size(); ++t) {
      Vector row{1.0};
      for (int z = 1; z <= p0; ++z) row.push_back(w[t - z]);
      rows.push_back(row);
      y.push_back(w[t]);
    }
    Vector beta = solve_least_squares(rows, y);
    for (std::size_t t = p0; t < w.size(); ++t) {
      double pred = beta[0];
      for (int z = 1; z <= p0; ++z) pred += beta[z] * w[t - z];
      zeta[t] = w[t] - pred;
    }
  }

  // Stage 2: joint AR + MA regression.
  int start = std::max(a, b > 0 ? p0 + b : 0);
  std::vector<Vector> rows;
  Vector y;
  for (std::size_t t = start; t < w.size(); ++t) {
    Vector row{1.0};
    for (int z = 1; z <= a; ++z) row.push_back(w[t - z]);
    for (int z = 1; z <= b; ++z) row.push_back(zeta[t - z]);
    rows.push_back(row);
    y.push_back(w[t]);
  }
  if (rows.size() < static_cast<std::size_t>(1 + a + b))
    throw std::invalid_argument("arima_fit: series too short for the orders");
  Vector beta = solve_least_squares(rows, y);
  model.intercept = beta[0];
  model.ar_coeffs.assign(beta.begin() + 1, beta.begin() + 1 + a);
  model.ma_coeffs.assign(beta.begin() + 1 + a, beta.end());
  for (double v : beta)
    if (!std::isfinite(v))
      throw std::runtime_error("arima_fit: non-finite coefficient");
  // The residual recursion feeds fitted residuals back through the MA terms;
  // shrink a non-invertible estimate so that feedback loop stays stable.
  double ma_mass = 0.0;
  for (double v : model.ma_coeffs) ma_mass += std::abs(v);
  if (ma_mass > 0.95) {
    for (double& v : model.ma_coeffs) v *= 0.95 / ma_mass;
  }
  return model;
}

double arima_predict(const ArimaModel& model, const Vector& history) {
  int need = std::max(model.ar_order + model.diff_order, model.ma_order);
  if (static_cast<int>(history.size()) < std::max(need, model.diff_order + 1))
    throw std::invalid_argument("arima_predict: insufficient history");

  // Difference pyramid: levels[k] = (1-L)^k history.
  std::vector<Vector> levels{history};
  for (int k = 0; k < model.diff_order; ++k)
    levels.push_back(difference(levels.back(), 1));
  const Vector& w = levels.back();

  Vector zeta = arma_residuals(w, model.ar_coeffs, model.ma_coeffs, model.intercept);
  double forecast = model.intercept;
  for (std::size_t z = 0; z < model.ar_coeffs.size(); ++z) {
    if (w.size() >= z + 1) forecast += model.ar_coeffs[z] * w[w.size() - 1 - z];
  }
  for (std::size_t z = 0; z < model.ma_coeffs.size(); ++z) {
    if (zeta.size() >= z + 1)
      forecast += model.ma_coeffs[z] * zeta[zeta.size() - 1 - z];
  }
  // Integrate back through the pyramid.
  for (int k = model.diff_order - 1; k >= 0; --k) forecast += levels[k].back();
  return forecast;
}

// ---------------------------------------------------------------------------
// Fusion

FusionWeights critic_weights(const Vector& pred_lstm, const Vector& pred_arima,
                             const Vector& truth) {
  if (pred_lstm.size() != truth.size() || pred_arima.size() != truth.size() ||
      truth.size() < 2)
    throw std::invalid_argument("critic_weights: need equal lengths >= 2");
  std::size_t n = truth.size();
  Vector e1(n), e2(n);
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    e1[i] = pred_lstm[i] - truth[i];
    e2[i] = pred_arima[i] - truth[i];
    m1 += e1[i];
    m2 += e2[i];
  }
  m1 /= n;
  m2 /= n;
  double v1 = 0.0, v2 = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    v1 += (e1[i] - m1) * (e1[i] - m1);
    v2 += (e2[i] - m2) * (e2[i] - m2);
    cov += (e1[i] - m1) * (e2[i] - m2);
  }
  double s1 = std::sqrt(v1 / n), s2 = std::sqrt(v2 / n);
  double r = (s1 > 0.0 && s2 > 0.0) ? cov / (n * s1 * s2) : 0.0;
  double c1 = s1 * (1.0 - r);
  double c2 = s2 * (1.0 - r);
  FusionWeights w;
  if (c1 + c2 <= 0.0) return w;  // both degenerate: even split
  w.w_lstm = c1 / (c1 + c2);
  w.w_arima = c2 / (c1 + c2);
  return w;
}

double fuse(double lstm_value, double arima_value, const FusionWeights& w) {
  return w.w_lstm * lstm_value + w.w_arima * arima_value;
}

GateResult rmse_gate(const Vector& pred, const Vector& truth, double threshold,
                     bool verbatim) {
  if (pred.size() != truth.size() || pred.empty())
    throw std::invalid_argument("rmse_gate: need equal nonempty lengths");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double e = pred[i] - truth[i];
    acc += verbatim ? std::abs(e) : e * e;
  }
  GateResult result;
  result.score = std::sqrt(acc / static_cast<double>(pred.size()));
  result.accept = result.score <= threshold;
  return result;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

/// Fraction of corridor sample points (straight line initial->final at robot
/// height) with line of sight to `eye`.
double corridor_los_fraction(const EndpointPair& pair, const geom::Vec3& eye,
                             const GridMap& map) {
  geom::Vec3 a{pair.init_x, pair.init_y, map.robot_height};
  geom::Vec3 b{pair.final_x, pair.final_y, map.robot_height};
  int steps = std::max(2, static_cast<int>(geom::distance_xy(a, b) / (map.delta * 0.5)));
  int visible = 0;
  for (int k = 0; k <= steps; ++k) {
    double t = static_cast<double>(k) / steps;
    geom::Vec3 p{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), map.robot_height};
    if (!gridworld::segment_blocked(eye, p, map)) ++visible;
  }
  return static_cast<double>(visible) / (steps + 1);
}

}  // namespace

ForecastReport run_forecast(const ForecastConfig& config, const GridMap& map,
                            std::uint64_t seed) {
  std::string last_failure;
  for (int attempt = 0; attempt < config.retry_cap; ++attempt) {
    std::uint64_t attempt_seed =
        rng::hash_seed(seed, {0xf0cafeULL, static_cast<std::uint64_t>(attempt)});
    HistorySet history = generate_history(config.initial_range, config.final_range,
                                          config.n_unit, attempt_seed);
    NormStats stats = norm_stats(history.samples);

    std::vector<Vector> normalized;
    for (const EndpointPair& s : history.samples) {
      Vector v = flatten(s);
      for (double& x : v) x = normalize(x, stats);
      normalized.push_back(v);
    }
    int n = config.n_unit;

    // LSTM branch: train on the first 4N samples, then run the recurrence
    // over the whole sequence; the output after feeding sample t predicts
    // sample t+1.
    std::vector<Vector> train_seq(normalized.begin(), normalized.begin() + 4 * n);
    LstmTrainResult trained =
        lstm_train(train_seq, config.lstm_hidden, config.lstm, attempt_seed);
    std::vector<Vector> lstm_out = lstm_apply(trained.cell, normalized);

    // ARIMA branch: per-coordinate models fit on the train split, one-step
    // predictions over expanding true history.
    std::vector<Vector> coord = to_coordinate_series(history.samples);
    std::vector<Vector> coord_norm(4);
    for (int c = 0; c < 4; ++c) {
      for (double v : coord[c]) coord_norm[c].push_back(normalize(v, stats));
    }
    std::vector<ArimaModel> models;
    bool fit_ok = true;
    try {
      for (int c = 0; c < 4; ++c) {
        Vector train_c(coord_norm[c].begin(), coord_norm[c].begin() + 4 * n);
        models.push_back(
            arima_fit(train_c, config.arima_a, config.arima_d, config.arima_b));
      }
    } catch (const std::exception& e) {
      last_failure = e.what();
      fit_ok = false;
    }
    if (!fit_ok) continue;

    auto arima_one = [&](int c, int upto) {
      Vector hist(coord_norm[c].begin(), coord_norm[c].begin() + upto);
      return arima_predict(models[c], hist);
    };

    // Test-region predictions (meters) against truth.
    Vector test_lstm, test_arima, test_truth;
    bool finite = true;
    for (int k = 0; k < n; ++k) {
      int target = 4 * n + k;  // sample index being predicted
      for (int c = 0; c < 4; ++c) {
        test_lstm.push_back(denormalize(lstm_out[target - 1][c], stats));
        test_arima.push_back(denormalize(arima_one(c, target), stats));
        test_truth.push_back(flatten(history.samples[target])[c]);
        finite &= std::isfinite(test_lstm.back()) && std::isfinite(test_arima.back());
      }
    }
    if (!finite) {
      last_failure = "non-finite branch prediction";
      continue;
    }

    ForecastReport report;
    report.attempts = attempt + 1;
    report.weights = critic_weights(test_lstm, test_arima, test_truth);
    Vector fused(test_truth.size());
    for (std::size_t i = 0; i < fused.size(); ++i)
      fused[i] = fuse(test_lstm[i], test_arima[i], report.weights);
    GateResult gate = rmse_gate(fused, test_truth, config.rmse_threshold,
                                config.rmse_verbatim);
    report.rmse = gate.score;
    report.rmse_lstm = rmse_gate(test_lstm, test_truth, 0.0, config.rmse_verbatim).score;
    report.rmse_arima =
        rmse_gate(test_arima, test_truth, 0.0, config.rmse_verbatim).score;
    report.accepted = gate.accept;
    if (!gate.accept) {
      last_failure = "gate score " + std::to_string(gate.score) +
                     " above threshold " + std::to_string(config.rmse_threshold);
      continue;
    }

    // Inference-region predictions become the endpoint candidate set.
    for (int k = 0; k < n; ++k) {
      int input = 5 * n + k;  // feed the inference samples
      CandidateSummary cand;
      double coords[4];
      for (int c = 0; c < 4; ++c) {
        double l = denormalize(lstm_out[input][c], stats);
        double a = denormalize(arima_one(c, input + 1), stats);
        coords[c] = fuse(l, a, report.weights);
      }
      cand.predicted = {coords[0], coords[1], coords[2], coords[3]};
      auto [ic, ir] = map.snap_to_cell(cand.predicted.init_x, cand.predicted.init_y);
      auto [fc, fr] = map.snap_to_cell(cand.predicted.final_x, cand.predicted.final_y);
      geom::Vec3 icenter = map.cell_center(ic, ir);
      geom::Vec3 fcenter = map.cell_center(fc, fr);
      cand.snapped = {icenter.x, icenter.y, fcenter.x, fcenter.y};
      cand.los_frac_ap = corridor_los_fraction(cand.snapped, map.ap_pos, map);
      cand.los_frac_ris = corridor_los_fraction(cand.snapped, map.ris_pos, map);
      report.candidates.push_back(cand);
    }
    return report;
  }
  throw std::runtime_error("forecast: gate rejected after " +
                           std::to_string(config.retry_cap) +
                           " attempts (last: " + last_failure + ")");
}

}  // namespace risnoma::forecast
