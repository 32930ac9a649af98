#include "risnoma/agents.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace risnoma::agents {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::double_dqn: return "double";
    case Variant::dueling: return "dueling";
    case Variant::d3qn: return "d3qn";
  }
  return "d3qn";
}

Variant variant_from_string(const std::string& name) {
  if (name == "double") return Variant::double_dqn;
  if (name == "dueling") return Variant::dueling;
  if (name == "d3qn") return Variant::d3qn;
  throw std::invalid_argument("agent.variant must be double|dueling|d3qn");
}

Vector StateFeatures::featurize(double x_max, double y_max, double budget) const {
  Vector v;
  v.reserve(phases.size() + 3 * positions.size());
  for (double theta : phases) v.push_back(theta / kTwoPi);
  for (const auto& [x, y] : positions) {
    v.push_back(x / x_max);
    v.push_back(y / y_max);
  }
  for (double p : powers) v.push_back(p / budget);
  return v;
}

std::vector<int> JointAction::branch_choices(const BranchLayout& layout) const {
  std::vector<int> out;
  out.reserve(layout.branches());
  out.push_back(phase_index);
  for (int m : moves) out.push_back(m);
  for (int p : power_levels) out.push_back(p);
  return out;
}

std::size_t FactoredActions::choice_count() const {
  std::size_t n = 0;
  for (const auto& mask : masks) n += mask.size();
  return n;
}

bool FactoredActions::any_valid(int branch) const {
  for (bool v : masks[branch])
    if (v) return true;
  return false;
}

std::vector<int> distance_field(const gridworld::GridMap& map,
                                std::pair<int, int> goal) {
  std::vector<int> field(map.cell_count(), kUnreachable);
  if (!map.cell_valid(goal.first, goal.second)) return field;
  std::deque<std::pair<int, int>> queue{goal};
  field[map.cell_id(goal.first, goal.second)] = 0;
  while (!queue.empty()) {
    auto [c, r] = queue.front();
    queue.pop_front();
    int d = field[map.cell_id(c, r)];
    const int dc[4] = {1, -1, 0, 0};
    const int dr[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      int nc = c + dc[k], nr = r + dr[k];
      if (!map.cell_valid(nc, nr)) continue;
      long id = map.cell_id(nc, nr);
      if (field[id] <= d + 1) continue;
      field[id] = d + 1;
      queue.emplace_back(nc, nr);
    }
  }
  return field;
}

std::vector<bool> move_mask(const ActionContext& ctx, std::size_t robot,
                            const std::vector<int>& field) {
  const gridworld::GridMap& map = *ctx.map;
  const gridworld::RobotPose& pose = ctx.poses[robot];
  std::vector<bool> mask(gridworld::kMoveCount, false);
  const int dc[5] = {1, -1, 0, 0, 0};   // right,left,still,up,down
  const int dr[5] = {0, 0, 0, 1, -1};
  for (int m = 0; m < gridworld::kMoveCount; ++m) {
    int c = pose.col + dc[m], r = pose.row + dr[m];
    if (!map.cell_valid(c, r)) continue;
    bool occupied = false;
    for (std::size_t j = 0; j < ctx.poses.size(); ++j) {
      if (j != robot && ctx.poses[j].col == c && ctx.poses[j].row == r) {
        occupied = true;
        break;
      }
    }
    if (occupied) continue;
    if (field[map.cell_id(c, r)] > ctx.remaining_after) continue;
    mask[m] = true;
  }
  return mask;
}

FactoredActions enumerate_actions(const ActionContext& ctx,
                                  const std::vector<std::vector<int>>& fields,
                                  const BranchLayout& layout) {
  FactoredActions actions;
  actions.layout = layout;
  actions.masks.resize(layout.branches());
  actions.masks[0].assign(layout.phase_choices, true);
  for (int i = 0; i < layout.robots; ++i) {
    std::vector<bool> mask = move_mask(ctx, i, fields[i]);
    if (layout.robots == 1)
      mask[static_cast<int>(gridworld::Move::still)] = false;
    actions.masks[layout.move_branch(i)] = mask;
  }
  for (int i = 0; i < layout.robots; ++i)
    actions.masks[layout.power_branch(i)].assign(layout.power_levels, true);
  for (int b = 0; b < layout.branches(); ++b) {
    if (!actions.any_valid(b))
      throw std::runtime_error("enumerate_actions: empty action branch " +
                               std::to_string(b));
  }
  return actions;
}

double reward(double prev_sum_rate, double next_sum_rate,
              const std::vector<double>& next_rates, double qos_threshold,
              double qos_penalty, bool collision) {
  if (collision) return -10.0;
  double r = next_sum_rate - prev_sum_rate;
  for (double rate : next_rates)
    if (rate < qos_threshold) r -= qos_penalty;
  return r;
}

std::size_t epsilon_greedy(const Vector& qvals, double eps, rng::Stream& stream,
                           const std::vector<bool>* valid) {
  if (qvals.empty()) throw std::invalid_argument("epsilon_greedy: empty Q vector");
  auto is_valid = [&](std::size_t i) { return !valid || (*valid)[i]; };
  if (eps > 0.0 && stream.uniform() < eps) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < qvals.size(); ++i)
      if (is_valid(i)) pool.push_back(i);
    if (pool.empty()) throw std::runtime_error("epsilon_greedy: no valid action");
    return pool[stream.below(pool.size())];
  }
  std::size_t best = qvals.size();
  for (std::size_t i = 0; i < qvals.size(); ++i) {
    if (!is_valid(i)) continue;
    if (best == qvals.size() || qvals[i] > qvals[best]) best = i;
  }
  if (best == qvals.size()) throw std::runtime_error("epsilon_greedy: no valid action");
  return best;
}

Vector dueling_q(double value, const Vector& advantage) {
  double mean = 0.0;
  for (double a : advantage) mean += a;
  mean /= static_cast<double>(advantage.size());
  Vector q(advantage.size());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = value + advantage[i] - mean;
  return q;
}

namespace {

std::size_t argmax_valid(const Vector& q, const std::vector<bool>* valid) {
  std::size_t best = q.size();
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (valid && !(*valid)[i]) continue;
    if (best == q.size() || q[i] > q[best]) best = i;
  }
  if (best == q.size()) throw std::runtime_error("argmax over empty action set");
  return best;
}

}  // namespace

double double_dqn_target(double reward_value, bool terminal, double gamma,
                         const Vector& q_next_current, const Vector& q_next_target,
                         const std::vector<bool>* valid) {
  if (terminal) return reward_value;
  std::size_t pick = argmax_valid(q_next_current, valid);
  return reward_value + gamma * q_next_target[pick];
}

double d3qn_target(double reward_value, bool terminal, double gamma,
                   const Vector& q_next_current, double value_target,
                   const Vector& advantage_target, const std::vector<bool>* valid) {
  if (terminal) return reward_value;
  Vector q_target = dueling_q(value_target, advantage_target);
  std::size_t pick = argmax_valid(q_next_current, valid);
  return reward_value + gamma * q_target[pick];
}

// ---------------------------------------------------------------------------
// Replay

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be > 0");
  storage_.reserve(capacity);
}

void ReplayBuffer::store(Transition t) {
  t.priority = max_priority_;
  if (storage_.size() < capacity_) {
    storage_.push_back(std::move(t));
  } else {
    storage_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

ReplayBuffer::Batch ReplayBuffer::sample(std::size_t batch, double omega,
                                         double beta, rng::Stream& stream) const {
  if (storage_.empty()) throw std::runtime_error("replay sample: buffer empty");
  std::vector<double> cumulative(storage_.size());
  double total = 0.0;
  double min_prob_mass = 0.0;
  for (std::size_t i = 0; i < storage_.size(); ++i) {
    double mass = std::pow(storage_[i].priority, omega);
    total += mass;
    cumulative[i] = total;
    min_prob_mass = (i == 0) ? mass : std::min(min_prob_mass, mass);
  }
  double n = static_cast<double>(storage_.size());
  double max_weight = std::pow(n * (min_prob_mass / total), -beta);

  Batch out;
  out.indices.reserve(batch);
  out.weights.reserve(batch);
  for (std::size_t k = 0; k < batch; ++k) {  // with replacement
    double u = stream.uniform() * total;
    std::size_t idx =
        std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin();
    idx = std::min(idx, storage_.size() - 1);
    out.indices.push_back(idx);
    double mass = std::pow(storage_[idx].priority, omega);
    double weight = std::pow(n * (mass / total), -beta);
    out.weights.push_back(weight / max_weight);
  }
  return out;
}

void ReplayBuffer::update_priority(std::size_t index, double priority) {
  if (priority <= 0.0)
    throw std::invalid_argument("replay priority must stay positive");
  storage_[index].priority = priority;
  max_priority_ = std::max(max_priority_, priority);
}

// ---------------------------------------------------------------------------
// Networks

Vector QNetwork::q_values(const Vector& x, const BranchLayout& layout) const {
  Vector hidden = trunk.forward(x);
  Vector adv = neural::layer_forward(advantage, hidden);
  if (!dueling) return adv;
  double v = neural::layer_forward(value, hidden)[0];
  Vector q(adv.size());
  for (int b = 0; b < layout.branches(); ++b) {
    int off = layout.offset(b), n = layout.size(b);
    Vector slice(adv.begin() + off, adv.begin() + off + n);
    Vector qb = dueling_q(v, slice);
    std::copy(qb.begin(), qb.end(), q.begin() + off);
  }
  return q;
}

std::size_t QNetwork::param_count() const {
  std::size_t n = trunk.param_count() + advantage.param_count();
  if (dueling) n += value.param_count();
  return n;
}

QNetwork make_q_network(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                        const BranchLayout& layout, bool dueling,
                        std::uint64_t seed) {
  if (hidden.empty()) throw std::invalid_argument("q network needs hidden layers");
  rng::Stream stream(rng::hash_seed(seed, {0x716e6574ULL}));
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  std::vector<neural::Activation> acts(hidden.size(), neural::Activation::relu);
  QNetwork net;
  net.trunk = neural::DenseNet(dims, acts, stream);
  net.advantage = neural::make_layer(hidden.back(), layout.total(),
                                     neural::Activation::identity, stream);
  net.value =
      neural::make_layer(hidden.back(), 1, neural::Activation::identity, stream);
  net.dueling = dueling;
  return net;
}

QNetworkPair make_pair(Variant variant, std::size_t input_dim,
                       const std::vector<std::size_t>& hidden,
                       const BranchLayout& layout, int sync_period,
                       std::uint64_t seed) {
  if (sync_period < 1) throw std::invalid_argument("agent.target_sync must be >= 1");
  QNetworkPair pair;
  pair.variant = variant;
  pair.layout = layout;
  bool dueling = variant != Variant::double_dqn;
  pair.current = make_q_network(input_dim, hidden, layout, dueling,
                                rng::hash_seed(seed, {0xc0}));
  pair.target = make_q_network(input_dim, hidden, layout, dueling,
                               rng::hash_seed(seed, {0x7a}));
  pair.sync_period = sync_period;
  return pair;
}

void sync_target(QNetworkPair& pair) { pair.target = pair.current; }

bool sync_due(long episode_1based, int period) {
  return episode_1based % period == 1 % period;
}

std::vector<double> branch_targets(const QNetworkPair& pair, const Transition& t,
                                   double gamma) {
  const BranchLayout& layout = pair.layout;
  std::vector<double> targets(layout.branches(), t.reward);
  if (t.terminal || gamma == 0.0) return targets;

  Vector q_cur = pair.current.q_values(t.next_features, layout);
  Vector q_tgt = pair.target.q_values(t.next_features, layout);
  for (int b = 0; b < layout.branches(); ++b) {
    int off = layout.offset(b), n = layout.size(b);
    Vector cur(q_cur.begin() + off, q_cur.begin() + off + n);
    Vector tgt(q_tgt.begin() + off, q_tgt.begin() + off + n);
    const std::vector<bool>* mask =
        t.next_masks.empty() ? nullptr : &t.next_masks[b];
    const Vector& selector = pair.variant == Variant::dueling ? tgt : cur;
    std::size_t pick = argmax_valid(selector, mask);
    targets[b] = t.reward + gamma * tgt[pick];
  }
  return targets;
}

namespace {

struct QCache {
  neural::DenseNet::Cache trunk;
  Vector hidden;
  Vector adv;
  Vector value_out;
  Vector q;
};

Vector q_forward_cached(const QNetwork& net, const Vector& x,
                        const BranchLayout& layout, QCache& cache) {
  cache.hidden = net.trunk.forward_cached(x, cache.trunk);
  cache.adv = neural::layer_forward(net.advantage, cache.hidden);
  if (!net.dueling) {
    cache.q = cache.adv;
    return cache.q;
  }
  cache.value_out = neural::layer_forward(net.value, cache.hidden);
  cache.q.assign(cache.adv.size(), 0.0);
  for (int b = 0; b < layout.branches(); ++b) {
    int off = layout.offset(b), n = layout.size(b);
    Vector slice(cache.adv.begin() + off, cache.adv.begin() + off + n);
    Vector qb = dueling_q(cache.value_out[0], slice);
    std::copy(qb.begin(), qb.end(), cache.q.begin() + off);
  }
  return cache.q;
}

struct QTape {
  neural::GradientTape trunk;
  neural::LayerGrad advantage;
  neural::LayerGrad value;
};

QTape zero_tape(const QNetwork& net) {
  QTape tape;
  tape.trunk = net.trunk.zero_tape();
  tape.advantage.dw = neural::Matrix(net.advantage.out_dim(), net.advantage.in_dim());
  tape.advantage.db.assign(net.advantage.out_dim(), 0.0);
  tape.value.dw = neural::Matrix(net.value.out_dim(), net.value.in_dim());
  tape.value.db.assign(net.value.out_dim(), 0.0);
  return tape;
}

/// Accumulates the gradient of sum_b upstream_b * Q(s, a_b) into the tape.
void q_backward(const QNetwork& net, const BranchLayout& layout, const QCache& cache,
                const std::vector<int>& actions,
                const std::vector<double>& upstream_per_branch, QTape& tape) {
  Vector up_adv(net.advantage.out_dim(), 0.0);
  double up_value = 0.0;
  for (int b = 0; b < layout.branches(); ++b) {
    double u = upstream_per_branch[b];
    if (u == 0.0) continue;
    int off = layout.offset(b), n = layout.size(b);
    int chosen = off + actions[b];
    if (!net.dueling) {
      up_adv[chosen] += u;
      continue;
    }
    up_value += u;
    double centering = u / static_cast<double>(n);
    for (int j = 0; j < n; ++j) up_adv[off + j] -= centering;
    up_adv[chosen] += u;
  }
  Vector dh = neural::layer_backward(net.advantage, cache.hidden, cache.adv, up_adv,
                                     tape.advantage);
  if (net.dueling && up_value != 0.0) {
    Vector dv = neural::layer_backward(net.value, cache.hidden, cache.value_out,
                                       {up_value}, tape.value);
    for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += dv[i];
  }
  net.trunk.backward(cache.trunk, dh, tape.trunk);
}

void apply_tape(QNetwork& net, const QTape& tape, double lr, double l2) {
  net.trunk.sgd_step(tape.trunk, lr, l2);
  neural::apply_update(net.advantage, tape.advantage, lr, l2, "advantage");
  if (net.dueling) neural::apply_update(net.value, tape.value, lr, l2, "value");
}

void save_layer(std::ostream& out, const neural::DenseLayer& layer) {
  out << "layer " << layer.in_dim() << " " << layer.out_dim() << " "
      << neural::to_string(layer.act) << "\n";
  out.precision(17);
  for (double v : layer.w.data) out << v << "\n";
  for (double v : layer.b) out << v << "\n";
}

neural::DenseLayer load_layer(std::istream& in) {
  std::string word, act;
  std::size_t ind = 0, outd = 0;
  in >> word >> ind >> outd >> act;
  if (word != "layer" || !in)
    throw std::runtime_error("checkpoint: malformed head layer");
  neural::DenseLayer layer;
  layer.w = neural::Matrix(outd, ind);
  layer.b.assign(outd, 0.0);
  layer.act = neural::activation_from_string(act);
  for (double& v : layer.w.data) in >> v;
  for (double& v : layer.b) in >> v;
  return layer;
}

void save_qnet(std::ostream& out, const QNetwork& net) {
  out << "dueling " << (net.dueling ? 1 : 0) << "\n";
  net.trunk.save(out);
  save_layer(out, net.advantage);
  if (net.dueling) save_layer(out, net.value);
}

QNetwork load_qnet(std::istream& in) {
  std::string word;
  int dueling = 0;
  in >> word >> dueling;
  if (word != "dueling") throw std::runtime_error("checkpoint: missing dueling flag");
  QNetwork net;
  net.dueling = dueling != 0;
  net.trunk = neural::DenseNet::load(in);
  net.advantage = load_layer(in);
  if (net.dueling) net.value = load_layer(in);
  return net;
}

}  // namespace

void QNetworkPair::save(std::ostream& out) const {
  out << "risnoma-qpair v1\n";
  out << "variant " << to_string(variant) << "\n";
  out << "layout " << layout.phase_choices << " " << layout.robots << " "
      << layout.power_levels << "\n";
  out << "sync " << sync_period << "\n";
  save_qnet(out, current);
  save_qnet(out, target);
}

QNetworkPair QNetworkPair::load(std::istream& in) {
  std::string magic, version, word, name;
  in >> magic >> version;
  if (magic != "risnoma-qpair" || version != "v1")
    throw std::runtime_error("checkpoint: unrecognized pair header");
  QNetworkPair pair;
  in >> word >> name;
  pair.variant = variant_from_string(name);
  in >> word >> pair.layout.phase_choices >> pair.layout.robots >>
      pair.layout.power_levels;
  in >> word >> pair.sync_period;
  pair.current = load_qnet(in);
  pair.target = load_qnet(in);
  if (!in) throw std::runtime_error("checkpoint: truncated pair");
  if (static_cast<int>(pair.current.advantage.out_dim()) != pair.layout.total())
    throw std::runtime_error("checkpoint: head shape does not match layout");
  return pair;
}

LearnStats learn_step(QNetworkPair& pair, ReplayBuffer& buffer,
                      const ReplayBuffer::Batch& batch, double lr, double gamma,
                      double l2, double priority_eps) {
  if (batch.indices.empty()) throw std::invalid_argument("learn_step: empty batch");
  const BranchLayout& layout = pair.layout;
  int branches = layout.branches();
  double scale = 1.0 / static_cast<double>(batch.indices.size() * branches);

  QTape tape = zero_tape(pair.current);
  LearnStats stats;
  for (std::size_t k = 0; k < batch.indices.size(); ++k) {
    const Transition& t = buffer.at(batch.indices[k]);
    std::vector<double> targets = branch_targets(pair, t, gamma);

    QCache cache;
    q_forward_cached(pair.current, t.features, layout, cache);
    std::vector<double> upstream(branches, 0.0);
    double abs_td = 0.0;
    for (int b = 0; b < branches; ++b) {
      double q_sa = cache.q[layout.offset(b) + t.action[b]];
      double td = targets[b] - q_sa;
      stats.mean_loss += td * td * scale;
      upstream[b] = batch.weights[k] * td * scale;
      abs_td += std::abs(td) / branches;
    }
    q_backward(pair.current, layout, cache, t.action, upstream, tape);
    stats.new_priorities.push_back(abs_td + priority_eps);
  }
  if (!std::isfinite(stats.mean_loss))
    throw std::runtime_error("learn_step: non-finite loss in sampled batch");
  apply_tape(pair.current, tape, lr, l2);
  for (std::size_t k = 0; k < batch.indices.size(); ++k)
    buffer.update_priority(batch.indices[k], stats.new_priorities[k]);
  return stats;
}

}  // namespace risnoma::agents
