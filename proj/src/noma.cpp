#include "risnoma/noma.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace risnoma::noma {

DecodingOrder DecodingOrder::identity(std::size_t robots) {
  DecodingOrder order;
  order.decode_sequence.resize(robots);
  std::iota(order.decode_sequence.begin(), order.decode_sequence.end(), 0);
  return order;
}

std::size_t DecodingOrder::position(std::size_t robot) const {
  for (std::size_t pos = 0; pos < decode_sequence.size(); ++pos) {
    if (decode_sequence[pos] == robot) return pos;
  }
  throw std::out_of_range("DecodingOrder: robot not in sequence");
}

bool DecodingOrder::valid() const {
  std::vector<bool> seen(decode_sequence.size(), false);
  for (std::size_t r : decode_sequence) {
    if (r >= decode_sequence.size() || seen[r]) return false;
    seen[r] = true;
  }
  return true;
}

double PowerAllocation::total() const {
  return std::accumulate(p.begin(), p.end(), 0.0);
}

namespace {

// Sum of powers of robots decoded strictly after position `pos`.
double later_power(const DecodingOrder& order, const PowerAllocation& alloc,
                   std::size_t pos) {
  double sum = 0.0;
  for (std::size_t k = pos + 1; k < order.decode_sequence.size(); ++k)
    sum += alloc.p[order.decode_sequence[k]];
  return sum;
}

}  // namespace

double sinr(std::size_t i, const DecodingOrder& order,
            const std::vector<double>& gains, const PowerAllocation& alloc,
            double noise) {
  double interference = gains[i] * later_power(order, alloc, order.position(i));
  return gains[i] * alloc.p[i] / (interference + noise);
}

double rate(double sinr_value) { return std::log2(1.0 + sinr_value); }

bool sic_fairness_ok(std::size_t i, std::size_t j, const DecodingOrder& order,
                     const std::vector<double>& gains,
                     const PowerAllocation& alloc, double noise) {
  std::size_t pos_i = order.position(i);
  if (pos_i >= order.position(j))
    throw std::invalid_argument("sic_fairness_ok requires O(i) < O(j)");
  // Robot i's signal observed at robot j versus at robot i, both against the
  // power of everything decoded after i.
  double later = later_power(order, alloc, pos_i);
  double at_j = rate(gains[j] * alloc.p[i] / (gains[j] * later + noise));
  double at_i = rate(gains[i] * alloc.p[i] / (gains[i] * later + noise));
  return at_j >= at_i;
}

bool order_feasible(const DecodingOrder& order, const std::vector<double>& gains,
                    const PowerAllocation& alloc, double noise) {
  std::size_t n = order.decode_sequence.size();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (!sic_fairness_ok(order.decode_sequence[a], order.decode_sequence[b],
                           order, gains, alloc, noise))
        return false;
    }
  }
  return true;
}

RateReport evaluate(const DecodingOrder& order, const std::vector<double>& gains,
                    const PowerAllocation& alloc, double noise,
                    double qos_threshold) {
  RateReport report;
  report.per_robot_rate.resize(gains.size());
  report.qos_met.resize(gains.size());
  for (std::size_t i = 0; i < gains.size(); ++i) {
    report.per_robot_rate[i] = rate(sinr(i, order, gains, alloc, noise));
    report.sum_rate += report.per_robot_rate[i];
    report.qos_met[i] = report.per_robot_rate[i] >= qos_threshold;
  }
  report.sic_feasible = order_feasible(order, gains, alloc, noise);
  return report;
}

OrderSearchResult best_order(const std::vector<double>& gains,
                             const PowerAllocation& alloc, double noise,
                             double qos_threshold, std::size_t cap) {
  std::size_t n = gains.size();
  if (n == 0) throw std::invalid_argument("best_order: no robots");
  if (n > cap)
    throw std::invalid_argument("best_order: robot count exceeds the X! cap");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);

  bool have_feasible = false;
  DecodingOrder best_feasible, best_any;
  double best_feasible_rate = -1.0, best_any_rate = -1.0;

  do {
    DecodingOrder order{perm};
    RateReport report = evaluate(order, gains, alloc, noise, qos_threshold);
    if (report.sum_rate > best_any_rate) {
      best_any_rate = report.sum_rate;
      best_any = order;
    }
    if (report.sic_feasible && report.sum_rate > best_feasible_rate) {
      best_feasible_rate = report.sum_rate;
      best_feasible = order;
      have_feasible = true;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  // next_permutation visits sequences in lexicographic order, so the first
  // maximum seen is already the lexicographically smallest tie.

  OrderSearchResult result;
  if (have_feasible) {
    result.order = best_feasible;
    result.sum_rate = best_feasible_rate;
    result.feasible = true;
  } else {
    result.order = best_any;
    result.sum_rate = best_any_rate;
    result.feasible = false;
  }
  return result;
}

RateReport oma_rate(const std::vector<double>& gains, const PowerAllocation& alloc,
                    double noise, double qos_threshold) {
  RateReport report;
  double x = static_cast<double>(gains.size());
  report.per_robot_rate.resize(gains.size());
  report.qos_met.resize(gains.size());
  for (std::size_t i = 0; i < gains.size(); ++i) {
    double sinr_value = gains[i] * alloc.p[i] * x / noise;
    report.per_robot_rate[i] = rate(sinr_value) / x;
    report.sum_rate += report.per_robot_rate[i];
    report.qos_met[i] = report.per_robot_rate[i] >= qos_threshold;
  }
  return report;
}

}  // namespace risnoma::noma
