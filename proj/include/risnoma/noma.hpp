#pragma once

#include <cstddef>
#include <vector>

namespace risnoma::noma {

/// SIC decoding order. decode_sequence lists robot indices (0-based) in the
/// order they are decoded; position(i) == 0 means robot i is decoded first.
struct DecodingOrder {
  std::vector<std::size_t> decode_sequence;

  static DecodingOrder identity(std::size_t robots);
  std::size_t position(std::size_t robot) const;
  bool valid() const;
};

struct PowerAllocation {
  std::vector<double> p;  // watts per robot
  double budget = 0.0;    // total power P

  double total() const;
  bool within_budget() const { return total() <= budget + 1e-12; }
};

struct RateReport {
  std::vector<double> per_robot_rate;  // bits/s/Hz
  double sum_rate = 0.0;
  bool sic_feasible = true;
  std::vector<bool> qos_met;
};

/// SINR of robot i: |H_i|^2 p_i over the interference of robots decoded
/// after i plus noise.
double sinr(std::size_t i, const DecodingOrder& order,
            const std::vector<double>& gains, const PowerAllocation& alloc,
            double noise);

/// Shannon spectral efficiency log2(1 + sinr).
double rate(double sinr_value);

/// Pairwise SIC rate-fairness condition for O(i) < O(j): robot i's signal
/// must be decodable at robot j at least as well as at robot i.
bool sic_fairness_ok(std::size_t i, std::size_t j, const DecodingOrder& order,
                     const std::vector<double>& gains,
                     const PowerAllocation& alloc, double noise);

bool order_feasible(const DecodingOrder& order, const std::vector<double>& gains,
                    const PowerAllocation& alloc, double noise);

RateReport evaluate(const DecodingOrder& order, const std::vector<double>& gains,
                    const PowerAllocation& alloc, double noise,
                    double qos_threshold);

struct OrderSearchResult {
  DecodingOrder order;
  double sum_rate = 0.0;
  bool feasible = true;  // false: no order passed the fairness check and the
                         // unconstrained best is reported instead
};

/// Exhaustive search over all X! decoding orders. Infeasible orders are
/// discarded; ties break toward the lexicographically smallest sequence.
/// Throws when the robot count exceeds `cap`.
OrderSearchResult best_order(const std::vector<double>& gains,
                             const PowerAllocation& alloc, double noise,
                             double qos_threshold = 0.0, std::size_t cap = 6);

/// Orthogonal baseline: equal time slices with per-slot power scaling,
/// R_i = (1/X) log2(1 + X p_i |H_i|^2 / sigma^2).
RateReport oma_rate(const std::vector<double>& gains, const PowerAllocation& alloc,
                    double noise, double qos_threshold = 0.0);

}  // namespace risnoma::noma
