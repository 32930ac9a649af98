#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "risnoma/gridworld.hpp"
#include "risnoma/rng.hpp"

namespace risnoma::channel {

using Complex = std::complex<double>;
using CVector = std::vector<Complex>;
using geom::Vec3;
using gridworld::GridMap;

struct PathLossParams {
  double c_ref = 1e-3;       // linear power gain at 1 m (-30 dB)
  double gamma_ap_robot = 3.5;
  double gamma_ris_robot = 2.8;
  double gamma_ap_ris = 2.2;
};

/// Distance-reference linear power gain c_ref * d^-gamma. Throws on d <= 0.
double path_loss(double d, double gamma, const PathLossParams& params);

/// Blockage-dependent Rician factor: 0 when the tx->rx segment crosses an
/// obstacle, a_bar otherwise.
double rician_factor(const Vec3& tx, const Vec3& rx, const GridMap& map, double a_bar);

enum class NlosMode {
  realization,  // NLOS drawn per coherence block from the seeded stream
  expected,     // deterministic: LOS direction at full combined power
};

/// One Rician link draw. The unit-power fading mix
///   sqrt(alpha/(alpha+1)) * u_LOS + sqrt(1/(alpha+1)) * u_NLOS
/// is scaled to carry `power_gain` of average power per entry; u_LOS has
/// entries e^{j*kappa*m} and u_NLOS is circular complex Gaussian with unit
/// variance per entry. In NlosMode::expected the zero-mean term is dropped
/// and its power folded into the LOS direction (blocked links become zero).
CVector draw_link(double power_gain, double alpha, std::size_t dim, double kappa,
                  rng::Stream& stream, NlosMode mode = NlosMode::realization);

/// Geometric phase slope for the LOS steering entries of an array link:
/// 2*pi*spacing * cos(azimuth) with cos measured against the array's x axis.
double steering_slope(const Vec3& array_pos, const Vec3& other,
                      double spacing_wavelengths);

/// RIS phase configuration at sub-surface granularity. All k_per_sub
/// elements of a sub-surface share one theta; thetas live on the 2^bits grid.
struct PhaseConfig {
  std::vector<double> thetas;  // M angles in [0, 2*pi)
  int bits = 1;                // B0
  int k_total = 0;             // K
  int k_per_sub = 0;           // K tilde, M = K / k_per_sub

  std::size_t sub_surfaces() const { return thetas.size(); }
};

/// Grid angle 2*pi*n0 / 2^bits. Throws when n0 is outside [0, 2^bits).
double quantize_phase(int n0, int bits);

/// Unit-modulus reflection coefficients e^{j*theta_m}.
CVector phase_rotations(const PhaseConfig& phase);

/// Effective AP->robot channel h^H diag(e^{j theta}) g + l.
Complex effective_channel(const CVector& h, const PhaseConfig& phase,
                          const CVector& g, Complex l);

/// Cascade vector psi with psi_m = conj(h_m) * g_m, so that the reflected
/// term equals sum_m e^{j theta_m} psi_m.
CVector cascade(const CVector& h, const CVector& g);

struct ChannelParams {
  PathLossParams path_loss;
  double a_bar = 3.0;            // Rician factor of unblocked links
  double noise_power = 3.16227766016837933e-8;  // sigma^2, -75 dBW
  double carrier_hz = 2.4e9;
  double spacing_wavelengths = 0.5;
  int k_total = 20;
  int k_per_sub = 5;
  int phase_bits = 3;
  NlosMode nlos_mode = NlosMode::realization;
  bool redraw_ap_ris_per_epoch = false;

  int sub_surfaces() const { return k_total / k_per_sub; }
};

/// Per-robot link set for one coherence block.
struct ChannelSet {
  std::vector<Complex> l;        // AP->robot, one scalar per robot
  std::vector<CVector> g;        // RIS->robot, length-M vector per robot
  CVector h;                     // AP->RIS, length M
  std::vector<double> alpha_ap_robot;
  std::vector<double> alpha_ris_robot;
  double alpha_ap_ris = 0.0;

  std::vector<double> gains(const PhaseConfig& phase) const;  // |H_i|^2
};

/// Deterministic channel source: queries within one coherence block (one
/// decision epoch) for the same position always return identical values
/// because all draws are keyed by hash(seed, cell, epoch).
class ChannelModel {
 public:
  ChannelModel(const GridMap& map, const ChannelParams& params, std::uint64_t seed)
      : map_(&map), params_(params), seed_(seed) {}

  const ChannelParams& params() const { return params_; }

  /// AP->robot scalar link at a cell.
  Complex direct_link(long cell_id, const Vec3& pos, std::uint64_t epoch) const;

  /// RIS->robot vector link at a cell (sub-surface aggregation folded in).
  CVector reflect_link(long cell_id, const Vec3& pos, std::uint64_t epoch) const;

  /// AP->RIS vector link; fixed within an episode unless the redraw flag is set.
  CVector ap_ris_link(std::uint64_t episode, std::uint64_t epoch) const;

  ChannelSet at(const std::vector<Vec3>& positions, const std::vector<long>& cells,
                std::uint64_t episode, std::uint64_t epoch) const;

 private:
  const GridMap* map_;
  ChannelParams params_;
  std::uint64_t seed_;
};

}  // namespace risnoma::channel
