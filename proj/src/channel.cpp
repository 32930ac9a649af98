#include "risnoma/channel.hpp"

#include <cmath>
#include <stdexcept>

namespace risnoma::channel {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

// Stream tags keeping link classes on disjoint substreams.
constexpr std::uint64_t kTagDirect = 0x11;
constexpr std::uint64_t kTagReflect = 0x22;
constexpr std::uint64_t kTagApRis = 0x33;
}  // namespace

double path_loss(double d, double gamma, const PathLossParams& params) {
  if (d <= 0.0) throw std::domain_error("path_loss: distance must be > 0");
  return params.c_ref * std::pow(d, -gamma);
}

double rician_factor(const Vec3& tx, const Vec3& rx, const GridMap& map, double a_bar) {
  return gridworld::segment_blocked(tx, rx, map) ? 0.0 : a_bar;
}

CVector draw_link(double power_gain, double alpha, std::size_t dim, double kappa,
                  rng::Stream& stream, NlosMode mode) {
  double amp = std::sqrt(power_gain);
  CVector out(dim);
  if (mode == NlosMode::expected) {
    if (alpha <= 0.0) return out;  // blocked: zero-mean term dropped, nothing left
    for (std::size_t m = 0; m < dim; ++m) {
      double a = kappa * static_cast<double>(m);
      out[m] = amp * Complex(std::cos(a), std::sin(a));
    }
    return out;
  }
  double los_scale = std::sqrt(alpha / (alpha + 1.0));
  double nlos_scale = std::sqrt(1.0 / (alpha + 1.0));
  for (std::size_t m = 0; m < dim; ++m) {
    Complex los = 0.0;
    if (alpha > 0.0) {
      double a = kappa * static_cast<double>(m);
      los = Complex(std::cos(a), std::sin(a));
    }
    // Circular complex Gaussian, unit variance per entry.
    Complex nlos(stream.normal() * M_SQRT1_2, stream.normal() * M_SQRT1_2);
    out[m] = amp * (los_scale * los + nlos_scale * nlos);
  }
  return out;
}

double steering_slope(const Vec3& array_pos, const Vec3& other,
                      double spacing_wavelengths) {
  double d = geom::distance(array_pos, other);
  if (d <= 0.0) return 0.0;
  return kTwoPi * spacing_wavelengths * (other.x - array_pos.x) / d;
}

double quantize_phase(int n0, int bits) {
  if (bits < 1) throw std::invalid_argument("quantize_phase: bits must be >= 1");
  int levels = 1 << bits;
  if (n0 < 0 || n0 >= levels)
    throw std::out_of_range("quantize_phase: n0 outside [0, 2^bits)");
  return kTwoPi * static_cast<double>(n0) / static_cast<double>(levels);
}

CVector phase_rotations(const PhaseConfig& phase) {
  CVector v(phase.thetas.size());
  for (std::size_t m = 0; m < v.size(); ++m)
    v[m] = Complex(std::cos(phase.thetas[m]), std::sin(phase.thetas[m]));
  return v;
}

Complex effective_channel(const CVector& h, const PhaseConfig& phase,
                          const CVector& g, Complex l) {
  if (h.size() != g.size() || h.size() != phase.thetas.size())
    throw std::invalid_argument("effective_channel: vector lengths must match M");
  Complex reflected = 0.0;
  for (std::size_t m = 0; m < h.size(); ++m) {
    Complex rot(std::cos(phase.thetas[m]), std::sin(phase.thetas[m]));
    reflected += std::conj(h[m]) * rot * g[m];
  }
  return reflected + l;
}

CVector cascade(const CVector& h, const CVector& g) {
  if (h.size() != g.size())
    throw std::invalid_argument("cascade: vector lengths must match");
  CVector psi(h.size());
  for (std::size_t m = 0; m < h.size(); ++m) psi[m] = std::conj(h[m]) * g[m];
  return psi;
}

std::vector<double> ChannelSet::gains(const PhaseConfig& phase) const {
  std::vector<double> out(l.size());
  for (std::size_t i = 0; i < l.size(); ++i) {
    Complex eff = effective_channel(h, phase, g[i], l[i]);
    out[i] = std::norm(eff);
  }
  return out;
}

Complex ChannelModel::direct_link(long cell_id, const Vec3& pos,
                                  std::uint64_t epoch) const {
  double d = geom::distance(map_->ap_pos, pos);
  double gain = path_loss(d, params_.path_loss.gamma_ap_robot, params_.path_loss);
  double alpha = rician_factor(map_->ap_pos, pos, *map_, params_.a_bar);
  rng::Stream stream(rng::hash_seed(
      seed_, {kTagDirect, static_cast<std::uint64_t>(cell_id), epoch}));
  return draw_link(gain, alpha, 1, 0.0, stream, params_.nlos_mode)[0];
}

CVector ChannelModel::reflect_link(long cell_id, const Vec3& pos,
                                   std::uint64_t epoch) const {
  double d = geom::distance(map_->ris_pos, pos);
  double gain = path_loss(d, params_.path_loss.gamma_ris_robot, params_.path_loss);
  double alpha = rician_factor(map_->ris_pos, pos, *map_, params_.a_bar);
  double kappa = steering_slope(map_->ris_pos, pos, params_.spacing_wavelengths);
  rng::Stream stream(rng::hash_seed(
      seed_, {kTagReflect, static_cast<std::uint64_t>(cell_id), epoch}));
  // Sub-surface entries aggregate k_per_sub elements sharing one phase:
  // power times K tilde on each side of the cascade.
  CVector v = draw_link(gain * params_.k_per_sub, alpha,
                        static_cast<std::size_t>(params_.sub_surfaces()), kappa,
                        stream, params_.nlos_mode);
  return v;
}

CVector ChannelModel::ap_ris_link(std::uint64_t episode, std::uint64_t epoch) const {
  double d = geom::distance(map_->ap_pos, map_->ris_pos);
  double gain = path_loss(d, params_.path_loss.gamma_ap_ris, params_.path_loss);
  double alpha = rician_factor(map_->ap_pos, map_->ris_pos, *map_, params_.a_bar);
  double kappa = steering_slope(map_->ris_pos, map_->ap_pos, params_.spacing_wavelengths);
  std::uint64_t key = params_.redraw_ap_ris_per_epoch ? epoch : episode;
  rng::Stream stream(rng::hash_seed(seed_, {kTagApRis, key}));
  return draw_link(gain * params_.k_per_sub, alpha,
                   static_cast<std::size_t>(params_.sub_surfaces()), kappa, stream,
                   params_.nlos_mode);
}

ChannelSet ChannelModel::at(const std::vector<Vec3>& positions,
                            const std::vector<long>& cells, std::uint64_t episode,
                            std::uint64_t epoch) const {
  ChannelSet set;
  set.h = ap_ris_link(episode, epoch);
  set.alpha_ap_ris =
      rician_factor(map_->ap_pos, map_->ris_pos, *map_, params_.a_bar);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    set.l.push_back(direct_link(cells[i], positions[i], epoch));
    set.g.push_back(reflect_link(cells[i], positions[i], epoch));
    set.alpha_ap_robot.push_back(
        rician_factor(map_->ap_pos, positions[i], *map_, params_.a_bar));
    set.alpha_ris_robot.push_back(
        rician_factor(map_->ris_pos, positions[i], *map_, params_.a_bar));
  }
  return set;
}

}  // namespace risnoma::channel
