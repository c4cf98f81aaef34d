#include "rlrt/perturbations.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "rlrt/random.hpp"

namespace rlrt {

void PerturbationSpec::validate() const {
  if (!std::isfinite(tilt_deg) || std::abs(tilt_deg) >= 90.0) {
    throw std::invalid_argument("perturbation: |tilt_deg| must be below 90");
  }
  if (!(jitter_mm >= 0.0)) throw std::invalid_argument("perturbation: jitter_mm must be >= 0");
  if (!(conductivity_factor > 0.0)) {
    throw std::invalid_argument("perturbation: conductivity_factor must be positive");
  }
  if (!(geometry_factor > 0.0)) throw std::invalid_argument("perturbation: geometry_factor must be positive");
  if (!(inverse_spacing_mm > 0.0)) {
    throw std::invalid_argument("perturbation: inverse_spacing_mm must be positive");
  }
}

ElectrodeArray tilt_electrodes(const ElectrodeArray& arr, double degrees, const Vec3& center) {
  if (!(std::abs(degrees) < 90.0)) throw std::invalid_argument("tilt_electrodes: |degrees| must be below 90");
  if (degrees == 0.0) return arr;
  const double t = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(t);
  const double s = std::sin(t);
  ElectrodeArray out = arr;
  for (auto& p : out.positions_mm) {
    const Vec3 d = p - center;
    const Vec3 rotated(c * d.x() - s * d.z(), d.y(), s * d.x() + c * d.z());
    p = project_to_sphere(center + rotated, center, d.norm());
  }
  return out;
}

ElectrodeArray jitter_electrodes(const ElectrodeArray& arr, double sigma_mm, std::uint64_t seed,
                                 const Vec3& center) {
  if (!(sigma_mm >= 0.0)) throw std::invalid_argument("jitter_electrodes: sigma_mm must be >= 0");
  if (sigma_mm == 0.0) return arr;
  auto rng = make_stream(seed, {0x6a6974ULL});
  std::normal_distribution<double> normal(0.0, sigma_mm);
  ElectrodeArray out = arr;
  for (auto& p : out.positions_mm) {
    const double radius = (p - center).norm();
    Vec3 moved = p;
    for (int a = 0; a < 3; ++a) moved[a] += normal(rng);
    p = project_to_sphere(moved, center, radius);
  }
  return out;
}

HeadModel distort_model(const HeadModel& model, const PerturbationSpec& spec) {
  spec.validate();
  HeadModel out = model;
  out.conductivity_s_per_m = model.conductivity_s_per_m * spec.conductivity_factor;
  out.radius_mm = model.radius_mm * spec.geometry_factor;
  return out;
}

InverseProblem build_inverse_problem(const HeadModel& fwd_model,
                                     const ElectrodeArray& fwd_electrodes,
                                     const PerturbationSpec& spec, double forward_spacing_mm,
                                     double grid_margin_mm) {
  spec.validate();
  fwd_model.validate();
  fwd_electrodes.validate();

  InverseProblem ip;
  ip.forward_electrodes = jitter_electrodes(
      tilt_electrodes(fwd_electrodes, spec.tilt_deg, fwd_model.center_mm), spec.jitter_mm,
      spec.seed, fwd_model.center_mm);

  ip.model = distort_model(fwd_model, spec);
  ip.electrodes = fwd_electrodes;
  if (spec.geometry_factor != 1.0) {
    for (auto& p : ip.electrodes.positions_mm) {
      p = project_to_sphere(p, fwd_model.center_mm,
                            (p - fwd_model.center_mm).norm() * spec.geometry_factor);
    }
  }

  const Vec3 offset = spec.inverse_spacing_mm == forward_spacing_mm
                          ? Vec3::Zero()
                          : Vec3::Constant(0.5 * forward_spacing_mm);
  ip.grid = build_sphere_grid(ip.model.radius_mm, spec.inverse_spacing_mm,
                              grid_margin_mm * spec.geometry_factor, offset);
  ip.leadfield = assemble_leadfield(ip.model, ip.electrodes, ip.grid);
  return ip;
}

}  // namespace rlrt
