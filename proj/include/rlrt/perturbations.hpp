#pragma once

#include <cstdint>

#include "rlrt/forward_sim.hpp"
#include "rlrt/geometry.hpp"

namespace rlrt {

// Forward/inverse model mismatch. Tilt and jitter act on the electrodes that
// generate the data; the conductivity/geometry factors and the grid spacing
// describe the model the solver assumes.
struct PerturbationSpec {
  double tilt_deg = 0.0;
  double jitter_mm = 0.0;
  double conductivity_factor = 1.0;
  double geometry_factor = 1.0;
  double inverse_spacing_mm = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Rotates every electrode by `degrees` about the anterior-posterior (y)
/// axis through `center`; positive angles roll the montage towards the left
/// ear (-x). Each electrode keeps its distance from the centre.
ElectrodeArray tilt_electrodes(const ElectrodeArray& arr, double degrees,
                               const Vec3& center = Vec3::Zero());

/// Independent N(0, sigma^2) displacement per axis, then radial projection
/// back to the electrode's original distance from `center`.
ElectrodeArray jitter_electrodes(const ElectrodeArray& arr, double sigma_mm, std::uint64_t seed,
                                 const Vec3& center = Vec3::Zero());

HeadModel distort_model(const HeadModel& model, const PerturbationSpec& spec);

struct InverseProblem {
  ElectrodeArray forward_electrodes;  // tilted/jittered montage that generates the data
  HeadModel model;                    // distorted model assumed by the solver
  ElectrodeArray electrodes;          // nominal montage on the distorted scalp
  SourceGrid grid;
  LeadField leadfield;
};

/// Composes the perturbations of `spec` around a forward configuration.
///
/// The inverse grid uses `spec.inverse_spacing_mm` inside the distorted
/// sphere with `grid_margin_mm * geometry_factor` clearance; when its spacing
/// differs from `forward_spacing_mm` the lattice origin is shifted by half the
/// forward spacing on every axis so forward voxels never coincide with inverse
/// ones.
InverseProblem build_inverse_problem(const HeadModel& fwd_model,
                                     const ElectrodeArray& fwd_electrodes,
                                     const PerturbationSpec& spec, double forward_spacing_mm,
                                     double grid_margin_mm);

}  // namespace rlrt
