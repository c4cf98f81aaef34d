#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rlrt/geometry.hpp"

namespace rlrt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// M x 3K gain matrix. Column triplet [3i, 3i+3) is the lead field of voxel i.
struct LeadField {
  Matrix gain;
  std::string grid_ref;

  Eigen::Index n_electrodes() const { return gain.rows(); }
  Eigen::Index n_voxels() const { return gain.cols() / 3; }
  auto block(Eigen::Index voxel) const { return gain.middleCols(3 * voxel, 3); }
};

struct SampleRange {
  std::size_t begin = 0;
  std::size_t end = 0;  // one past the last sample

  bool empty() const { return end <= begin; }
};

// M x N measurement matrix.
struct EegEpoch {
  Matrix data;
  double fs_hz = 500.0;
  SampleRange baseline{0, 1};

  Eigen::Index n_samples() const { return data.cols(); }
};

struct ErpSpec {
  double latency_ms = 200.0;
  double width_ms = 60.0;  // full width at half maximum
  double amplitude = 1.0;
};

struct NoiseSpec {
  double target_snr_db = 20.0;
  int n_trials = 10;
  double brown_fraction = 0.5;  // share of noise power injected as source-level brown noise
  std::uint64_t seed = 0;
};

/// Potential per unit dipole moment for one electrode/dipole pair in an
/// infinite homogeneous conductor: g = r / (4 pi sigma |r|^3), r in metres.
/// Throws NumericalError when the electrode and dipole coincide.
Vec3 leadfield_column(const HeadModel& model, const Vec3& electrode_mm, const Vec3& dipole_mm);

/// Subtracts each column's mean over rows (left-multiplication by the
/// centering matrix, written as an explicit row-order loop).
void average_reference(Matrix& m);

/// Average-referenced gain for every electrode/voxel pair.
LeadField assemble_leadfield(const HeadModel& model, const ElectrodeArray& electrodes,
                             const SourceGrid& grid);

/// Gaussian ERP sampled at t_n = n * 1000 / fs_hz milliseconds.
Vector erp_waveform(const ErpSpec& spec, double fs_hz, std::size_t n_samples);

/// Random walk of unit Gaussian steps, mean-removed and scaled to unit sample
/// variance (N - 1 denominator).
Vector brown_noise(std::size_t n_samples, std::uint64_t seed);

struct SimulatedEpoch {
  EegEpoch epoch;        // trial average: ERP + noise
  EegEpoch noise_epoch;  // independent trial average with the source silent
  double noise_gain = 0.0;  // per-trial noise RMS scale chosen by the calibration
};

/// Synthesizes a trial-averaged ERP epoch at the requested SNR.
///
/// Each trial carries the deterministic ERP at every active dipole, plus
/// independent brown noise on the three moment components of each active
/// dipole (source level) and white Gaussian noise on every electrode. The two
/// noise layers are normalized to unit mean power and mixed by brown_fraction;
/// a single global gain is then found by bisection so that
/// snr_db(epoch, noise_epoch) hits target_snr_db. Trial streams are keyed by
/// (seed, trial), so results do not depend on evaluation order.
SimulatedEpoch simulate_epoch(const LeadField& lf, const std::vector<ActiveDipole>& active,
                              const ErpSpec& erp, const NoiseSpec& noise, double fs_hz,
                              std::size_t n_samples);

/// Noise-free trial average (ERP only).
Matrix noise_free_signal(const LeadField& lf, const std::vector<ActiveDipole>& active,
                         const Vector& waveform);

/// 10 log10(tr C_s / tr C_n) with C the sample covariance of each epoch.
double snr_db(const EegEpoch& epoch, const EegEpoch& noise_epoch);

/// Sum of per-channel sample variances (trace of the sample covariance).
double covariance_trace(const Matrix& data);

}  // namespace rlrt
