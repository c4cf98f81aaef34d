#include "rlrt/forward_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "rlrt/errors.hpp"
#include "rlrt/random.hpp"

namespace rlrt {

Vec3 leadfield_column(const HeadModel& model, const Vec3& electrode_mm, const Vec3& dipole_mm) {
  const Vec3 d_mm = electrode_mm - dipole_mm;
  const double dist_mm = d_mm.norm();
  if (!(dist_mm > 1e-6)) {
    throw NumericalError("leadfield_column: electrode and dipole coincide (singular potential)");
  }
  const Vec3 r = d_mm * 1e-3;
  const double dist = dist_mm * 1e-3;
  return r / (4.0 * std::numbers::pi * model.conductivity_s_per_m * dist * dist * dist);
}

void average_reference(Matrix& m) {
  const Eigen::Index rows = m.rows();
  if (rows == 0) return;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    double sum = 0.0;
    for (Eigen::Index r = 0; r < rows; ++r) sum += m(r, c);
    const double mean = sum / double(rows);
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) -= mean;
  }
}

LeadField assemble_leadfield(const HeadModel& model, const ElectrodeArray& electrodes,
                             const SourceGrid& grid) {
  model.validate();
  electrodes.validate();
  const auto n_el = Eigen::Index(electrodes.size());
  const auto n_vox = Eigen::Index(grid.size());
  if (n_vox < 1) throw std::invalid_argument("assemble_leadfield: empty source grid");

  LeadField lf;
  lf.grid_ref = grid_id(grid);
  lf.gain.resize(n_el, 3 * n_vox);
  for (Eigen::Index i = 0; i < n_vox; ++i) {
    for (Eigen::Index m = 0; m < n_el; ++m) {
      try {
        lf.gain.block<1, 3>(m, 3 * i) =
            leadfield_column(model, electrodes.positions_mm[std::size_t(m)],
                             grid.positions_mm[std::size_t(i)])
                .transpose();
      } catch (const NumericalError& e) {
        std::ostringstream msg;
        msg << e.what() << " [electrode " << m << " (" << electrodes.labels[std::size_t(m)]
            << "), voxel " << i << "]";
        throw NumericalError(msg.str());
      }
    }
  }
  average_reference(lf.gain);
  return lf;
}

Vector erp_waveform(const ErpSpec& spec, double fs_hz, std::size_t n_samples) {
  if (n_samples < 2) throw std::invalid_argument("erp_waveform: need at least 2 samples");
  if (!(fs_hz > 0.0)) throw std::invalid_argument("erp_waveform: fs_hz must be positive");
  if (!(spec.width_ms > 0.0)) throw std::invalid_argument("erp_waveform: width_ms must be positive");
  const double dt_ms = 1000.0 / fs_hz;
  const double duration_ms = dt_ms * double(n_samples - 1);
  if (spec.latency_ms < 0.0 || spec.latency_ms > duration_ms) {
    throw std::invalid_argument("erp_waveform: latency outside the epoch");
  }
  // FWHM -> standard deviation.
  const double sigma = spec.width_ms / 2.355;
  Vector w(static_cast<Eigen::Index>(n_samples));
  for (std::size_t n = 0; n < n_samples; ++n) {
    const double dt = double(n) * dt_ms - spec.latency_ms;
    w[Eigen::Index(n)] = spec.amplitude * std::exp(-(dt * dt) / (2.0 * sigma * sigma));
  }
  return w;
}

Vector brown_noise(std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 2) throw std::invalid_argument("brown_noise: need at least 2 samples");
  auto rng = make_stream(seed, {0x62726f776eULL});
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector x(static_cast<Eigen::Index>(n_samples));
  double acc = 0.0;
  for (Eigen::Index n = 0; n < x.size(); ++n) {
    acc += normal(rng);
    x[n] = acc;
  }
  x.array() -= x.mean();
  const double var = x.squaredNorm() / double(n_samples - 1);
  if (var > 0.0) x /= std::sqrt(var);
  return x;
}

Matrix noise_free_signal(const LeadField& lf, const std::vector<ActiveDipole>& active,
                         const Vector& waveform) {
  Vector topo = Vector::Zero(lf.n_electrodes());
  for (const auto& a : active) {
    if (Eigen::Index(a.voxel) >= lf.n_voxels()) {
      throw std::invalid_argument("simulate: active voxel index out of range");
    }
    topo += lf.block(Eigen::Index(a.voxel)) * a.moment;
  }
  return topo * waveform.transpose();
}

double covariance_trace(const Matrix& data) {
  if (data.cols() < 2) throw std::invalid_argument("covariance_trace: need at least 2 samples");
  double tr = 0.0;
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    const double mean = data.row(r).mean();
    tr += (data.row(r).array() - mean).square().sum() / double(data.cols() - 1);
  }
  return tr;
}

double snr_db(const EegEpoch& epoch, const EegEpoch& noise_epoch) {
  if (epoch.data.rows() != noise_epoch.data.rows()) {
    throw ShapeError("snr_db: epoch and noise epoch have different electrode counts");
  }
  const double tn = covariance_trace(noise_epoch.data);
  if (!(tn > 0.0)) throw NumericalError("snr_db: noise covariance has zero trace");
  return 10.0 * std::log10(covariance_trace(epoch.data) / tn);
}

namespace {

// Trial-averaged, unit-power mixture of source-level brown noise and
// sensor-level white noise for one independent realization (`stream`).
Matrix averaged_noise(const LeadField& lf, const std::vector<ActiveDipole>& active,
                      const NoiseSpec& spec, std::size_t n_samples, std::uint64_t stream) {
  const Eigen::Index m = lf.n_electrodes();
  const auto n = Eigen::Index(n_samples);
  Matrix brown_sum = Matrix::Zero(m, n);
  Matrix white_sum = Matrix::Zero(m, n);
  double brown_power = 0.0;
  double white_power = 0.0;

  for (int trial = 0; trial < spec.n_trials; ++trial) {
    auto rng = make_stream(spec.seed, {stream, std::uint64_t(trial)});
    std::normal_distribution<double> normal(0.0, 1.0);

    Matrix brown = Matrix::Zero(m, n);
    if (spec.brown_fraction > 0.0) {
      for (const auto& a : active) {
        const auto block = lf.block(Eigen::Index(a.voxel));
        for (int axis = 0; axis < 3; ++axis) {
          brown += block.col(axis) * brown_noise(n_samples, rng()).transpose();
        }
      }
    }
    Matrix white(m, n);
    for (Eigen::Index c = 0; c < n; ++c) {
      for (Eigen::Index r = 0; r < m; ++r) white(r, c) = normal(rng);
    }
    brown_power += brown.squaredNorm();
    white_power += white.squaredNorm();
    brown_sum += brown;
    white_sum += white;
  }

  const double cells = double(spec.n_trials) * double(m) * double(n);
  brown_power /= cells;
  white_power /= cells;
  Matrix out = Matrix::Zero(m, n);
  if (spec.brown_fraction > 0.0) {
    if (!(brown_power > 0.0)) throw NumericalError("simulate: brown noise projects to zero power");
    out += std::sqrt(spec.brown_fraction / brown_power) * brown_sum;
  }
  if (spec.brown_fraction < 1.0) {
    out += std::sqrt((1.0 - spec.brown_fraction) / white_power) * white_sum;
  }
  return out / double(spec.n_trials);
}

}  // namespace

SimulatedEpoch simulate_epoch(const LeadField& lf, const std::vector<ActiveDipole>& active,
                              const ErpSpec& erp, const NoiseSpec& noise, double fs_hz,
                              std::size_t n_samples) {
  if (noise.n_trials < 1) throw std::invalid_argument("simulate: n_trials must be >= 1");
  if (noise.brown_fraction < 0.0 || noise.brown_fraction > 1.0) {
    throw std::invalid_argument("simulate: brown_fraction must lie in [0, 1]");
  }
  const Vector waveform = erp_waveform(erp, fs_hz, n_samples);
  const Matrix signal = noise_free_signal(lf, active, waveform);
  const double signal_power = covariance_trace(signal);
  if (!(signal_power > 0.0)) throw NumericalError("unreachable SNR: the source produces no signal");

  const Matrix n1 = averaged_noise(lf, active, noise, n_samples, 1);
  const Matrix n2 = averaged_noise(lf, active, noise, n_samples, 2);
  const double n2_power = covariance_trace(n2);

  auto measured = [&](double log_gain) {
    const double g = std::pow(10.0, log_gain);
    return 10.0 * std::log10(covariance_trace(signal + g * n1) / (g * g * n2_power));
  };

  // Bisection on log10(gain). SNR falls monotonically from +inf towards
  // roughly 0 dB as the gain grows.
  const double centre = 0.5 * std::log10(signal_power / n2_power);
  double lo = centre - 8.0;
  double hi = centre + 8.0;
  if (!(measured(lo) > noise.target_snr_db) || !(measured(hi) < noise.target_snr_db)) {
    std::ostringstream msg;
    msg << "unreachable SNR: target " << noise.target_snr_db << " dB is outside the attainable range";
    throw NumericalError(msg.str());
  }
  double log_gain = 0.5 * (lo + hi);
  for (int it = 0; it < 30; ++it) {
    log_gain = 0.5 * (lo + hi);
    const double err = measured(log_gain) - noise.target_snr_db;
    if (std::abs(err) <= 0.1) break;
    (err > 0.0 ? lo : hi) = log_gain;
  }
  const double gain = std::pow(10.0, log_gain);

  SimulatedEpoch out;
  out.noise_gain = gain;
  const double dt_ms = 1000.0 / fs_hz;
  const double onset_ms = erp.latency_ms - erp.width_ms;
  const auto baseline_end = std::max<std::size_t>(1, onset_ms > 0.0 ? std::size_t(onset_ms / dt_ms) : 1);
  out.epoch.data = signal + gain * n1;
  out.epoch.fs_hz = fs_hz;
  out.epoch.baseline = {0, baseline_end};
  out.noise_epoch.data = gain * n2;
  out.noise_epoch.fs_hz = fs_hz;
  out.noise_epoch.baseline = {0, baseline_end};
  if (!out.epoch.data.allFinite() || !out.noise_epoch.data.allFinite()) {
    throw NumericalError("simulate: non-finite samples");
  }
  return out;
}

}  // namespace rlrt
