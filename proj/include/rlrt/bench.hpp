#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rlrt/eloreta.hpp"
#include "rlrt/forward_sim.hpp"
#include "rlrt/geometry.hpp"
#include "rlrt/perturbations.hpp"
#include "rlrt/reloreta.hpp"

namespace rlrt {

enum class SourceMode { single_dipole, extended };
enum class Method { eloreta, reloreta };

std::string to_string(SourceMode m);
std::string to_string(Method m);
Method parse_method(const std::string& s);  // throws ConfigError

struct BenchConfig {
  int n_sources = 20;
  SourceMode source_mode = SourceMode::single_dipole;
  double extent_mm = 10.0;  // extended sources only
  int n_dipoles = 33;       // extended sources only
  // std::nullopt stands for a noise-free cell.
  std::vector<std::optional<double>> snr_levels_db{20.0};
  PerturbationSpec perturbation;
  std::vector<Method> methods{Method::eloreta, Method::reloreta};
  ReloretaConfig solver;
  double forward_spacing_mm = 4.0;
  std::uint64_t seed = 0;

  HeadModel head;
  double grid_margin_mm = 15.0;
  double min_depth_mm = 5.0;  // sources are drawn at least this far below the scalp
  double moment_magnitude = 1e-2;
  ErpSpec erp;
  int n_trials = 10;
  double brown_fraction = 0.5;
  double fs_hz = 500.0;
  std::size_t n_samples = 200;
  // Off by default so that repeated sweeps write byte-identical CSVs.
  bool record_wall_time = false;

  void validate() const;  // throws ConfigError
};

struct BenchRecord {
  int source_id = 0;
  Vec3 true_position_mm = Vec3::Zero();
  std::optional<double> snr_db;
  std::size_t snr_index = 0;
  Method method = Method::eloreta;
  Vec3 estimated_position_mm = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
  double error_mm = std::numeric_limits<double>::quiet_NaN();
  double e_recon_final = std::numeric_limits<double>::quiet_NaN();
  int outer_iters = 0;
  bool converged = false;
  double wall_ms = 0.0;

  // Not part of the CSV.
  std::string failure;           // empty unless the cell threw
  int invariant_violations = 0;  // see check_trace_invariants
};

double localization_error(const Vec3& p_true, const Vec3& p_est);

/// Checks that every accepted step lowered the error it started from
/// (e_reloreta[j] <= e_eloreta[j]), that dre[j] equals
/// |e_reloreta[j] - e_eloreta[j]| exactly, that NDRE is non-negative, that
/// the trace respects max_outer_iter and that a converged trace ends with
/// NDRE <= epsilon. Returns one message per violation.
std::vector<std::string> check_trace_invariants(const ReloretaTrace& trace, const ReloretaConfig& cfg);

/// Everything a sweep shares across cells: the forward grid and lead field,
/// the perturbed inverse problem and the sampled sources.
struct BenchSetup {
  SourceGrid forward_grid;
  LeadField forward_leadfield;
  InverseProblem inverse;
  std::vector<DipoleSourceSpec> sources;
};

BenchSetup prepare_benchmark(const BenchConfig& cfg);

/// Source positions: forward-grid points at least min_depth_mm below the
/// scalp, drawn uniformly with a stream keyed by (seed, source id); moments
/// have a uniformly random direction and magnitude moment_magnitude.
std::vector<DipoleSourceSpec> sample_sources(const BenchConfig& cfg, const SourceGrid& forward_grid);

struct SimulatedCell {
  std::vector<ActiveDipole> active;
  SimulatedEpoch sim;
};

/// Measurements for one (source, SNR level) pair. Both methods see the same
/// epoch so the comparison is paired.
SimulatedCell simulate_cell(const BenchConfig& cfg, const BenchSetup& setup, int source_id,
                            std::size_t snr_index);

/// Runs every source x SNR x method cell on up to `jobs` threads. Rows are
/// ordered by (source_id, snr index, method order in the config) and do not
/// depend on `jobs`. A failing cell yields a row with converged = false.
std::vector<BenchRecord> run_benchmark(const BenchConfig& cfg, unsigned jobs = 1);

inline const char* kCsvHeader =
    "source_id,true_x_mm,true_y_mm,true_z_mm,snr_db,method,est_x_mm,est_y_mm,est_z_mm,error_mm,"
    "e_recon_final,outer_iters,converged,wall_ms";

std::string records_to_csv(const std::vector<BenchRecord>& records);
std::vector<BenchRecord> records_from_csv(const std::string& text);  // throws IoError

struct CellSummary {
  std::string method;
  std::optional<double> snr_db;
  std::size_t n = 0;
  std::size_t n_converged = 0;
  std::size_t n_failed = 0;
  double median = 0, p25 = 0, p75 = 0, mean = 0, max = 0;  // over finite error_mm
  double median_outer_iters = 0;
};

/// Linear-interpolation percentile (q in [0, 100]) of an unsorted sample.
double percentile(std::vector<double> v, double q);

/// Groups by (method, snr_db) in first-appearance order.
std::vector<CellSummary> summarize(const std::vector<BenchRecord>& records);

}  // namespace rlrt
