#pragma once

#include <optional>
#include <vector>

#include "rlrt/eloreta.hpp"
#include "rlrt/forward_sim.hpp"

namespace rlrt {

struct ReloretaConfig {
  double alpha = 0.05;
  double epsilon = 0.005;
  int max_outer_iter = 60;
  int min_outer_iter = 2;
  double lambda_init = 1e-2;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  int max_lambda_retries = 8;
  // Inner eLORETA weight iteration.
  int eloreta_max_iter = 100;
  double eloreta_w_tol = 1e-6;

  void validate() const;
  EloretaOptions eloreta_options() const;
};

struct ReloretaIteration {
  int j = 0;
  double e_reloreta = 0.0;  // ||X - R H Y||^2 after the LM step of this iteration
  double e_eloreta = 0.0;   // ||X - H~ Y||^2 of this iteration's eLORETA solve
  double dre = 0.0;
  std::optional<double> ndre;  // defined from j = 2 on
  double lambda_used = 0.0;
  bool step_accepted = false;
};

struct ReloretaTrace {
  std::vector<ReloretaIteration> iterations;
  Matrix transform;            // accumulated R acting on the original lead field
  LeadField updated_leadfield;  // R H
  SourceEstimate initial_estimate;  // Y of the first solve, i.e. plain eLORETA
  SourceEstimate estimate;      // Y of the last eLORETA solve
  bool converged = false;
};

/// D = 2 (R H Y - X) (H Y)^T.
Matrix reloreta_gradient(const Matrix& r, const LeadField& lf, const SourceEstimate& y,
                         const EegEpoch& epoch);

/// Levenberg-Marquardt update with unit Hessian: r - d / (1 + lambda).
Matrix lm_step(const Matrix& r, const Matrix& d, double lambda);

/// |last - previous| / (max - min) over the whole history, 0 for a flat
/// history. Throws std::invalid_argument for fewer than two entries.
double ndre(const std::vector<double>& dre_history);

/// H~ = R H.
LeadField updated_leadfield(const Matrix& r, const LeadField& lf);

/// Outer loop:
///   1. R = I, H~ = H; X is average-referenced once.
///   2. eLORETA (fresh weights) on H~ gives Y and E_eloreta.
///   3. D is taken at the accumulated R against the original H. A proposal
///      lm_step(R, D, lambda) is accepted only if it lowers ||X - R H Y||^2;
///      lambda shrinks by lambda_down on acceptance and grows by lambda_up on
///      each rejection, with at most max_lambda_retries retries before the
///      zero step is taken.
///   4. DRE = |E_reloreta - E_eloreta|; stop once NDRE <= epsilon and
///      j >= min_outer_iter, or after max_outer_iter iterations.
///   5. H~ = R H, back to 2.
ReloretaTrace run_reloreta(const LeadField& lf, const EegEpoch& epoch, const ReloretaConfig& cfg = {});

}  // namespace rlrt
