#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rlrt/forward_sim.hpp"
#include "rlrt/geometry.hpp"

namespace rlrt {

using Matrix3 = Eigen::Matrix3d;

struct EloretaOptions {
  double alpha = 0.05;
  int max_iter = 100;
  double w_tol = 1e-6;
  double pinv_rel_tol = 1e-12;
};

struct EloretaState {
  std::vector<Matrix3> weights;  // W_i, one symmetric PSD block per voxel
  Matrix inverse_operator;       // T, 3K x M
  Matrix centering;              // L, M x M
  double alpha = 0.0;            // relative regularization as supplied
  // Absolute regularizer actually added: alpha * tr(H W^-1 H^T) / M.
  double regularization = 0.0;
  int iterations_used = 0;
  bool converged = false;
};

struct SourceEstimate {
  Matrix amplitudes;  // 3K x N
  std::string grid_ref;

  Eigen::Index n_voxels() const { return amplitudes.rows() / 3; }
};

struct Localization {
  std::size_t voxel = 0;
  Vec3 position_mm = Vec3::Zero();
};

/// I - (1/m) * ones. Throws std::invalid_argument for m < 2.
Matrix centering_matrix(Eigen::Index m);

/// Moore-Penrose pseudoinverse from a full SVD; singular values at or below
/// rel_tol * sigma_max are treated as zero.
Matrix pinv(const Matrix& a, double rel_tol = 1e-12);

/// Principal square root of a symmetric positive semidefinite 3x3 matrix.
/// Eigenvalues down to -1e-9 (relative) are clamped to zero; anything more
/// negative, or an asymmetric input, throws std::invalid_argument.
Matrix3 sym_sqrt(const Matrix3& a);

/// Block-weight fixed point
///
///   W_i <- [H_i^T (H W^-1 H^T + a L)^+ H_i]^(1/2),  W_0 = I,
///
/// iterated until the largest relative Frobenius change of any block falls
/// below w_tol or max_iter sweeps have run. The regularizer is the centering
/// matrix scaled by a = alpha * tr(H W^-1 H^T) / M, i.e. alpha is relative to
/// the mean eigenvalue of the weighted gram matrix. The inverse operator
/// T = W^-1 H^T (H W^-1 H^T + a L)^+ is built from the final weights.
///
/// Throws NumericalError (naming the sweep) on non-finite intermediates.
EloretaState eloreta_weights(const LeadField& lf, const EloretaOptions& opts = {});

/// Y = T L X.
SourceEstimate eloreta_apply(const EloretaState& state, const LeadField& lf, const EegEpoch& epoch);

/// ||X - H Y||_F^2.
double reconstruction_error(const LeadField& lf, const SourceEstimate& y, const EegEpoch& epoch);

/// Voxel with the largest sqrt(sum_n ||y_i(n)||^2); lowest index wins ties.
/// Throws NumericalError("no active source") for an all-zero estimate.
Localization localize(const SourceEstimate& y, const SourceGrid& grid);

/// Per-voxel time-aggregated moment magnitudes used by localize().
Vector voxel_power(const SourceEstimate& y);

}  // namespace rlrt
