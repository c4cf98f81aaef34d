#include "rlrt/eloreta.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "rlrt/errors.hpp"

namespace rlrt {

Matrix centering_matrix(Eigen::Index m) {
  if (m < 2) throw std::invalid_argument("centering_matrix: need m >= 2");
  Matrix l = Matrix::Constant(m, m, -1.0 / double(m));
  l.diagonal().array() += 1.0;
  return l;
}

Matrix pinv(const Matrix& a, double rel_tol) {
  if (a.size() == 0) return Matrix(a.cols(), a.rows());
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const double cutoff = rel_tol * (s.size() > 0 ? s[0] : 0.0);
  Vector inv = Vector::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > cutoff && s[i] > 0.0) inv[i] = 1.0 / s[i];
  }
  const Eigen::Index r = s.size();
  return svd.matrixV().leftCols(r) * inv.asDiagonal() * svd.matrixU().leftCols(r).transpose();
}

namespace {

// Square root and inverse square root of a (symmetrized) PSD block.
struct BlockRoots {
  Matrix3 sqrt;
  Matrix3 inv_sqrt;
  bool invertible = true;
};

BlockRoots block_roots(const Matrix3& a) {
  Eigen::SelfAdjointEigenSolver<Matrix3> es(a);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition of a 3x3 block failed");
  Eigen::Vector3d ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  BlockRoots out;
  for (int k = 0; k < 3; ++k) {
    if (ev[k] < -1e-9 * scale) {
      throw std::invalid_argument("sym_sqrt: matrix is not positive semidefinite");
    }
    if (ev[k] < 0.0) ev[k] = 0.0;
    if (!(ev[k] > 0.0)) out.invertible = false;
  }
  const Matrix3& v = es.eigenvectors();
  const Eigen::Vector3d root = ev.cwiseSqrt();
  out.sqrt = v * root.asDiagonal() * v.transpose();
  if (out.invertible) {
    out.inv_sqrt = v * root.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
  }
  return out;
}

void check_symmetric(const Matrix3& a) {
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw std::invalid_argument("sym_sqrt: matrix is not symmetric");
  }
}

struct Gram {
  Matrix g;       // H W^-1 H^T
  Matrix solver;  // (g + reg L)^+
  double reg = 0.0;
};

Gram weighted_gram(const Matrix& h, const std::vector<Matrix3>& inv_sqrt, const Matrix& centering,
                   const EloretaOptions& opts) {
  const Eigen::Index m = h.rows();
  const auto k = Eigen::Index(inv_sqrt.size());
  Matrix b(m, 3 * k);
  for (Eigen::Index i = 0; i < k; ++i) {
    b.middleCols<3>(3 * i).noalias() = h.middleCols<3>(3 * i) * inv_sqrt[std::size_t(i)];
  }
  Gram out;
  out.g.noalias() = b * b.transpose();
  out.reg = opts.alpha * out.g.trace() / double(m);
  out.solver = pinv(out.g + out.reg * centering, opts.pinv_rel_tol);
  return out;
}

}  // namespace

Matrix3 sym_sqrt(const Matrix3& a) {
  check_symmetric(a);
  return block_roots(0.5 * (a + a.transpose())).sqrt;
}

EloretaState eloreta_weights(const LeadField& lf, const EloretaOptions& opts) {
  if (!(opts.alpha >= 0.0)) throw std::invalid_argument("eloreta_weights: alpha must be >= 0");
  if (opts.max_iter < 0) throw std::invalid_argument("eloreta_weights: max_iter must be >= 0");
  const Matrix& h = lf.gain;
  const Eigen::Index m = h.rows();
  if (h.cols() == 0 || h.cols() % 3 != 0) throw ShapeError("eloreta_weights: gain must be M x 3K");
  if (!h.allFinite()) throw NumericalError("eloreta_weights: lead field has non-finite entries");
  const auto k = std::size_t(h.cols() / 3);

  EloretaState st;
  st.alpha = opts.alpha;
  st.centering = centering_matrix(m);
  st.weights.assign(k, Matrix3::Identity());
  std::vector<Matrix3> inv_sqrt(k, Matrix3::Identity());

  for (int it = 1; it <= opts.max_iter; ++it) {
    const Gram gram = weighted_gram(h, inv_sqrt, st.centering, opts);
    const Matrix mh = gram.solver * h;
    double change = 0.0;
    bool finite = std::isfinite(gram.reg) && gram.solver.allFinite();
    for (std::size_t i = 0; i < k && finite; ++i) {
      const auto hi = h.middleCols<3>(3 * Eigen::Index(i));
      Matrix3 a = hi.transpose() * mh.middleCols<3>(3 * Eigen::Index(i));
      a = 0.5 * (a + a.transpose());
      if (!a.allFinite()) {
        finite = false;
        break;
      }
      const BlockRoots roots = block_roots(a);
      if (!roots.invertible) {
        std::ostringstream msg;
        msg << "eloreta_weights: singular weight block for voxel " << i << " at iteration " << it;
        throw NumericalError(msg.str());
      }
      const double denom = st.weights[i].norm();
      change = std::max(change, (roots.sqrt - st.weights[i]).norm() / denom);
      st.weights[i] = roots.sqrt;
      inv_sqrt[i] = roots.inv_sqrt;
    }
    if (!finite || !std::isfinite(change)) {
      std::ostringstream msg;
      msg << "eloreta_weights: non-finite intermediate at iteration " << it;
      throw NumericalError(msg.str());
    }
    st.iterations_used = it;
    if (change < opts.w_tol) {
      st.converged = true;
      break;
    }
  }

  const Gram gram = weighted_gram(h, inv_sqrt, st.centering, opts);
  st.regularization = gram.reg;
  st.inverse_operator.resize(h.cols(), m);
  for (std::size_t i = 0; i < k; ++i) {
    const auto idx = 3 * Eigen::Index(i);
    const Matrix3 w_inv = inv_sqrt[i] * inv_sqrt[i];
    st.inverse_operator.middleRows<3>(idx).noalias() =
        w_inv * h.middleCols<3>(idx).transpose() * gram.solver;
  }
  if (!st.inverse_operator.allFinite()) {
    throw NumericalError("eloreta_weights: non-finite inverse operator");
  }
  return st;
}

SourceEstimate eloreta_apply(const EloretaState& state, const LeadField& lf, const EegEpoch& epoch) {
  const Matrix& t = state.inverse_operator;
  if (t.rows() != lf.gain.cols() || t.cols() != lf.gain.rows()) {
    throw ShapeError("eloreta_apply: inverse operator does not match the lead field");
  }
  if (epoch.data.rows() != t.cols()) {
    std::ostringstream msg;
    msg << "eloreta_apply: epoch has " << epoch.data.rows() << " channels, operator expects "
        << t.cols();
    throw ShapeError(msg.str());
  }
  SourceEstimate y;
  y.grid_ref = lf.grid_ref;
  y.amplitudes.noalias() = t * (state.centering * epoch.data);
  return y;
}

double reconstruction_error(const LeadField& lf, const SourceEstimate& y, const EegEpoch& epoch) {
  if (lf.gain.cols() != y.amplitudes.rows() || lf.gain.rows() != epoch.data.rows() ||
      y.amplitudes.cols() != epoch.data.cols()) {
    throw ShapeError("reconstruction_error: shapes do not conform");
  }
  return (epoch.data - lf.gain * y.amplitudes).squaredNorm();
}

Vector voxel_power(const SourceEstimate& y) {
  const Eigen::Index k = y.n_voxels();
  Vector p(k);
  for (Eigen::Index i = 0; i < k; ++i) p[i] = std::sqrt(y.amplitudes.middleRows<3>(3 * i).squaredNorm());
  return p;
}

Localization localize(const SourceEstimate& y, const SourceGrid& grid) {
  if (y.amplitudes.size() == 0 || y.amplitudes.rows() % 3 != 0) {
    throw ShapeError("localize: estimate must be a non-empty 3K x N matrix");
  }
  if (std::size_t(y.n_voxels()) != grid.size()) {
    throw ShapeError("localize: estimate and grid have different voxel counts");
  }
  const Vector p = voxel_power(y);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < p.size(); ++i) {
    if (p[i] > p[best]) best = i;
  }
  if (!(p[best] > 0.0)) throw NumericalError("no active source");
  return {std::size_t(best), grid.positions_mm[std::size_t(best)]};
}

}  // namespace rlrt
