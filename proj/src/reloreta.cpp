#include "rlrt/reloreta.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "rlrt/errors.hpp"

namespace rlrt {

namespace {

// Keeps repeated rejections from overflowing lambda to infinity.
constexpr double kLambdaCeiling = 1e200;

std::string shape(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

}  // namespace

void ReloretaConfig::validate() const {
  if (!(alpha >= 0.0)) throw std::invalid_argument("reloreta: alpha must be >= 0");
  if (!(epsilon > 0.0)) throw std::invalid_argument("reloreta: epsilon must be positive");
  if (min_outer_iter < 2) throw std::invalid_argument("reloreta: min_outer_iter must be >= 2");
  if (max_outer_iter < min_outer_iter) {
    throw std::invalid_argument("reloreta: max_outer_iter must be >= min_outer_iter");
  }
  if (!(lambda_init > 0.0)) throw std::invalid_argument("reloreta: lambda_init must be positive");
  if (!(lambda_up > 1.0)) throw std::invalid_argument("reloreta: lambda_up must exceed 1");
  if (!(lambda_down > 0.0 && lambda_down < 1.0)) {
    throw std::invalid_argument("reloreta: lambda_down must lie in (0, 1)");
  }
  if (max_lambda_retries < 0) throw std::invalid_argument("reloreta: max_lambda_retries must be >= 0");
}

EloretaOptions ReloretaConfig::eloreta_options() const {
  EloretaOptions o;
  o.alpha = alpha;
  o.max_iter = eloreta_max_iter;
  o.w_tol = eloreta_w_tol;
  return o;
}

Matrix reloreta_gradient(const Matrix& r, const LeadField& lf, const SourceEstimate& y,
                         const EegEpoch& epoch) {
  const Matrix& h = lf.gain;
  const Matrix& x = epoch.data;
  if (r.rows() != h.rows() || r.cols() != h.rows() || y.amplitudes.rows() != h.cols() ||
      x.rows() != h.rows() || x.cols() != y.amplitudes.cols()) {
    throw ShapeError("reloreta_gradient: shapes do not conform (R " + shape(r) + ", H " + shape(h) +
                     ", Y " + shape(y.amplitudes) + ", X " + shape(x) + ")");
  }
  const Matrix hy = h * y.amplitudes;
  return 2.0 * (r * hy - x) * hy.transpose();
}

Matrix lm_step(const Matrix& r, const Matrix& d, double lambda) {
  if (!(lambda > -1.0)) throw std::invalid_argument("lm_step: lambda must exceed -1");
  if (r.rows() != d.rows() || r.cols() != d.cols()) {
    throw ShapeError("lm_step: R " + shape(r) + " and D " + shape(d) + " differ in shape");
  }
  return r - d / (1.0 + lambda);
}

double ndre(const std::vector<double>& dre_history) {
  if (dre_history.size() < 2) throw std::invalid_argument("ndre: undefined for fewer than two DRE values");
  const auto [lo, hi] = std::minmax_element(dre_history.begin(), dre_history.end());
  const double range = *hi - *lo;
  if (range == 0.0) return 0.0;
  const double last = dre_history.back();
  const double prev = dre_history[dre_history.size() - 2];
  return std::abs(last - prev) / range;
}

LeadField updated_leadfield(const Matrix& r, const LeadField& lf) {
  if (r.rows() != lf.gain.rows() || r.cols() != lf.gain.rows()) {
    throw ShapeError("updated_leadfield: R " + shape(r) + " does not match H " + shape(lf.gain));
  }
  LeadField out;
  out.gain.noalias() = r * lf.gain;
  out.grid_ref = lf.grid_ref;
  return out;
}

ReloretaTrace run_reloreta(const LeadField& lf, const EegEpoch& epoch, const ReloretaConfig& cfg) {
  cfg.validate();
  const Eigen::Index m = lf.gain.rows();
  if (epoch.data.rows() != m) {
    throw ShapeError("run_reloreta: epoch " + shape(epoch.data) + " does not match lead field " +
                     shape(lf.gain));
  }

  EegEpoch x = epoch;
  x.data = centering_matrix(m) * epoch.data;
  const EloretaOptions inner = cfg.eloreta_options();

  ReloretaTrace trace;
  Matrix r = Matrix::Identity(m, m);
  double lambda = cfg.lambda_init;
  std::vector<double> dre_history;

  for (int j = 1; j <= cfg.max_outer_iter; ++j) {
    const LeadField h_tilde = j == 1 ? lf : updated_leadfield(r, lf);
    EloretaState state;
    try {
      state = eloreta_weights(h_tilde, inner);
    } catch (const NumericalError& e) {
      throw NumericalError("run_reloreta: eLORETA failed at outer iteration " + std::to_string(j) +
                           ": " + e.what());
    }
    SourceEstimate y = eloreta_apply(state, h_tilde, x);

    const Matrix hy = lf.gain * y.amplitudes;
    const double e_eloreta = (x.data - r * hy).squaredNorm();
    if (!std::isfinite(e_eloreta)) {
      throw NumericalError("run_reloreta: non-finite reconstruction error at outer iteration " +
                           std::to_string(j));
    }
    const Matrix d = 2.0 * (r * hy - x.data) * hy.transpose();

    ReloretaIteration rec;
    rec.j = j;
    rec.e_eloreta = e_eloreta;
    rec.e_reloreta = e_eloreta;
    for (int attempt = 0; attempt <= cfg.max_lambda_retries; ++attempt) {
      rec.lambda_used = lambda;
      const Matrix proposal = lm_step(r, d, lambda);
      const double e_prop = (x.data - proposal * hy).squaredNorm();
      if (std::isfinite(e_prop) && e_prop < e_eloreta) {
        r = proposal;
        rec.e_reloreta = e_prop;
        rec.step_accepted = true;
        lambda *= cfg.lambda_down;
        break;
      }
      lambda = std::min(lambda * cfg.lambda_up, kLambdaCeiling);
    }

    rec.dre = std::abs(rec.e_reloreta - rec.e_eloreta);
    dre_history.push_back(rec.dre);
    if (j >= 2) rec.ndre = ndre(dre_history);
    trace.iterations.push_back(rec);
    if (j == 1) trace.initial_estimate = y;
    trace.estimate = std::move(y);

    if (j >= cfg.min_outer_iter && rec.ndre && *rec.ndre <= cfg.epsilon) {
      trace.converged = true;
      break;
    }
  }

  trace.transform = r;
  trace.updated_leadfield = updated_leadfield(r, lf);
  return trace;
}

}  // namespace rlrt
