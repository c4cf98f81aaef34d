#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "doctest.h"
#include "rlrt/eloreta.hpp"
#include "rlrt/errors.hpp"
#include "test_support.hpp"

using namespace rlrt;
using testing::max_abs;
using testing::random_matrix;

namespace {

LeadField random_leadfield(std::mt19937_64& rng, Eigen::Index m, Eigen::Index k) {
  LeadField lf;
  lf.gain = centering_matrix(m) * random_matrix(rng, m, 3 * k);
  return lf;
}

// Dense right-hand side of the weight equation, built without the library's
// pseudoinverse or block helpers.
std::vector<Matrix3> weight_map(const LeadField& lf, const std::vector<Matrix3>& w, double alpha) {
  const Matrix& h = lf.gain;
  const Eigen::Index m = h.rows(), k = h.cols() / 3;
  Matrix w_inv = Matrix::Zero(3 * k, 3 * k);
  for (Eigen::Index i = 0; i < k; ++i) w_inv.block<3, 3>(3 * i, 3 * i) = w[std::size_t(i)].inverse();
  const Matrix g = h * w_inv * h.transpose();
  Matrix l = Matrix::Identity(m, m) - Matrix::Constant(m, m, 1.0 / double(m));
  const Matrix a = g + alpha * g.trace() / double(m) * l;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a);
  cod.setThreshold(1e-12);
  const Matrix ap = cod.pseudoInverse();
  std::vector<Matrix3> out;
  for (Eigen::Index i = 0; i < k; ++i) {
    Matrix3 b = h.middleCols<3>(3 * i).transpose() * ap * h.middleCols<3>(3 * i);
    b = 0.5 * (b + b.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix3> es(b);
    out.push_back(es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                  es.eigenvectors().transpose());
  }
  return out;
}

double fixed_point_residual(const LeadField& lf, const EloretaState& st) {
  const auto rhs = weight_map(lf, st.weights, st.alpha);
  double worst = 0.0;
  for (std::size_t i = 0; i < rhs.size(); ++i) {
    worst = std::max(worst, (rhs[i] - st.weights[i]).norm() / st.weights[i].norm());
  }
  return worst;
}

}  // namespace

TEST_CASE("centering_matrix") {
  const Matrix l2 = centering_matrix(2);
  CHECK(l2(0, 0) == 0.5);
  CHECK(l2(0, 1) == -0.5);
  CHECK(l2(1, 0) == -0.5);
  CHECK(l2(1, 1) == 0.5);
  for (int m : {2, 3, 7, 20}) {
    const Matrix l = centering_matrix(m);
    CHECK(max_abs(l * Vector::Ones(m)) <= 1e-15);
    CHECK(max_abs(l - l.transpose()) == 0.0);
  }
  const Matrix l20 = centering_matrix(20);
  CHECK(max_abs(l20 * l20 - l20) <= 1e-12);
  CHECK_THROWS_AS(centering_matrix(1), std::invalid_argument);
}

TEST_CASE("pinv: identity, diagonal, zero") {
  CHECK(max_abs(pinv(Matrix::Identity(5, 5)) - Matrix::Identity(5, 5)) <= 1e-15);
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2;
  const Matrix dp = pinv(d);
  CHECK(dp(0, 0) == doctest::Approx(0.5));
  CHECK(dp(1, 1) == 0.0);
  CHECK(dp(0, 1) == 0.0);
  CHECK(max_abs(pinv(Matrix::Zero(3, 4))) == 0.0);
  CHECK(pinv(Matrix::Zero(3, 4)).rows() == 4);
}

TEST_CASE("pinv: Penrose conditions on rank-deficient matrices") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 10; ++t) {
    const Matrix a = random_matrix(rng, 20, 12) * random_matrix(rng, 12, 20);
    const Matrix ap = pinv(a);
    const double s = max_abs(a);
    CHECK(max_abs(a * ap * a - a) <= 1e-9 * s);
    CHECK(max_abs(ap * a * ap - ap) <= 1e-8 * max_abs(ap));
    CHECK(max_abs((a * ap).transpose() - a * ap) <= 1e-8);
    CHECK(max_abs((ap * a).transpose() - ap * a) <= 1e-8);
  }
  const Matrix rect = random_matrix(rng, 7, 3) * random_matrix(rng, 3, 11);
  const Matrix rp = pinv(rect);
  CHECK(rp.rows() == 11);
  CHECK(max_abs(rect * rp * rect - rect) <= 1e-9 * max_abs(rect));
}

TEST_CASE("sym_sqrt") {
  CHECK(max_abs(sym_sqrt(Matrix3::Identity()) - Matrix3::Identity()) <= 1e-15);
  const Matrix3 d = Eigen::Vector3d(4, 9, 16).asDiagonal();
  CHECK(max_abs(sym_sqrt(d) - Matrix3(Eigen::Vector3d(2, 3, 4).asDiagonal())) <= 1e-14);

  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    const Matrix b = random_matrix(rng, 3, 3);
    const Matrix3 a = b * b.transpose();
    const Matrix3 s = sym_sqrt(a);
    CHECK(max_abs(s * s - a) <= 1e-9 * max_abs(a));
    CHECK(max_abs(s - s.transpose()) <= 1e-12 * max_abs(s));
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix3>(s).eigenvalues().minCoeff() >= -1e-12);
  }

  Matrix3 asym = Matrix3::Identity();
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(sym_sqrt(asym), std::invalid_argument);
  Matrix3 tiny_neg = Eigen::Vector3d(1, 1, -1e-12).asDiagonal();
  CHECK_NOTHROW(sym_sqrt(tiny_neg));
  Matrix3 neg = Eigen::Vector3d(1, 1, -0.5).asDiagonal();
  CHECK_THROWS_AS(sym_sqrt(neg), std::invalid_argument);
}

TEST_CASE("eloreta_weights: zero sweeps leave the identity initialization") {
  std::mt19937_64 rng(1);
  const LeadField lf = random_leadfield(rng, 8, 5);
  EloretaOptions o;
  o.max_iter = 0;
  const EloretaState st = eloreta_weights(lf, o);
  REQUIRE(st.weights.size() == 5);
  for (const auto& w : st.weights) CHECK(w == Matrix3::Identity());
  CHECK(st.iterations_used == 0);
  CHECK_FALSE(st.converged);
}

TEST_CASE("eloreta_weights: K = 1 converged weights are a fixed point") {
  std::mt19937_64 rng(2);
  const LeadField lf = random_leadfield(rng, 6, 1);
  EloretaOptions o;
  o.max_iter = 1000;
  o.w_tol = 1e-13;
  const EloretaState st = eloreta_weights(lf, o);
  CHECK(st.converged);
  CHECK(fixed_point_residual(lf, st) <= 1e-8);
}

TEST_CASE("eloreta_weights: fixed point on random problems, with and without alpha") {
  std::mt19937_64 rng(3);
  for (double alpha : {0.05, 0.0}) {
    CAPTURE(alpha);
    const LeadField lf = random_leadfield(rng, 12, 3);
    EloretaOptions o;
    o.alpha = alpha;
    o.max_iter = 2000;
    o.w_tol = 1e-13;
    const EloretaState st = eloreta_weights(lf, o);
    CHECK(st.converged);
    CHECK(fixed_point_residual(lf, st) <= 1e-8);
  }
}

TEST_CASE("eloreta_weights: default tolerance leaves a residual of the order of w_tol") {
  std::mt19937_64 rng(5);
  const LeadField lf = random_leadfield(rng, 10, 20);
  const EloretaState st = eloreta_weights(lf);
  CHECK(st.converged);
  CHECK(fixed_point_residual(lf, st) <= 1e-5);
  for (const auto& w : st.weights) {
    CHECK(max_abs(w - w.transpose()) <= 1e-9 * max_abs(w));
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix3>(w).eigenvalues().minCoeff() >= -1e-9 * max_abs(w));
  }
  CHECK(st.centering == centering_matrix(10));
  CHECK(st.regularization > 0.0);
}

TEST_CASE("eloreta_weights: inverse operator matches its definition") {
  std::mt19937_64 rng(6);
  const LeadField lf = random_leadfield(rng, 9, 4);
  const EloretaState st = eloreta_weights(lf);
  const Eigen::Index k = 4, m = 9;
  Matrix w_inv = Matrix::Zero(3 * k, 3 * k);
  for (Eigen::Index i = 0; i < k; ++i) w_inv.block<3, 3>(3 * i, 3 * i) = st.weights[std::size_t(i)].inverse();
  const Matrix g = lf.gain * w_inv * lf.gain.transpose();
  const Matrix a = g + st.regularization * centering_matrix(m);
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a);
  const Matrix t = w_inv * lf.gain.transpose() * cod.pseudoInverse();
  CHECK(max_abs(t - st.inverse_operator) <= 1e-6 * max_abs(t));
}

TEST_CASE("eloreta_weights: rejects bad input") {
  LeadField lf;
  lf.gain = Matrix::Ones(4, 5);
  CHECK_THROWS_AS(eloreta_weights(lf), ShapeError);
  lf.gain = Matrix::Ones(4, 6);
  lf.gain(0, 0) = std::nan("");
  CHECK_THROWS_AS(eloreta_weights(lf), NumericalError);
  std::mt19937_64 rng(1);
  const LeadField ok = random_leadfield(rng, 4, 2);
  EloretaOptions o;
  o.alpha = -1;
  CHECK_THROWS_AS(eloreta_weights(ok, o), std::invalid_argument);
}

TEST_CASE("eloreta_apply: linearity and reference invariance") {
  std::mt19937_64 rng(7);
  const LeadField lf = random_leadfield(rng, 10, 6);
  const EloretaState st = eloreta_weights(lf);
  EegEpoch x;
  x.data = Matrix::Zero(10, 5);
  CHECK(eloreta_apply(st, lf, x).amplitudes.isZero(0.0));

  x.data = random_matrix(rng, 10, 5);
  const Matrix y = eloreta_apply(st, lf, x).amplitudes;
  EegEpoch x2 = x;
  x2.data *= 4.0;
  CHECK(eloreta_apply(st, lf, x2).amplitudes == 4.0 * y);
  x2.data *= 0.25 * 3.7;
  CHECK(max_abs(eloreta_apply(st, lf, x2).amplitudes - 3.7 * y) <= 1e-12 * max_abs(y) * 3.7);

  EegEpoch shifted = x;
  shifted.data.rowwise() += random_matrix(rng, 1, 5).row(0);
  CHECK(max_abs(eloreta_apply(st, lf, shifted).amplitudes - y) <= 1e-9 * max_abs(y));

  EegEpoch wrong;
  wrong.data = Matrix::Ones(9, 5);
  CHECK_THROWS_WITH_AS(eloreta_apply(st, lf, wrong), doctest::Contains("9"), ShapeError);
}

TEST_CASE("reconstruction_error") {
  std::mt19937_64 rng(9);
  const LeadField lf = random_leadfield(rng, 7, 3);
  SourceEstimate y;
  y.amplitudes = random_matrix(rng, 9, 4);
  EegEpoch x;
  x.data = lf.gain * y.amplitudes;
  CHECK(reconstruction_error(lf, y, x) <= 1e-24 * x.data.squaredNorm() + 1e-300);
  SourceEstimate zero;
  zero.amplitudes = Matrix::Zero(9, 4);
  x.data = random_matrix(rng, 7, 4);
  CHECK(reconstruction_error(lf, zero, x) == x.data.squaredNorm());

  double oracle = 0.0;
  for (Eigen::Index n = 0; n < 4; ++n) {
    const Vector r = x.data.col(n) - lf.gain * y.amplitudes.col(n);
    for (Eigen::Index i = 0; i < r.size(); ++i) oracle += r[i] * r[i];
  }
  CHECK(std::abs(reconstruction_error(lf, y, x) - oracle) <= 1e-12 * oracle);
}

TEST_CASE("localize") {
  SourceGrid g;
  for (int i = 0; i < 4; ++i) g.positions_mm.push_back(Vec3(i, 0, 0));
  SourceEstimate y;
  y.amplitudes = Matrix::Zero(12, 3);
  y.amplitudes(7, 1) = -2.0;
  CHECK(localize(y, g).voxel == 2);
  CHECK(localize(y, g).position_mm == Vec3(2, 0, 0));

  y.amplitudes(9, 0) = 2.0;
  CHECK(localize(y, g).voxel == 2);  // tie goes to the lower index
  y.amplitudes(10, 2) = 0.1;
  CHECK(localize(y, g).voxel == 3);
  y.amplitudes *= 1e-9;
  CHECK(localize(y, g).voxel == 3);

  SourceEstimate zero;
  zero.amplitudes = Matrix::Zero(12, 3);
  CHECK_THROWS_WITH_AS(localize(zero, g), "no active source", NumericalError);
  g.positions_mm.pop_back();
  CHECK_THROWS_AS(localize(y, g), ShapeError);
}

TEST_CASE("exact model: every voxel of a small grid localizes to itself") {
  HeadModel model;
  const ElectrodeArray e = standard_1020_electrodes(model.radius_mm);
  const SourceGrid g = build_sphere_grid(model.radius_mm, 30.0, 10.0);
  REQUIRE(g.size() <= 100);
  const LeadField lf = assemble_leadfield(model, e, g);
  const EloretaState st = eloreta_weights(lf);
  const Vector w = erp_waveform(ErpSpec{}, 500, 200);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  int hits = 0;
  for (std::size_t v = 0; v < g.size(); ++v) {
    const Vec3 moment = Vec3(n(rng), n(rng), n(rng)).normalized() * 1e-2;
    EegEpoch x;
    x.data = noise_free_signal(lf, {{v, moment}}, w);
    const Localization loc = localize(eloreta_apply(st, lf, x), g);
    CAPTURE(v);
    CHECK(loc.voxel == v);
    hits += loc.voxel == v;
  }
  MESSAGE("exact-model hits: " << hits << "/" << g.size());
}
