#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "rlrt/errors.hpp"
#include "rlrt/reloreta.hpp"

using namespace rlrt;
using rlrt::testing::max_abs;
using rlrt::testing::random_matrix;

namespace {

struct SmallProblem {
  SourceGrid grid;
  LeadField lf;
  EegEpoch x;
};

SmallProblem small_problem(std::uint64_t seed) {
  SmallProblem p;
  HeadModel model;
  p.grid = build_sphere_grid(85, 20, 10);
  p.lf = assemble_leadfield(model, standard_1020_electrodes(85), p.grid);
  std::mt19937_64 rng(seed);
  const std::size_t v = std::uniform_int_distribution<std::size_t>(0, p.grid.size() - 1)(rng);
  std::normal_distribution<double> n(0.0, 1.0);
  const Vec3 m = Vec3(n(rng), n(rng), n(rng)).normalized() * 1e-2;
  const Matrix signal = noise_free_signal(p.lf, {{v, m}}, erp_waveform(ErpSpec{}, 500, 150));
  p.x.data = signal + 0.05 * max_abs(signal) * random_matrix(rng, signal.rows(), signal.cols());
  return p;
}

}  // namespace

TEST_CASE("reloreta_gradient: vanishes when the residual or Y is zero") {
  std::mt19937_64 rng(1);
  const Matrix r = Matrix::Identity(5, 5) + 0.1 * random_matrix(rng, 5, 5);
  LeadField lf;
  lf.gain = random_matrix(rng, 5, 12);
  SourceEstimate y;
  y.amplitudes = random_matrix(rng, 12, 7);
  EegEpoch x;
  x.data = r * lf.gain * y.amplitudes;
  CHECK(max_abs(reloreta_gradient(r, lf, y, x)) <= 1e-12 * max_abs(x.data) * max_abs(x.data));

  y.amplitudes.setZero();
  x.data = random_matrix(rng, 5, 7);
  CHECK(max_abs(reloreta_gradient(r, lf, y, x)) == 0.0);
}

TEST_CASE("reloreta_gradient: central finite differences on random instances") {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 20; ++t) {
    const auto c = rlrt::testing::finite_difference_check(rng);
    CAPTURE(c.m);
    CAPTURE(c.k);
    CAPTURE(c.n);
    CHECK(c.worst_relative <= 1e-5);
  }
}

TEST_CASE("reloreta_gradient: shape mismatch") {
  LeadField lf;
  lf.gain = Matrix::Zero(4, 6);
  SourceEstimate y;
  y.amplitudes = Matrix::Zero(6, 3);
  EegEpoch x;
  x.data = Matrix::Zero(4, 3);
  CHECK_NOTHROW(reloreta_gradient(Matrix::Identity(4, 4), lf, y, x));
  CHECK_THROWS_AS(reloreta_gradient(Matrix::Identity(5, 5), lf, y, x), ShapeError);
  x.data = Matrix::Zero(4, 2);
  CHECK_THROWS_AS(reloreta_gradient(Matrix::Identity(4, 4), lf, y, x), ShapeError);
}

TEST_CASE("lm_step") {
  std::mt19937_64 rng(3);
  const Matrix r = random_matrix(rng, 4, 4);
  const Matrix d = random_matrix(rng, 4, 4);
  CHECK(lm_step(r, Matrix::Zero(4, 4), 0.3) == r);
  CHECK((lm_step(r, d, 1e12) - r).norm() < 1e-11 * d.norm());
  CHECK(lm_step(Matrix::Identity(3, 3), Matrix::Identity(3, 3), 0.0).isZero(0.0));
  CHECK(max_abs(lm_step(r, d, 1.0) - (r - 0.5 * d)) <= 1e-15 * max_abs(r - 0.5 * d));
  CHECK_THROWS_AS(lm_step(r, d, -1.0), std::invalid_argument);
}

TEST_CASE("ndre") {
  CHECK(ndre({4.0, 1.0}) == doctest::Approx(1.0));
  CHECK(ndre({3.0, 3.0, 3.0}) == 0.0);
  CHECK(ndre({10.0, 6.0, 5.0}) == doctest::Approx(0.2));
  CHECK_THROWS_AS(ndre({1.0}), std::invalid_argument);
  CHECK_THROWS_AS(ndre({}), std::invalid_argument);
}

TEST_CASE("updated_leadfield") {
  std::mt19937_64 rng(4);
  LeadField lf;
  lf.gain = random_matrix(rng, 6, 9);
  lf.grid_ref = "g";
  const LeadField same = updated_leadfield(Matrix::Identity(6, 6), lf);
  CHECK(same.gain == lf.gain);
  CHECK(same.grid_ref == "g");
  CHECK(updated_leadfield(2.0 * Matrix::Identity(6, 6), lf).gain == 2.0 * lf.gain);
  const Matrix r1 = random_matrix(rng, 6, 6), r2 = random_matrix(rng, 6, 6);
  const Matrix a = updated_leadfield(r1 * r2, lf).gain;
  const Matrix b = updated_leadfield(r1, updated_leadfield(r2, lf)).gain;
  CHECK(max_abs(a - b) <= 1e-12 * max_abs(a));
  CHECK_THROWS_AS(updated_leadfield(Matrix::Identity(5, 5), lf), ShapeError);
}

TEST_CASE("ReloretaConfig::validate") {
  ReloretaConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = [](auto mutate) {
    ReloretaConfig k;
    mutate(k);
    CHECK_THROWS_AS(k.validate(), std::invalid_argument);
  };
  bad([](ReloretaConfig& k) { k.epsilon = 0; });
  bad([](ReloretaConfig& k) { k.min_outer_iter = 1; });
  bad([](ReloretaConfig& k) { k.max_outer_iter = 1; });
  bad([](ReloretaConfig& k) { k.lambda_init = 0; });
  bad([](ReloretaConfig& k) { k.lambda_up = 1; });
  bad([](ReloretaConfig& k) { k.lambda_down = 1; });
  bad([](ReloretaConfig& k) { k.lambda_down = 0; });
}

TEST_CASE("run_reloreta: first iteration reproduces a standalone eLORETA solve") {
  const SmallProblem p = small_problem(11);
  ReloretaConfig cfg;
  const ReloretaTrace tr = run_reloreta(p.lf, p.x, cfg);
  const EloretaState st = eloreta_weights(p.lf, cfg.eloreta_options());
  const SourceEstimate y = eloreta_apply(st, p.lf, p.x);
  REQUIRE(tr.initial_estimate.amplitudes.rows() == y.amplitudes.rows());
  CHECK(max_abs(tr.initial_estimate.amplitudes - y.amplitudes) <= 1e-12 * max_abs(y.amplitudes));

  const ReloretaIteration& first = tr.iterations.front();
  CHECK(first.j == 1);
  CHECK_FALSE(first.ndre.has_value());
  EegEpoch centred;
  centred.data = centering_matrix(p.x.data.rows()) * p.x.data;
  CHECK(first.e_eloreta == doctest::Approx(reconstruction_error(p.lf, y, centred)).epsilon(1e-10));
}

TEST_CASE("run_reloreta: trace bookkeeping and termination on random problems") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    CAPTURE(seed);
    const SmallProblem p = small_problem(seed);
    ReloretaConfig cfg;
    cfg.max_outer_iter = 15;
    const ReloretaTrace tr = run_reloreta(p.lf, p.x, cfg);
    REQUIRE_FALSE(tr.iterations.empty());
    CHECK(int(tr.iterations.size()) <= cfg.max_outer_iter);

    std::vector<double> history;
    for (std::size_t i = 0; i < tr.iterations.size(); ++i) {
      const ReloretaIteration& it = tr.iterations[i];
      CHECK(it.j == int(i) + 1);
      CHECK(it.dre == std::abs(it.e_reloreta - it.e_eloreta));
      CHECK(it.e_reloreta <= it.e_eloreta);
      if (it.step_accepted) CHECK(it.e_reloreta < it.e_eloreta);
      history.push_back(it.dre);
      if (it.j >= 2) {
        REQUIRE(it.ndre.has_value());
        CHECK(*it.ndre >= 0.0);
        CHECK(*it.ndre == ndre(history));
      }
    }
    const ReloretaIteration& last = tr.iterations.back();
    if (tr.converged) {
      CHECK(*last.ndre <= cfg.epsilon);
      CHECK(last.j >= cfg.min_outer_iter);
    } else {
      CHECK(last.j == cfg.max_outer_iter);
    }
    // Earlier iterations never met the stopping rule.
    for (std::size_t i = 1; i + 1 < tr.iterations.size(); ++i) CHECK(*tr.iterations[i].ndre > cfg.epsilon);

    CHECK(max_abs(tr.updated_leadfield.gain - tr.transform * p.lf.gain) == 0.0);
    CHECK(tr.estimate.amplitudes.allFinite());
  }
}

TEST_CASE("run_reloreta: the accepted transform lowers the residual of the recorded estimate") {
  const SmallProblem p = small_problem(21);
  ReloretaConfig cfg;
  cfg.max_outer_iter = 3;
  cfg.min_outer_iter = 2;
  cfg.epsilon = 1e-300;
  const ReloretaTrace tr = run_reloreta(p.lf, p.x, cfg);
  CHECK(tr.iterations.size() == 3);
  CHECK_FALSE(tr.converged);
  EegEpoch centred;
  centred.data = centering_matrix(p.x.data.rows()) * p.x.data;
  const double e = (centred.data - tr.transform * p.lf.gain * tr.estimate.amplitudes).squaredNorm();
  CHECK(e == doctest::Approx(tr.iterations.back().e_reloreta).epsilon(1e-9));
}

TEST_CASE("run_reloreta: flat DRE history terminates at the second iteration") {
  // Zero data: E = 0 at every iteration, so every DRE is 0.
  const SmallProblem p = small_problem(5);
  EegEpoch zero;
  zero.data = Matrix::Zero(p.x.data.rows(), p.x.data.cols());
  const ReloretaTrace tr = run_reloreta(p.lf, zero, ReloretaConfig{});
  CHECK(tr.converged);
  CHECK(tr.iterations.size() == 2);
  CHECK(*tr.iterations.back().ndre == 0.0);
  CHECK(tr.transform == Matrix::Identity(20, 20));
}

TEST_CASE("run_reloreta: errors") {
  const SmallProblem p = small_problem(6);
  EegEpoch wrong;
  wrong.data = Matrix::Zero(19, 10);
  CHECK_THROWS_AS(run_reloreta(p.lf, wrong, ReloretaConfig{}), ShapeError);
  ReloretaConfig bad;
  bad.epsilon = -1;
  CHECK_THROWS_AS(run_reloreta(p.lf, p.x, bad), std::invalid_argument);
  EegEpoch nan = p.x;
  nan.data(0, 0) = std::nan("");
  CHECK_THROWS_AS(run_reloreta(p.lf, nan, ReloretaConfig{}), NumericalError);
}
