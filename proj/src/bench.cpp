#include "rlrt/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "rlrt/errors.hpp"
#include "rlrt/random.hpp"

namespace rlrt {

namespace {

constexpr std::uint64_t kSourceTag = 0x737263;   // "src"
constexpr std::uint64_t kExtentTag = 0x657874;   // "ext"
constexpr std::uint64_t kNoiseTag = 0x736e72;    // "snr"

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string to_string(SourceMode m) {
  return m == SourceMode::single_dipole ? "single_dipole" : "extended";
}

std::string to_string(Method m) { return m == Method::eloreta ? "eloreta" : "reloreta"; }

Method parse_method(const std::string& s) {
  if (s == "eloreta") return Method::eloreta;
  if (s == "reloreta") return Method::reloreta;
  throw ConfigError("unknown method '" + s + "' (expected eloreta or reloreta)");
}

void BenchConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  need(n_sources >= 1, "n_sources must be >= 1");
  need(!methods.empty(), "methods must not be empty");
  need(!snr_levels_db.empty(), "snr_levels_db must not be empty");
  for (const auto& s : snr_levels_db) need(!s || std::isfinite(*s), "snr_levels_db entries must be finite or null");
  need(forward_spacing_mm > 0.0, "forward_spacing_mm must be positive");
  need(grid_margin_mm >= 0.0, "grid_margin_mm must be >= 0");
  need(min_depth_mm >= 0.0, "min_depth_mm must be >= 0");
  need(moment_magnitude > 0.0, "moment_magnitude must be positive");
  need(n_trials >= 1, "n_trials must be >= 1");
  need(brown_fraction >= 0.0 && brown_fraction <= 1.0, "brown_fraction must lie in [0, 1]");
  need(fs_hz > 0.0, "fs_hz must be positive");
  need(n_samples >= 2, "n_samples must be >= 2");
  if (source_mode == SourceMode::extended) {
    need(n_dipoles >= 1, "n_dipoles must be >= 1");
    need(extent_mm >= 0.0, "extent_mm must be >= 0");
    need((extent_mm == 0.0) == (n_dipoles == 1), "extent_mm is 0 exactly when n_dipoles is 1");
  }
  try {
    head.validate();
    perturbation.validate();
    solver.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

double localization_error(const Vec3& p_true, const Vec3& p_est) { return (p_true - p_est).norm(); }

std::vector<std::string> check_trace_invariants(const ReloretaTrace& trace, const ReloretaConfig& cfg) {
  std::vector<std::string> out;
  const auto& it = trace.iterations;
  if (it.empty()) out.push_back("empty trace");
  if (int(it.size()) > cfg.max_outer_iter) out.push_back("trace longer than max_outer_iter");
  for (const auto& r : it) {
    const std::string at = "j=" + std::to_string(r.j) + ": ";
    if (r.step_accepted && !(r.e_reloreta < r.e_eloreta)) out.push_back(at + "accepted step did not lower E");
    if (r.e_reloreta > r.e_eloreta) out.push_back(at + "E increased");
    if (r.dre != std::abs(r.e_reloreta - r.e_eloreta)) out.push_back(at + "dre bookkeeping");
    if (r.ndre && !(*r.ndre >= 0.0)) out.push_back(at + "negative NDRE");
    if (r.j >= 2 && !r.ndre) out.push_back(at + "missing NDRE");
  }
  if (trace.converged) {
    if (it.empty() || !it.back().ndre || !(*it.back().ndre <= cfg.epsilon)) {
      out.push_back("converged without NDRE <= epsilon");
    }
  }
  return out;
}

std::vector<DipoleSourceSpec> sample_sources(const BenchConfig& cfg, const SourceGrid& forward_grid) {
  std::vector<std::size_t> candidates;
  const double max_r = cfg.head.radius_mm - cfg.min_depth_mm;
  for (std::size_t i = 0; i < forward_grid.size(); ++i) {
    const Vec3& p = forward_grid.positions_mm[i];
    if ((p - cfg.head.center_mm).norm() > max_r) continue;
    // An extended source needs enough grid support around its centre.
    if (cfg.source_mode == SourceMode::extended &&
        grid_points_within(forward_grid, p, cfg.extent_mm).size() < std::size_t(cfg.n_dipoles)) {
      continue;
    }
    candidates.push_back(i);
  }
  if (candidates.empty()) throw ConfigError("no forward grid point qualifies as a source location");

  std::vector<DipoleSourceSpec> out;
  for (int s = 0; s < cfg.n_sources; ++s) {
    auto rng = make_stream(cfg.seed, {kSourceTag, std::uint64_t(s)});
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    DipoleSourceSpec spec;
    spec.center_mm = forward_grid.positions_mm[candidates[pick(rng)]];
    Vec3 dir;
    do {
      dir = Vec3(normal(rng), normal(rng), normal(rng));
    } while (dir.norm() < 1e-12);
    spec.moment = cfg.moment_magnitude * dir.normalized();
    if (cfg.source_mode == SourceMode::extended) {
      spec.extent_mm = cfg.extent_mm;
      spec.n_dipoles = cfg.n_dipoles;
    }
    out.push_back(spec);
  }
  return out;
}

BenchSetup prepare_benchmark(const BenchConfig& cfg) {
  cfg.validate();
  BenchSetup setup;
  setup.forward_grid = build_sphere_grid(cfg.head.radius_mm, cfg.forward_spacing_mm, cfg.grid_margin_mm);
  const ElectrodeArray nominal = standard_1020_electrodes(cfg.head.radius_mm, cfg.head.center_mm);
  setup.inverse = build_inverse_problem(cfg.head, nominal, cfg.perturbation, cfg.forward_spacing_mm,
                                        cfg.grid_margin_mm);
  setup.forward_leadfield = assemble_leadfield(cfg.head, setup.inverse.forward_electrodes, setup.forward_grid);
  setup.sources = sample_sources(cfg, setup.forward_grid);
  return setup;
}

SimulatedCell simulate_cell(const BenchConfig& cfg, const BenchSetup& setup, int source_id,
                            std::size_t snr_index) {
  const DipoleSourceSpec& spec = setup.sources.at(std::size_t(source_id));
  SimulatedCell cell;
  const std::uint64_t extent_seed = make_stream(cfg.seed, {kExtentTag, std::uint64_t(source_id)})();
  cell.active = extended_source_dipoles(spec, setup.forward_grid, extent_seed);

  const auto& snr = cfg.snr_levels_db.at(snr_index);
  if (!snr) {
    const Vector waveform = erp_waveform(cfg.erp, cfg.fs_hz, cfg.n_samples);
    cell.sim.epoch.data = noise_free_signal(setup.forward_leadfield, cell.active, waveform);
    cell.sim.epoch.fs_hz = cfg.fs_hz;
    cell.sim.noise_epoch.data = Matrix::Zero(cell.sim.epoch.data.rows(), cell.sim.epoch.data.cols());
    cell.sim.noise_epoch.fs_hz = cfg.fs_hz;
    return cell;
  }
  NoiseSpec noise;
  noise.target_snr_db = *snr;
  noise.n_trials = cfg.n_trials;
  noise.brown_fraction = cfg.brown_fraction;
  noise.seed = make_stream(cfg.seed, {kNoiseTag, std::uint64_t(source_id), std::uint64_t(snr_index)})();
  cell.sim = simulate_epoch(setup.forward_leadfield, cell.active, cfg.erp, noise, cfg.fs_hz, cfg.n_samples);
  return cell;
}

namespace {

void solve_cell(const BenchConfig& cfg, const BenchSetup& setup, const EegEpoch& epoch, BenchRecord& rec) {
  const auto t0 = std::chrono::steady_clock::now();
  const InverseProblem& ip = setup.inverse;
  SourceEstimate y;
  if (rec.method == Method::eloreta) {
    const EloretaState st = eloreta_weights(ip.leadfield, cfg.solver.eloreta_options());
    y = eloreta_apply(st, ip.leadfield, epoch);
    EegEpoch centred = epoch;
    centred.data = st.centering * epoch.data;
    rec.e_recon_final = reconstruction_error(ip.leadfield, y, centred);
    rec.outer_iters = 1;
    rec.converged = st.converged;
  } else {
    ReloretaTrace trace = run_reloreta(ip.leadfield, epoch, cfg.solver);
    rec.invariant_violations = int(check_trace_invariants(trace, cfg.solver).size());
    rec.e_recon_final = trace.iterations.back().e_reloreta;
    rec.outer_iters = int(trace.iterations.size());
    rec.converged = trace.converged;
    y = std::move(trace.estimate);
  }
  const Localization loc = localize(y, ip.grid);
  rec.estimated_position_mm = loc.position_mm;
  rec.error_mm = localization_error(rec.true_position_mm, rec.estimated_position_mm);
  if (cfg.record_wall_time) {
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
}

}  // namespace

std::vector<BenchRecord> run_benchmark(const BenchConfig& cfg, unsigned jobs) {
  const BenchSetup setup = prepare_benchmark(cfg);
  const std::size_t n_snr = cfg.snr_levels_db.size();
  const std::size_t n_methods = cfg.methods.size();
  const std::size_t n_tasks = std::size_t(cfg.n_sources) * n_snr;
  std::vector<BenchRecord> rows(n_tasks * n_methods);

  auto run_task = [&](std::size_t task) {
    const int source_id = int(task / n_snr);
    const std::size_t snr_index = task % n_snr;
    BenchRecord* out = &rows[task * n_methods];
    for (std::size_t m = 0; m < n_methods; ++m) {
      BenchRecord& r = out[m];
      r.source_id = source_id;
      r.true_position_mm = setup.sources[std::size_t(source_id)].center_mm;
      r.snr_db = cfg.snr_levels_db[snr_index];
      r.snr_index = snr_index;
      r.method = cfg.methods[m];
    }
    SimulatedCell cell;
    try {
      cell = simulate_cell(cfg, setup, source_id, snr_index);
    } catch (const std::exception& e) {
      for (std::size_t m = 0; m < n_methods; ++m) out[m].failure = std::string("simulation: ") + e.what();
      return;
    }
    for (std::size_t m = 0; m < n_methods; ++m) {
      try {
        solve_cell(cfg, setup, cell.sim.epoch, out[m]);
      } catch (const std::exception& e) {
        out[m].failure = e.what();
        out[m].converged = false;
      }
    }
  };

  const unsigned n_threads = std::max(1u, std::min<unsigned>(jobs, unsigned(n_tasks)));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t; (t = next.fetch_add(1)) < n_tasks;) run_task(t);
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }

  // Already in canonical order; sorting keeps that explicit.
  std::vector<std::size_t> method_rank(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) method_rank[i] = i % n_methods;
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = rows[a];
    const auto& rb = rows[b];
    return std::tie(ra.source_id, ra.snr_index, method_rank[a]) < std::tie(rb.source_id, rb.snr_index, method_rank[b]);
  });
  std::vector<BenchRecord> sorted;
  sorted.reserve(rows.size());
  for (auto i : order) sorted.push_back(std::move(rows[i]));
  return sorted;
}

std::string records_to_csv(const std::vector<BenchRecord>& records) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& r : records) {
    out += std::to_string(r.source_id);
    for (int a = 0; a < 3; ++a) out += ',' + fmt(r.true_position_mm[a]);
    out += ',' + (r.snr_db ? fmt(*r.snr_db) : std::string("inf"));
    out += ',' + to_string(r.method);
    for (int a = 0; a < 3; ++a) out += ',' + fmt(r.estimated_position_mm[a]);
    out += ',' + fmt(r.error_mm);
    out += ',' + fmt(r.e_recon_final);
    out += ',' + std::to_string(r.outer_iters);
    out += r.converged ? ",true" : ",false";
    out += ',' + fmt(r.wall_ms);
    out += '\n';
  }
  return out;
}

namespace {

double parse_number(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw IoError("csv line " + std::to_string(line) + ": '" + s + "' is not a number");
  }
  return v;
}

}  // namespace

std::vector<BenchRecord> records_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw IoError("csv: missing or unexpected header row");
  std::vector<BenchRecord> out;
  std::map<std::string, std::size_t> snr_index;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 14) throw IoError("csv line " + std::to_string(lineno) + ": expected 14 fields");
    BenchRecord r;
    r.source_id = int(parse_number(f[0], lineno));
    for (int a = 0; a < 3; ++a) r.true_position_mm[a] = parse_number(f[1 + a], lineno);
    if (f[4] != "inf") r.snr_db = parse_number(f[4], lineno);
    r.snr_index = snr_index.emplace(f[4], snr_index.size()).first->second;
    try {
      r.method = parse_method(f[5]);
    } catch (const ConfigError& e) {
      throw IoError("csv line " + std::to_string(lineno) + ": " + e.what());
    }
    for (int a = 0; a < 3; ++a) r.estimated_position_mm[a] = parse_number(f[6 + a], lineno);
    r.error_mm = parse_number(f[9], lineno);
    r.e_recon_final = parse_number(f[10], lineno);
    r.outer_iters = int(parse_number(f[11], lineno));
    if (f[12] != "true" && f[12] != "false") throw IoError("csv line " + std::to_string(lineno) + ": bad converged flag");
    r.converged = f[12] == "true";
    r.wall_ms = parse_number(f[13], lineno);
    out.push_back(r);
  }
  return out;
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("percentile: empty sample");
  if (!(q >= 0.0 && q <= 100.0)) throw std::invalid_argument("percentile: q must lie in [0, 100]");
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * double(v.size() - 1);
  const auto lo = std::size_t(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

std::vector<CellSummary> summarize(const std::vector<BenchRecord>& records) {
  struct Acc {
    CellSummary s;
    std::vector<double> err;
    std::vector<double> iters;
  };
  std::vector<Acc> cells;
  for (const auto& r : records) {
    const std::string method = to_string(r.method);
    auto it = std::find_if(cells.begin(), cells.end(), [&](const Acc& a) {
      return a.s.method == method && a.s.snr_db == r.snr_db;
    });
    if (it == cells.end()) {
      cells.push_back({});
      it = cells.end() - 1;
      it->s.method = method;
      it->s.snr_db = r.snr_db;
    }
    ++it->s.n;
    if (r.converged) ++it->s.n_converged;
    if (std::isfinite(r.error_mm)) {
      it->err.push_back(r.error_mm);
      it->iters.push_back(double(r.outer_iters));
    } else {
      ++it->s.n_failed;
    }
  }
  std::vector<CellSummary> out;
  for (auto& a : cells) {
    if (!a.err.empty()) {
      a.s.median = percentile(a.err, 50.0);
      a.s.p25 = percentile(a.err, 25.0);
      a.s.p75 = percentile(a.err, 75.0);
      double sum = 0.0;
      for (double e : a.err) sum += e;
      a.s.mean = sum / double(a.err.size());
      a.s.max = *std::max_element(a.err.begin(), a.err.end());
      a.s.median_outer_iters = percentile(a.iters, 50.0);
    } else {
      a.s.median = a.s.p25 = a.s.p75 = a.s.mean = a.s.max = std::numeric_limits<double>::quiet_NaN();
      a.s.median_outer_iters = std::numeric_limits<double>::quiet_NaN();
    }
    out.push_back(a.s);
  }
  return out;
}

}  // namespace rlrt
