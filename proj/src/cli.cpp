#include "rlrt/cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "rlrt/bench.hpp"
#include "rlrt/eloreta.hpp"
#include "rlrt/errors.hpp"
#include "rlrt/matrix_io.hpp"
#include "rlrt/reloreta.hpp"
#include "rlrt/serialization.hpp"

namespace fs = std::filesystem;

namespace rlrt {

namespace {

enum Exit { kOk = 0, kConfig = 1, kIo = 2, kNumerical = 3 };

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

BenchConfig load_config(const std::string& path) {
  BenchConfig cfg = bench_config_from_json(read_json_file(path));
  apply_seed_override(cfg);
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
}

void cmd_simulate(const std::string& config_path, const std::string& out_dir) {
  const BenchConfig cfg = load_config(config_path);
  const BenchSetup setup = prepare_benchmark(cfg);
  const SimulatedCell cell = simulate_cell(cfg, setup, 0, 0);
  const DipoleSourceSpec& source = setup.sources.front();
  const InverseProblem& ip = setup.inverse;

  const fs::path dir(out_dir);
  ensure_dir(dir);
  save_matrix((dir / "forward_leadfield.bin").string(), setup.forward_leadfield.gain);
  save_matrix((dir / "inverse_leadfield.bin").string(), ip.leadfield.gain);
  save_matrix((dir / "epoch.bin").string(), cell.sim.epoch.data);
  save_matrix((dir / "noise_epoch.bin").string(), cell.sim.noise_epoch.data);

  Json truth;
  truth["voxel"] = nearest_grid_point(ip.grid, source.center_mm);
  truth["position_mm"] = {source.center_mm.x(), source.center_mm.y(), source.center_mm.z()};
  truth["moment"] = {source.moment.x(), source.moment.y(), source.moment.z()};
  truth["snr_db"] = cfg.snr_levels_db.front() ? Json(*cfg.snr_levels_db.front()) : Json("inf");
  truth["noise_gain"] = cell.sim.noise_gain;
  write_text_file((dir / "truth.json").string(), truth.dump(2) + "\n");
  write_text_file((dir / "forward_geometry.json").string(),
                  geometry_to_json(cfg.head, ip.forward_electrodes, setup.forward_grid).dump(2) + "\n");
  write_text_file((dir / "inverse_geometry.json").string(),
                  geometry_to_json(ip.model, ip.electrodes, ip.grid).dump(2) + "\n");
}

struct LocalizeArgs {
  std::string method;
  std::string leadfield;
  std::string eeg;
  std::string geometry;
  std::string out;
  double alpha = 0.05;
  double epsilon = 0.005;
  int max_iter = 60;
};

void cmd_localize(const LocalizeArgs& a) {
  const Method method = parse_method(a.method);
  LeadField lf;
  lf.gain = load_matrix(a.leadfield);
  EegEpoch epoch;
  epoch.data = load_matrix(a.eeg);
  if (lf.gain.cols() == 0 || lf.gain.cols() % 3 != 0) {
    throw ShapeError("lead field " + shape(lf.gain) + " must have 3K columns");
  }
  if (lf.gain.rows() != epoch.data.rows()) {
    throw ShapeError("lead field is " + shape(lf.gain) + " but EEG is " + shape(epoch.data) +
                     " (electrode counts differ)");
  }

  std::optional<SourceGrid> grid;
  if (!a.geometry.empty()) {
    grid = geometry_from_json(read_json_file(a.geometry)).grid;
    if (Eigen::Index(grid->size()) != lf.n_voxels()) {
      throw ShapeError("geometry has " + std::to_string(grid->size()) + " grid points but lead field " +
                       shape(lf.gain) + " has " + std::to_string(lf.n_voxels()) + " voxels");
    }
  }

  ReloretaConfig cfg;
  cfg.alpha = a.alpha;
  cfg.epsilon = a.epsilon;
  cfg.max_outer_iter = a.max_iter;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  ReloretaTrace trace;
  if (method == Method::eloreta) {
    const EloretaState st = eloreta_weights(lf, cfg.eloreta_options());
    trace.estimate = eloreta_apply(st, lf, epoch);
    EegEpoch centred = epoch;
    centred.data = st.centering * epoch.data;
    ReloretaIteration rec;
    rec.j = 1;
    rec.e_eloreta = rec.e_reloreta = reconstruction_error(lf, trace.estimate, centred);
    trace.iterations.push_back(rec);
    trace.converged = st.converged;
  } else {
    trace = run_reloreta(lf, epoch, cfg);
  }

  const Vector power = voxel_power(trace.estimate);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < power.size(); ++i) {
    if (power[i] > power[best]) best = i;
  }
  if (!(power[best] > 0.0)) throw NumericalError("no active source");
  Localization loc;
  loc.voxel = std::size_t(best);
  std::optional<Localization> located;
  if (grid) {
    loc.position_mm = grid->positions_mm[loc.voxel];
    located = loc;
  }
  Json j = trace_to_json(trace, located, method == Method::reloreta);
  if (!grid) j["argmax_voxel"] = loc.voxel;
  write_text_file(a.out, j.dump(2) + "\n");
}

fs::path summary_path(const std::string& csv_path) {
  fs::path p(csv_path);
  p.replace_extension(".summary.json");
  return p;
}

void cmd_benchmark(const std::string& config_path, const std::string& out, unsigned jobs) {
  const BenchConfig cfg = load_config(config_path);
  const auto records = run_benchmark(cfg, jobs);
  for (const auto& r : records) {
    if (!r.failure.empty()) {
      std::cerr << "cell failed: source " << r.source_id << ", " << to_string(r.method) << ": " << r.failure << "\n";
    }
  }
  write_text_file(out, records_to_csv(records));
  const auto cells = summarize(records);
  write_text_file(summary_path(out).string(), summary_to_json(cells).dump(2) + "\n");
  for (const auto& c : cells) {
    std::cout << c.method << " snr=" << (c.snr_db ? std::to_string(*c.snr_db) : "inf") << " n=" << c.n
              << " median=" << c.median << " mean=" << c.mean << " converged=" << c.n_converged << "\n";
  }
}

void cmd_report(const std::string& csv, const std::string& out) {
  const auto records = records_from_csv(read_text_file(csv));
  write_text_file(out, summary_to_json(summarize(records)).dump(2) + "\n");
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Robust EEG source localization: simulation, eLORETA/ReLORETA, benchmarks"};
  app.require_subcommand(1);

  std::string config, out, csv;
  unsigned jobs = 1;
  LocalizeArgs loc;

  auto* sim = app.add_subcommand("simulate", "Simulate one source and write lead fields, epochs and truth");
  sim->add_option("--config", config, "Benchmark-style JSON config")->required();
  sim->add_option("--out", out, "Output directory")->required();

  auto* lz = app.add_subcommand("localize", "Run a solver on a lead field and an EEG matrix");
  lz->add_option("--method", loc.method, "eloreta or reloreta")->required()->check(CLI::IsMember({"eloreta", "reloreta"}));
  lz->add_option("--leadfield", loc.leadfield, "Lead field matrix (.bin)")->required();
  lz->add_option("--eeg", loc.eeg, "EEG matrix (.bin)")->required();
  lz->add_option("--geometry", loc.geometry, "Geometry JSON providing grid positions");
  lz->add_option("--alpha", loc.alpha, "Regularization")->capture_default_str();
  lz->add_option("--epsilon", loc.epsilon, "NDRE threshold")->capture_default_str();
  lz->add_option("--max-iter", loc.max_iter, "Maximum outer iterations")->capture_default_str();
  lz->add_option("--out", loc.out, "Trace JSON output")->required();

  auto* bm = app.add_subcommand("benchmark", "Run a sweep and write CSV plus summary JSON");
  bm->add_option("--config", config, "Benchmark JSON config")->required();
  bm->add_option("--out", out, "CSV output")->required();
  bm->add_option("--jobs", jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  auto* rp = app.add_subcommand("report", "Summarize a benchmark CSV");
  rp->add_option("--csv", csv, "Benchmark CSV")->required();
  rp->add_option("--out", out, "Summary JSON output")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*sim) cmd_simulate(config, out);
    if (*lz) cmd_localize(loc);
    if (*bm) cmd_benchmark(config, out, jobs);
    if (*rp) cmd_report(csv, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  }
  return kOk;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> copy = args;
  std::vector<char*> argv;
  for (auto& s : copy) argv.push_back(s.data());
  argv.push_back(nullptr);
  return run_cli(int(copy.size()), argv.data());
}

}  // namespace rlrt
