#include "rlrt/serialization.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "rlrt/errors.hpp"

namespace rlrt {

namespace {

Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

std::string key_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

Vec3 vec_from(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": expected an array of 3 numbers");
  Vec3 v;
  for (int a = 0; a < 3; ++a) {
    if (!j[std::size_t(a)].is_number()) throw ConfigError(where + ": expected an array of 3 numbers");
    v[a] = j[std::size_t(a)].get<double>();
  }
  return v;
}

// Typed access to one JSON object that remembers which keys were consumed.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError((path_.empty() ? "config" : path_) + ": expected an object");
  }

  const Json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  double number(const std::string& key, double def) {
    const Json* v = find(key);
    if (!v) return def;
    if (!v->is_number()) fail(key, "expected a number");
    return v->get<double>();
  }

  long long integer(const std::string& key, long long def) {
    const Json* v = find(key);
    if (!v) return def;
    if (!v->is_number_integer()) fail(key, "expected an integer");
    return v->get<long long>();
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t def) {
    const Json* v = find(key);
    if (!v) return def;
    if (!v->is_number_unsigned()) fail(key, "expected a non-negative integer");
    return v->get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool def) {
    const Json* v = find(key);
    if (!v) return def;
    if (!v->is_boolean()) fail(key, "expected true or false");
    return v->get<bool>();
  }

  std::string string(const std::string& key, const std::string& def) {
    const Json* v = find(key);
    if (!v) return def;
    if (!v->is_string()) fail(key, "expected a string");
    return v->get<std::string>();
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw ConfigError(key_path(path_, key) + ": " + msg);
  }

  std::string path(const std::string& key) const { return key_path(path_, key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(key_path(path_, it.key()) + ": unknown key");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Runs a validate() that signals with std::invalid_argument and rethrows as
// ConfigError under `path`.
template <typename T>
void validate_as_config(const T& value, const std::string& path) {
  try {
    value.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace

Json geometry_to_json(const HeadModel& model, const ElectrodeArray& electrodes, const SourceGrid& grid) {
  Json j;
  j["radius_mm"] = model.radius_mm;
  j["conductivity_s_per_m"] = model.conductivity_s_per_m;
  j["electrodes"] = Json::array();
  for (std::size_t i = 0; i < electrodes.size(); ++i) {
    j["electrodes"].push_back({{"label", electrodes.labels[i]}, {"pos_mm", vec_json(electrodes.positions_mm[i])}});
  }
  Json positions = Json::array();
  for (const auto& p : grid.positions_mm) positions.push_back(vec_json(p));
  j["grid"] = {{"spacing_mm", grid.spacing_mm}, {"positions_mm", std::move(positions)}};
  return j;
}

Geometry geometry_from_json(const Json& j) {
  Geometry g;
  ObjectReader r(j, "");
  g.model.radius_mm = r.number("radius_mm", g.model.radius_mm);
  g.model.conductivity_s_per_m = r.number("conductivity_s_per_m", g.model.conductivity_s_per_m);
  if (const Json* e = r.find("electrodes")) {
    if (!e->is_array()) r.fail("electrodes", "expected an array");
    for (std::size_t i = 0; i < e->size(); ++i) {
      const std::string where = "electrodes[" + std::to_string(i) + "]";
      ObjectReader er((*e)[i], where);
      g.electrodes.labels.push_back(er.string("label", ""));
      const Json* pos = er.find("pos_mm");
      if (!pos) er.fail("pos_mm", "missing");
      g.electrodes.positions_mm.push_back(vec_from(*pos, er.path("pos_mm")));
      er.finish();
    }
  }
  if (const Json* gr = r.find("grid")) {
    ObjectReader gj(*gr, "grid");
    g.grid.spacing_mm = gj.number("spacing_mm", 0.0);
    if (const Json* ps = gj.find("positions_mm")) {
      if (!ps->is_array()) gj.fail("positions_mm", "expected an array");
      for (std::size_t i = 0; i < ps->size(); ++i) {
        g.grid.positions_mm.push_back(vec_from((*ps)[i], "grid.positions_mm[" + std::to_string(i) + "]"));
      }
    }
    gj.finish();
  }
  r.finish();
  return g;
}

Json perturbation_to_json(const PerturbationSpec& p) {
  return {{"tilt_deg", p.tilt_deg},
          {"jitter_mm", p.jitter_mm},
          {"conductivity_factor", p.conductivity_factor},
          {"geometry_factor", p.geometry_factor},
          {"inverse_spacing_mm", p.inverse_spacing_mm},
          {"seed", p.seed}};
}

Json solver_to_json(const ReloretaConfig& c) {
  return {{"alpha", c.alpha},
          {"epsilon", c.epsilon},
          {"max_outer_iter", c.max_outer_iter},
          {"min_outer_iter", c.min_outer_iter},
          {"lambda_init", c.lambda_init},
          {"lambda_up", c.lambda_up},
          {"lambda_down", c.lambda_down},
          {"max_lambda_retries", c.max_lambda_retries},
          {"eloreta_max_iter", c.eloreta_max_iter},
          {"eloreta_w_tol", c.eloreta_w_tol}};
}

Json trace_to_json(const ReloretaTrace& trace, const std::optional<Localization>& localization,
                   bool include_transform) {
  Json j;
  j["iterations"] = Json::array();
  for (const auto& r : trace.iterations) {
    Json it;
    it["j"] = r.j;
    it["e_reloreta"] = r.e_reloreta;
    it["e_eloreta"] = r.e_eloreta;
    it["dre"] = r.dre;
    it["ndre"] = r.ndre ? Json(*r.ndre) : Json(nullptr);
    it["lambda"] = r.lambda_used;
    it["accepted"] = r.step_accepted;
    j["iterations"].push_back(std::move(it));
  }
  j["converged"] = trace.converged;
  if (include_transform) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < trace.transform.rows(); ++i) {
      Json row = Json::array();
      for (Eigen::Index c = 0; c < trace.transform.cols(); ++c) row.push_back(trace.transform(i, c));
      rows.push_back(std::move(row));
    }
    j["R"] = std::move(rows);
  }
  if (localization) {
    j["argmax_voxel"] = localization->voxel;
    j["position_mm"] = vec_json(localization->position_mm);
  } else {
    j["argmax_voxel"] = nullptr;
    j["position_mm"] = nullptr;
  }
  return j;
}

PerturbationSpec perturbation_from_json(const Json& j, const std::string& path) {
  PerturbationSpec p;
  ObjectReader r(j, path);
  p.tilt_deg = r.number("tilt_deg", p.tilt_deg);
  p.jitter_mm = r.number("jitter_mm", p.jitter_mm);
  p.conductivity_factor = r.number("conductivity_factor", p.conductivity_factor);
  p.geometry_factor = r.number("geometry_factor", p.geometry_factor);
  p.inverse_spacing_mm = r.number("inverse_spacing_mm", p.inverse_spacing_mm);
  p.seed = r.unsigned_integer("seed", p.seed);
  r.finish();
  validate_as_config(p, path);
  return p;
}

ReloretaConfig solver_from_json(const Json& j, const std::string& path) {
  ReloretaConfig c;
  ObjectReader r(j, path);
  c.alpha = r.number("alpha", c.alpha);
  c.epsilon = r.number("epsilon", c.epsilon);
  c.max_outer_iter = int(r.integer("max_outer_iter", c.max_outer_iter));
  c.min_outer_iter = int(r.integer("min_outer_iter", c.min_outer_iter));
  c.lambda_init = r.number("lambda_init", c.lambda_init);
  c.lambda_up = r.number("lambda_up", c.lambda_up);
  c.lambda_down = r.number("lambda_down", c.lambda_down);
  c.max_lambda_retries = int(r.integer("max_lambda_retries", c.max_lambda_retries));
  c.eloreta_max_iter = int(r.integer("eloreta_max_iter", c.eloreta_max_iter));
  c.eloreta_w_tol = r.number("eloreta_w_tol", c.eloreta_w_tol);
  r.finish();
  validate_as_config(c, path);
  return c;
}

BenchConfig bench_config_from_json(const Json& j) {
  BenchConfig c;
  ObjectReader r(j, "");
  c.n_sources = int(r.integer("n_sources", c.n_sources));

  const std::string mode = r.string("source_mode", to_string(c.source_mode));
  if (mode == "single_dipole") {
    c.source_mode = SourceMode::single_dipole;
  } else if (mode == "extended") {
    c.source_mode = SourceMode::extended;
  } else {
    r.fail("source_mode", "expected \"single_dipole\" or \"extended\"");
  }
  c.extent_mm = r.number("extent_mm", c.extent_mm);
  c.n_dipoles = int(r.integer("n_dipoles", c.n_dipoles));

  if (const Json* s = r.find("snr_levels_db")) {
    if (!s->is_array() || s->empty()) r.fail("snr_levels_db", "expected a non-empty array");
    c.snr_levels_db.clear();
    for (const auto& v : *s) {
      if (v.is_null() || (v.is_string() && v.get<std::string>() == "inf")) {
        c.snr_levels_db.emplace_back(std::nullopt);
      } else if (v.is_number()) {
        c.snr_levels_db.emplace_back(v.get<double>());
      } else {
        r.fail("snr_levels_db", "entries must be numbers, null or \"inf\"");
      }
    }
  }
  if (const Json* p = r.find("perturbation")) c.perturbation = perturbation_from_json(*p, "perturbation");
  if (const Json* m = r.find("methods")) {
    if (!m->is_array() || m->empty()) r.fail("methods", "expected a non-empty array");
    c.methods.clear();
    for (const auto& v : *m) {
      if (!v.is_string()) r.fail("methods", "entries must be strings");
      try {
        c.methods.push_back(parse_method(v.get<std::string>()));
      } catch (const ConfigError& e) {
        r.fail("methods", e.what());
      }
    }
  }
  if (const Json* s = r.find("solver")) c.solver = solver_from_json(*s, "solver");
  c.forward_spacing_mm = r.number("forward_spacing_mm", c.forward_spacing_mm);
  c.seed = r.unsigned_integer("seed", c.seed);

  if (const Json* h = r.find("head")) {
    ObjectReader hr(*h, "head");
    c.head.radius_mm = hr.number("radius_mm", c.head.radius_mm);
    c.head.conductivity_s_per_m = hr.number("conductivity_s_per_m", c.head.conductivity_s_per_m);
    if (const Json* ctr = hr.find("center_mm")) c.head.center_mm = vec_from(*ctr, "head.center_mm");
    hr.finish();
    validate_as_config(c.head, "head");
  }
  c.grid_margin_mm = r.number("grid_margin_mm", c.grid_margin_mm);
  c.min_depth_mm = r.number("min_depth_mm", c.min_depth_mm);
  c.moment_magnitude = r.number("moment_magnitude", c.moment_magnitude);
  if (const Json* e = r.find("erp")) {
    ObjectReader er(*e, "erp");
    c.erp.latency_ms = er.number("latency_ms", c.erp.latency_ms);
    c.erp.width_ms = er.number("width_ms", c.erp.width_ms);
    c.erp.amplitude = er.number("amplitude", c.erp.amplitude);
    er.finish();
  }
  c.n_trials = int(r.integer("n_trials", c.n_trials));
  c.brown_fraction = r.number("brown_fraction", c.brown_fraction);
  c.fs_hz = r.number("fs_hz", c.fs_hz);
  const long long n_samples = r.integer("n_samples", static_cast<long long>(c.n_samples));
  if (n_samples < 2) r.fail("n_samples", "must be >= 2");
  c.n_samples = std::size_t(n_samples);
  c.record_wall_time = r.boolean("record_wall_time", c.record_wall_time);
  r.finish();
  c.validate();
  return c;
}

void apply_seed_override(BenchConfig& cfg) {
  const char* env = std::getenv("RLRT_SEED");
  if (!env) return;
  const std::string s(env);
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || s[0] == '-' || end != s.c_str() + s.size() || errno == ERANGE) {
    throw ConfigError("RLRT_SEED: '" + s + "' is not an unsigned integer");
  }
  cfg.seed = v;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path + "'");
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  out.close();
  if (!out) throw IoError("failed writing '" + path + "'");
}

Json read_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": malformed JSON: " + e.what());
  }
}

Json summary_to_json(const std::vector<CellSummary>& cells) {
  auto num = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
  Json out;
  out["cells"] = Json::array();
  for (const auto& c : cells) {
    out["cells"].push_back({{"method", c.method},
                            {"snr_db", c.snr_db ? Json(*c.snr_db) : Json("inf")},
                            {"n", c.n},
                            {"n_converged", c.n_converged},
                            {"n_failed", c.n_failed},
                            {"median_mm", num(c.median)},
                            {"p25_mm", num(c.p25)},
                            {"p75_mm", num(c.p75)},
                            {"mean_mm", num(c.mean)},
                            {"max_mm", num(c.max)},
                            {"median_outer_iters", num(c.median_outer_iters)}});
  }
  return out;
}

}  // namespace rlrt
