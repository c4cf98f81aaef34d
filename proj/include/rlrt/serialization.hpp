#pragma once

#include <optional>
#include <string>

#include "json.hpp"

#include "rlrt/bench.hpp"
#include "rlrt/eloreta.hpp"
#include "rlrt/geometry.hpp"
#include "rlrt/perturbations.hpp"
#include "rlrt/reloreta.hpp"

namespace rlrt {

using Json = nlohmann::ordered_json;

struct Geometry {
  HeadModel model;
  ElectrodeArray electrodes;
  SourceGrid grid;
};

Json geometry_to_json(const HeadModel& model, const ElectrodeArray& electrodes, const SourceGrid& grid);
Geometry geometry_from_json(const Json& j);

Json perturbation_to_json(const PerturbationSpec& p);
Json solver_to_json(const ReloretaConfig& c);

/// Trace document. `localization` fills argmax_voxel/position_mm (null when
/// absent); R is written row-major unless `include_transform` is false.
Json trace_to_json(const ReloretaTrace& trace, const std::optional<Localization>& localization,
                   bool include_transform = true);

// Config parsers reject unknown keys and wrong types with a ConfigError that
// names the offending key path (e.g. "perturbation.tilt_deg").
PerturbationSpec perturbation_from_json(const Json& j, const std::string& path = "perturbation");
ReloretaConfig solver_from_json(const Json& j, const std::string& path = "solver");
BenchConfig bench_config_from_json(const Json& j);

/// Replaces cfg.seed with $RLRT_SEED when that variable is set. A value that
/// is not an unsigned integer is a ConfigError.
void apply_seed_override(BenchConfig& cfg);

Json read_json_file(const std::string& path);  // IoError if unreadable, ConfigError if malformed
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

Json summary_to_json(const std::vector<CellSummary>& cells);

}  // namespace rlrt
