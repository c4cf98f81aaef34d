#include "rlrt/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "rlrt/random.hpp"

namespace rlrt {

void HeadModel::validate() const {
  if (!(radius_mm > 0.0) || !std::isfinite(radius_mm)) {
    throw std::invalid_argument("head model: radius_mm must be positive");
  }
  if (!(conductivity_s_per_m > 0.0) || !std::isfinite(conductivity_s_per_m)) {
    throw std::invalid_argument("head model: conductivity_s_per_m must be positive");
  }
  if (!center_mm.allFinite()) {
    throw std::invalid_argument("head model: center_mm must be finite");
  }
}

void ElectrodeArray::validate() const {
  if (positions_mm.size() < 2) {
    throw std::invalid_argument("electrode array: need at least 2 electrodes");
  }
  if (labels.size() != positions_mm.size()) {
    throw std::invalid_argument("electrode array: label count does not match position count");
  }
  std::unordered_set<std::string> seen;
  for (const auto& l : labels) {
    if (!seen.insert(l).second) {
      throw std::invalid_argument("electrode array: duplicate label '" + l + "'");
    }
  }
}

void DipoleSourceSpec::validate() const {
  if (n_dipoles < 1) throw std::invalid_argument("dipole source: n_dipoles must be >= 1");
  if (extent_mm < 0.0) throw std::invalid_argument("dipole source: extent_mm must be >= 0");
  if ((extent_mm == 0.0) != (n_dipoles == 1)) {
    throw std::invalid_argument("dipole source: extent_mm == 0 must coincide with n_dipoles == 1");
  }
}

SourceGrid build_sphere_grid(double radius_mm, double spacing_mm, double margin_mm,
                             const Vec3& origin_offset) {
  if (!(radius_mm > 0.0)) throw std::invalid_argument("build_sphere_grid: radius_mm must be positive");
  if (!(spacing_mm > 0.0)) throw std::invalid_argument("build_sphere_grid: spacing_mm must be positive");
  if (!(margin_mm >= 0.0)) throw std::invalid_argument("build_sphere_grid: margin_mm must be >= 0");
  if (spacing_mm >= radius_mm) {
    throw std::invalid_argument("empty grid: spacing_mm must be smaller than radius_mm");
  }

  const double limit = radius_mm - margin_mm;
  SourceGrid grid;
  grid.spacing_mm = spacing_mm;
  if (limit < 0.0) throw std::invalid_argument("empty grid: margin_mm exceeds radius_mm");

  std::array<long, 3> lo{};
  std::array<long, 3> hi{};
  for (int a = 0; a < 3; ++a) {
    lo[a] = static_cast<long>(std::ceil((-limit - origin_offset[a]) / spacing_mm));
    hi[a] = static_cast<long>(std::floor((limit - origin_offset[a]) / spacing_mm));
  }
  // Small slack so lattice points sitting exactly on the boundary survive
  // rounding in the spacing multiplication.
  const double tol = 1e-9 * std::max(1.0, radius_mm);
  for (long i = lo[0]; i <= hi[0]; ++i) {
    for (long j = lo[1]; j <= hi[1]; ++j) {
      for (long k = lo[2]; k <= hi[2]; ++k) {
        const Vec3 p = origin_offset + spacing_mm * Vec3(double(i), double(j), double(k));
        const double r = p.norm();
        if (r <= limit + tol && r < radius_mm) grid.positions_mm.push_back(p);
      }
    }
  }
  if (grid.positions_mm.empty()) {
    throw std::invalid_argument("empty grid: no lattice point lies inside the sphere");
  }
  return grid;
}

namespace {

struct Site {
  const char* label;
  double theta_deg;  // polar angle from vertex; negative on the left hemisphere
  double phi_deg;    // azimuth from the T3-T4 axis
};

// Spherical 10-20 layout (BESA convention). The right-hemisphere formula
// x = sin(t)cos(p), y = sin(t)sin(p), z = cos(t) is used for every site.
constexpr std::array<Site, 20> kSites{{
    {"Fp1", -90.0, -72.0}, {"Fp2", 90.0, 72.0},  {"F7", -90.0, -36.0}, {"F3", -60.0, -51.0},
    {"Fz", 45.0, 90.0},    {"F4", 60.0, 51.0},   {"F8", 90.0, 36.0},   {"T3", -90.0, 0.0},
    {"C3", -45.0, 0.0},    {"Cz", 0.0, 0.0},     {"C4", 45.0, 0.0},    {"T4", 90.0, 0.0},
    {"T5", -90.0, 36.0},   {"P3", -60.0, 51.0},  {"Pz", 45.0, -90.0},  {"P4", 60.0, -51.0},
    {"T6", 90.0, -36.0},   {"O1", -90.0, 72.0},  {"O2", 90.0, -72.0},  {"Oz", 90.0, -90.0},
}};

}  // namespace

ElectrodeArray standard_1020_electrodes(double radius_mm, const Vec3& center_mm) {
  if (!(radius_mm > 0.0)) throw std::invalid_argument("standard_1020_electrodes: radius_mm must be positive");
  constexpr double deg = std::numbers::pi / 180.0;
  ElectrodeArray arr;
  arr.positions_mm.reserve(kSites.size());
  arr.labels.reserve(kSites.size());
  for (const auto& s : kSites) {
    const double t = s.theta_deg * deg;
    const double p = s.phi_deg * deg;
    Vec3 u(std::sin(t) * std::cos(p), std::sin(t) * std::sin(p), std::cos(t));
    u /= u.norm();
    arr.positions_mm.push_back(center_mm + radius_mm * u);
    arr.labels.emplace_back(s.label);
  }
  return arr;
}

std::size_t nearest_grid_point(const SourceGrid& grid, const Vec3& p) {
  if (grid.positions_mm.empty()) throw std::invalid_argument("nearest_grid_point: empty grid");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double d = (grid.positions_mm[i] - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

std::vector<std::size_t> grid_points_within(const SourceGrid& grid, const Vec3& p,
                                            double radius_mm) {
  std::vector<std::size_t> out;
  const double r2 = radius_mm * radius_mm;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if ((grid.positions_mm[i] - p).squaredNorm() <= r2) out.push_back(i);
  }
  return out;
}

std::vector<ActiveDipole> extended_source_dipoles(const DipoleSourceSpec& spec,
                                                  const SourceGrid& grid, std::uint64_t seed) {
  spec.validate();
  const std::size_t first = nearest_grid_point(grid, spec.center_mm);
  const Vec3 share = spec.moment / double(spec.n_dipoles);

  std::vector<ActiveDipole> out;
  out.reserve(std::size_t(spec.n_dipoles));
  out.push_back({first, share});
  if (spec.n_dipoles == 1) return out;

  std::vector<std::size_t> candidates;
  for (auto i : grid_points_within(grid, spec.center_mm, spec.extent_mm)) {
    if (i != first) candidates.push_back(i);
  }
  const std::size_t needed = std::size_t(spec.n_dipoles - 1);
  if (candidates.size() < needed) {
    std::ostringstream msg;
    msg << "extended_source_dipoles: insufficient candidate points: need " << needed
        << " besides the centre, found " << candidates.size() << " (shortfall "
        << needed - candidates.size() << ")";
    throw std::invalid_argument(msg.str());
  }

  // Partial Fisher-Yates: the first `needed` slots become the sample.
  auto rng = make_stream(seed, {0x657874ULL});
  for (std::size_t i = 0; i < needed; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(rng)]);
    out.push_back({candidates[i], share});
  }
  return out;
}

Vec3 project_to_sphere(const Vec3& p, const Vec3& center, double radius_mm) {
  const Vec3 d = p - center;
  const double n = d.norm();
  if (!(n > 0.0)) throw std::invalid_argument("project_to_sphere: point coincides with centre");
  return center + d * (radius_mm / n);
}

std::string grid_id(const SourceGrid& grid) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  mix(grid.spacing_mm);
  for (const auto& p : grid.positions_mm) {
    mix(p.x());
    mix(p.y());
    mix(p.z());
  }
  std::ostringstream os;
  os << "grid-" << grid.size() << "-" << std::hex << h;
  return os.str();
}

}  // namespace rlrt
