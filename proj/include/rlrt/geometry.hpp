#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace rlrt {

using Vec3 = Eigen::Vector3d;

// Homogeneous spherical head. Coordinates are RAS millimetres:
// +x right, +y anterior, +z up.
struct HeadModel {
  double radius_mm = 85.0;
  double conductivity_s_per_m = 0.33;
  Vec3 center_mm = Vec3::Zero();

  void validate() const;
};

struct ElectrodeArray {
  std::vector<Vec3> positions_mm;
  std::vector<std::string> labels;

  std::size_t size() const { return positions_mm.size(); }
  void validate() const;
};

struct SourceGrid {
  std::vector<Vec3> positions_mm;
  double spacing_mm = 0.0;

  std::size_t size() const { return positions_mm.size(); }
};

struct DipoleSourceSpec {
  Vec3 center_mm = Vec3::Zero();
  Vec3 moment = Vec3::Zero();
  double extent_mm = 0.0;
  int n_dipoles = 1;

  void validate() const;
};

struct ActiveDipole {
  std::size_t voxel = 0;
  Vec3 moment = Vec3::Zero();
};

/// All points of the cubic lattice `origin_offset + spacing * Z^3` lying
/// within `radius_mm - margin_mm` of the origin (and strictly inside the
/// sphere), ordered lexicographically by x, then y, then z.
///
/// Throws std::invalid_argument("empty grid ...") when no lattice point
/// fits or when the spacing is not smaller than the radius.
SourceGrid build_sphere_grid(double radius_mm, double spacing_mm, double margin_mm,
                             const Vec3& origin_offset = Vec3::Zero());

/// The 19 classical 10-20 scalp sites plus Oz, on a sphere of the given
/// radius centred at `center_mm`.
ElectrodeArray standard_1020_electrodes(double radius_mm, const Vec3& center_mm = Vec3::Zero());

/// Index of the grid point closest to `p` (lowest index on ties).
std::size_t nearest_grid_point(const SourceGrid& grid, const Vec3& p);

/// Grid points whose distance to `p` is at most `radius_mm`, in grid order.
std::vector<std::size_t> grid_points_within(const SourceGrid& grid, const Vec3& p,
                                            double radius_mm);

/// Expands a (possibly extended) source into grid dipoles. The first entry is
/// the grid point nearest the source centre; the remaining n_dipoles - 1 are
/// drawn uniformly without replacement from the other grid points within
/// extent_mm of the centre. Every dipole carries moment / n_dipoles.
std::vector<ActiveDipole> extended_source_dipoles(const DipoleSourceSpec& spec,
                                                  const SourceGrid& grid, std::uint64_t seed);

// Moves `p` radially onto the sphere of the given radius about `center`.
Vec3 project_to_sphere(const Vec3& p, const Vec3& center, double radius_mm);

/// Stable identifier for a grid (spacing plus FNV-1a over the coordinates).
std::string grid_id(const SourceGrid& grid);

}  // namespace rlrt
