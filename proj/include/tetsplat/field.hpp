#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "tetsplat/math.hpp"
#include "tetsplat/tetgrid.hpp"

namespace tetsplat {

// Fraction of the cell edge each deformation component may span. Any
// per-component offset below 1/6 of a cell keeps every Kuhn tet positively
// oriented (signed volume is multilinear in the vertex offsets, minimum at
// the box corners).
inline constexpr double kDeformationFraction = 0.15;

// Threshold on |signed volume| below which a tet has no usable gradient.
inline constexpr double kDegenerateVolume = 1e-12;

// Gradient magnitude below which a tet has no normal.
inline constexpr double kNormalEpsilon = 1e-8;

// Optimizable per-vertex state.
struct FieldState {
  std::vector<double> sdf;
  std::vector<Vec3> deformation;
  Vec3 deformation_limit;  // per-axis bound on |deformation component|
  double steepness = 0;    // 0 until a schedule sets it

  std::size_t vertex_count() const { return sdf.size(); }
};

Vec3 deformation_limit(const TetrahedralGrid& grid);

// Zero deformation, limit from the grid's cell size.
FieldState make_field(const TetrahedralGrid& grid, std::vector<double> sdf);

// f = |rest| - radius. Throws InvalidArgument unless 0 < radius < 1.
FieldState init_sphere(const TetrahedralGrid& grid, double radius);

void clamp_deformation(FieldState& field);

std::vector<Vec3> deformed_positions(const TetrahedralGrid& grid, const FieldState& field);

inline TriangleMesh marching_tetrahedra(const TetrahedralGrid& grid, const FieldState& field) {
  const auto pos = deformed_positions(grid, field);
  return marching_tetrahedra(grid, pos, field.sdf);
}

// ---------------------------------------------------------------------------
// Per-tet linear field

// Gradient of the linear interpolant through four samples, from the 4x4
// system [v^T 1] [g; c] = f solved by an explicit inverse with partial
// pivoting. Throws DegenerateTet when |signed volume| <= kDegenerateVolume.
Vec3 tet_sdf_gradient(const std::array<Vec3, 4>& p, const std::array<double, 4>& f);

// Same gradient via the edge-vector cofactor form. Returns nullopt for
// degenerate tets instead of throwing; used on hot paths.
std::optional<Vec3> linear_gradient(const std::array<Vec3, 4>& p, const std::array<double, 4>& f);

// Reverse mode of linear_gradient: given dL/dg, accumulates dL/df and
// dL/dp. `g` must be the forward result.
void linear_gradient_backward(const std::array<Vec3, 4>& p, const Vec3& g, const Vec3& d_g,
                              std::array<double, 4>& d_f, std::array<Vec3, 4>& d_p);

std::optional<Vec3> tet_normal(const Vec3& g);

// dL/dg for n = g/|g| given dL/dn.
inline Vec3 normalize_backward(const Vec3& g, const Vec3& d_n) {
  const double len = length(g);
  const Vec3 n = g / len;
  return (d_n - n * dot(n, d_n)) / len;
}

// ---------------------------------------------------------------------------
// Analytic shapes

enum class ShapeKind { sphere, torus, box };

struct AnalyticShape {
  ShapeKind kind = ShapeKind::sphere;
  // sphere: {radius}; torus: {major, minor} around the z axis;
  // box: {hx, hy, hz} half extents.
  std::array<double, 3> params{0.5, 0, 0};
  Vec3 center;

  static AnalyticShape sphere(double radius, Vec3 center = {});
  static AnalyticShape torus(double major, double minor, Vec3 center = {});
  static AnalyticShape box(Vec3 half_extents, Vec3 center = {});
};

// Throws InvalidArgument for non-positive parameters or a shape leaving
// [-0.9, 0.9]^3.
void validate(const AnalyticShape& shape);

double analytic_sdf(const AnalyticShape& shape, const Vec3& p);

// Central differences with step h.
Vec3 analytic_gradient(const AnalyticShape& shape, const Vec3& p, double h = 1e-5);

FieldState init_from_shape(const TetrahedralGrid& grid, const AnalyticShape& shape);

// ---------------------------------------------------------------------------
// Checkpoints: "TSPF", u32 version, u64 vertex count, f (f64 each),
// deformation (3 x f64 each), steepness (f64). Little-endian.

void write_checkpoint(const FieldState& field, std::ostream& out);
void save_checkpoint(const FieldState& field, const std::filesystem::path& path);
// The deformation limit is not stored; callers set it with
// deformation_limit(grid) once the grid is known.
FieldState read_checkpoint(std::istream& in);
FieldState load_checkpoint(const std::filesystem::path& path);

// Resolution R with (R+1)^3 == vertex_count, or 0 when there is none.
int resolution_for_vertex_count(std::size_t vertex_count);

}  // namespace tetsplat
