#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "tetsplat/camera.hpp"
#include "tetsplat/field.hpp"
#include "tetsplat/math.hpp"
#include "tetsplat/tetgrid.hpp"

namespace tetsplat {

inline constexpr double kDefaultFilterThreshold = 1.0 / 255.0;
// Opacity ceiling keeping transmittance and its derivatives finite.
inline constexpr double kAlphaClip = 1.0 - 1e-4;
inline constexpr double kTriangleAreaEpsilon = 1e-12;  // px^2

// ---------------------------------------------------------------------------
// Opacity

// Upper bound of the tet opacity over all rays, from the extreme vertex values.
double alpha_max(const std::array<double, 4>& f, double s);

struct Opacity {
  double alpha = 0;
  double d_prev = 0;  // d alpha / d f_prev
  double d_next = 0;  // d alpha / d f_next
};

// alpha = max(1 - sigmoid(s f_next) / sigmoid(s f_prev), 0), capped at
// kAlphaClip. Derivatives are zero where either bound is active.
Opacity opacity_with_grad(double f_prev, double f_next, double s);
inline double opacity(double f_prev, double f_next, double s) {
  return opacity_with_grad(f_prev, f_next, s).alpha;
}

// Tets whose alpha_max reaches the threshold, in tet order.
std::vector<int> prefilter(const TetrahedralGrid& grid, std::span<const double> sdf, double s,
                           double threshold = kDefaultFilterThreshold);

// ---------------------------------------------------------------------------
// Coarse-to-fine pre-filtering

// Render grid obtained by fitting the canonical lattice to a box and sampling
// the canonical piecewise-linear field (SDF and deformation) at its vertices.
// Deformations are scaled with the box so they stay relative to cell size.
struct ResampledGrid {
  TetrahedralGrid grid;
  std::vector<GridSample> samples;  // per render vertex, into the canonical grid
  Vec3 scale;                       // render extent / canonical extent per axis
};

ResampledGrid make_resampled_grid(const TetrahedralGrid& canonical, const Vec3& lo, const Vec3& hi);

FieldState resample_field(const ResampledGrid& rg, const FieldState& canonical);

// Maps per-vertex derivatives on the render grid back onto the canonical
// field (transpose of the resampling map). Accumulates into the outputs.
void resample_backward(const ResampledGrid& rg, std::span<const double> d_sdf,
                       std::span<const Vec3> d_deform, std::span<double> canonical_d_sdf,
                       std::span<Vec3> canonical_d_deform);

struct CoarseToFine {
  std::vector<int> first_active;
  Vec3 box_lo, box_hi;  // AABB of the first-round survivors
  ResampledGrid render;  // lattice over the box plus margin
  FieldState field;      // resampled field on render.grid
  std::vector<int> active;  // second-round survivors on render.grid
};

// Throws EmptyScene when the first round keeps nothing.
CoarseToFine coarse_to_fine_filter(const TetrahedralGrid& grid, const FieldState& field, double s,
                                   double threshold = kDefaultFilterThreshold, double margin = 0.1);

// Axis-aligned bounds of the given tets' vertices.
std::pair<Vec3, Vec3> tet_bounds(const TetrahedralGrid& grid, std::span<const Vec3> positions,
                                 std::span<const int> tets);

// ---------------------------------------------------------------------------
// Per-view splats

// Per-iteration read-out shared by every view of a batch.
struct Scene {
  const TetrahedralGrid* grid = nullptr;
  std::vector<Vec3> positions;  // deformed
  std::vector<double> sdf;
  double steepness = 0;
  std::vector<int> active;             // tet ids surviving the filter
  std::vector<Vec3> gradients;         // per active entry
  std::vector<unsigned char> has_normal;  // per active entry
  std::vector<Vec3> normals;           // per active entry, unit or zero
  std::vector<Vec3> colors;            // per tet; empty disables color
  std::size_t degenerate_skipped = 0;
};

// Builds a scene from an explicit active set. Degenerate tets are dropped
// and counted. `colors` is either empty or per tet.
Scene make_scene(const TetrahedralGrid& grid, const FieldState& field, double s,
                 std::vector<int> active, std::vector<Vec3> colors = {});

// make_scene over prefilter(grid, field.sdf, s, threshold).
Scene preprocess(const TetrahedralGrid& grid, const FieldState& field, double s,
                 double threshold = kDefaultFilterThreshold, std::vector<Vec3> colors = {});

struct TetSplat {
  int tet_index = -1;
  int scene_index = -1;  // index into Scene::active
  std::array<Vec2, 4> proj;
  std::array<double, 4> depths{};
  std::array<double, 4> f{};
  Vec3 normal;  // world frame; zero when the tet has no normal
  bool has_normal = false;
  double mean_depth = 0;
  double alpha_max = 0;
  Vec3 color;
  bool has_color = false;
  // Pixel bounds of the projected vertices.
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
};

// Projects and culls the scene for one camera. Splats keep scene order.
std::vector<TetSplat> make_splats(const Scene& scene, const Camera& camera);

// ---------------------------------------------------------------------------
// Interpolation

// (u', v') with pixel = (1-u'-v') a + u' b + v' c, or nullopt when the pixel
// is outside or the triangle is degenerate. Boundary counts as inside.
std::optional<Vec2> barycentric_2d(const std::array<Vec2, 3>& tri, const Vec2& pixel);

struct PerspectiveCoords {
  double u = 0, v = 0, depth = 0;
};

PerspectiveCoords perspective_correct(double u_screen, double v_screen, double za, double zb, double zc);

// Face k of a tet omits vertex k.
inline constexpr int kFaces[4][3] = {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}};

struct FaceHit {
  int face = -1;
  double f = 0;
  double depth = 0;
};

struct SplatIntersection {
  FaceHit prev;  // nearer
  FaceHit next;  // farther
};

std::optional<SplatIntersection> intersect_splat(const TetSplat& splat, const Vec2& pixel);

// Derivatives of a splat's per-pixel inputs, accumulated during backward.
struct SplatGrad {
  std::array<Vec2, 4> d_proj;
  std::array<double, 4> d_depth{};
  std::array<double, 4> d_f{};
  Vec3 d_normal;
  Vec3 d_color;
  double d_mean_depth = 0;

  SplatGrad& operator+=(const SplatGrad& o);
};

// Accumulates d(face-hit f)/d(splat inputs) * d_f into `grad`.
void face_hit_backward(const TetSplat& splat, int face, const Vec2& pixel, double d_f, SplatGrad& grad);

}  // namespace tetsplat
