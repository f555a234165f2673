#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tetsplat/camera.hpp"
#include "tetsplat/field.hpp"
#include "tetsplat/losses.hpp"
#include "tetsplat/raster.hpp"
#include "tetsplat/tetgrid.hpp"

namespace tetsplat {

// Steepness at iteration i: i / s_ratio + s_start.
double s_schedule(int iteration, double s_ratio, double s_start);

// Sphere-traced ground truth of an analytic shape: unit normals and
// camera-space depth at hit pixels (premultiplied by the binary opacity).
struct TraceOptions {
  int max_steps = 64;
  double hit_epsilon = 1e-4;
  double gradient_step = 1e-5;
};

RenderMaps render_target(const AnalyticShape& shape, const Camera& camera, const TraceOptions& options = {});

enum class EikonalScope { active, all };

struct FitConfig {
  int resolution = 32;
  int image_size = 64;
  int views = 32;          // fixed orbit views supervising the fit
  int batch = 4;           // views per iteration
  int iterations = 300;
  double s_start = 20;
  double s_ratio = 5;
  double lambda_eik = 1000;
  double lambda_nc = 1000;
  MapWeights map_weights{1000, 1000, 1000, 10000};  // opacity, depth, normal, color
  double lr_sdf = 1e-2;
  double lr_deform = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_epsilon = 1e-15;
  bool deformation = true;
  bool coarse_to_fine = false;
  EikonalScope eikonal_scope = EikonalScope::active;
  double filter_threshold = 1.0 / 255.0;
  double init_radius = 0.5;
  AnalyticShape target = AnalyticShape::torus(0.5, 0.2);
  OrbitSpec orbit{3.0, -30, 60, 40, 64, 64, 0.1, 10};
  RenderOptions render;
  int chamfer_samples = 20000;
  std::uint64_t seed = 1;
};

// Throws InvalidArgument naming the offending field.
void validate(const FitConfig& config);

struct LossReport {
  double total = 0;
  double map_opacity = 0;  // unweighted, summed over the batch
  double map_depth = 0;
  double map_normal = 0;
  double map_color = 0;
  double map_total = 0;    // weighted, summed over the batch
  double eikonal = 0;
  double normal_consistency = 0;
  double lambda_eik = 0;
  double lambda_nc = 0;
  double lambda_rgb = 0;
  double lambda_mask = 0;
};

struct IterationRecord {
  int iteration = 0;
  double steepness = 0;
  LossReport loss;
  std::size_t active_tets = 0;
  double max_abs_sdf = 0;
  double wall_ms = 0;
};

struct FitTrace {
  std::vector<IterationRecord> records;
  double chamfer = 0;
};

struct FitResult {
  TetrahedralGrid grid;
  FieldState field;
  FitTrace trace;
  TriangleMesh mesh;
};

using FitCallback = std::function<void(const IterationRecord&, const FieldState&)>;

// Fits the field to sphere-traced maps of config.target. Throws
// NumericalError (with a dump of the offending iteration) on a non-finite
// loss or gradient.
FitResult fit(const FitConfig& config, const FitCallback& on_iteration = {});

// Symmetric Chamfer distance: mean |sdf| over area-uniform mesh samples plus
// mean mesh distance over uniform analytic-surface samples. Returns +inf
// for an empty mesh. Throws InvalidArgument when samples < 1000.
double chamfer(const TriangleMesh& mesh, const AnalyticShape& shape, int samples, std::uint64_t seed = 7);

// Uniform samples of the analytic surface.
std::vector<Vec3> sample_shape_surface(const AnalyticShape& shape, int count, std::uint64_t seed);

// Unsigned distance from points to a triangle mesh (uniform-grid accelerated).
class MeshDistance {
 public:
  explicit MeshDistance(const TriangleMesh& mesh);
  double operator()(const Vec3& p) const;

 private:
  const TriangleMesh& mesh_;
  Vec3 lo_;
  double cell_ = 1;
  int dims_[3] = {1, 1, 1};
  std::vector<std::uint32_t> offsets_;
  std::vector<int> items_;
};

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

}  // namespace tetsplat
