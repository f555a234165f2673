#include "tetsplat/fit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "tetsplat/errors.hpp"
#include "tetsplat/parallel.hpp"
#include "tetsplat/splat.hpp"

namespace tetsplat {

double s_schedule(int iteration, double s_ratio, double s_start) {
  return static_cast<double>(iteration) / s_ratio + s_start;
}

RenderMaps render_target(const AnalyticShape& shape, const Camera& camera, const TraceOptions& options) {
  RenderMaps maps(camera.width, camera.height);
  const Vec3 origin = camera.position();
  // Everything valid lives inside [-0.9, 0.9]^3.
  const double bound = 0.9 * std::sqrt(3.0) + 1e-3;
  parallel_for(camera.height, 4, [&](std::size_t yb, std::size_t ye) {
    for (std::size_t y = yb; y < ye; ++y)
      for (int x = 0; x < camera.width; ++x) {
        const Vec3 cam_dir{(x + 0.5 - camera.cx()) / camera.focal, (y + 0.5 - camera.cy()) / camera.focal, 1.0};
        const Vec3 dir = normalize(transpose_mul(camera.rotation, cam_dir));
        const double b = dot(origin, dir);
        const double disc = b * b - (dot(origin, origin) - bound * bound);
        if (disc < 0) continue;
        double t = std::max(-b - std::sqrt(disc), 0.0);
        const double t_exit = -b + std::sqrt(disc);
        bool hit = false;
        for (int step = 0; step < options.max_steps && t <= t_exit; ++step) {
          const double d = analytic_sdf(shape, origin + t * dir);
          if (d < options.hit_epsilon) {
            hit = true;
            break;
          }
          t += d;
        }
        if (!hit) continue;
        const Vec3 p = origin + t * dir;
        const Vec3 n = normalize(analytic_gradient(shape, p, options.gradient_step));
        const std::size_t i = y * camera.width + x;
        maps.opacity[i] = 1.0;
        maps.depth[i] = camera.to_camera(p).z;
        maps.normal[3 * i] = n.x;
        maps.normal[3 * i + 1] = n.y;
        maps.normal[3 * i + 2] = n.z;
      }
  });
  return maps;
}

void validate(const FitConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(what);
  };
  require(c.resolution >= 1, "resolution must be >= 1");
  require(c.image_size >= 1, "image_size must be >= 1");
  require(c.views >= 1, "views must be >= 1");
  require(c.batch >= 1 && c.batch <= c.views, "batch must lie in [1, views]");
  require(c.iterations >= 0, "iterations must be >= 0");
  require(c.s_start > 0, "s_start must be positive");
  require(c.s_ratio > 0, "s_ratio must be positive");
  require(c.lambda_eik >= 0 && c.lambda_nc >= 0, "lambda weights must be >= 0");
  require(c.map_weights.opacity >= 0 && c.map_weights.depth >= 0 && c.map_weights.normal >= 0 &&
              c.map_weights.color >= 0,
          "map weights must be >= 0");
  require(c.lr_sdf > 0 && c.lr_deform > 0, "learning rates must be positive");
  require(c.beta1 >= 0 && c.beta1 < 1 && c.beta2 >= 0 && c.beta2 < 1, "moment decays must lie in [0, 1)");
  require(c.init_radius > 0 && c.init_radius < 1, "init_radius must lie in (0, 1)");
  require(c.render.window >= 1, "render.window must be >= 1");
  require(c.render.tile_size >= 1, "render.tile_size must be >= 1");
  require(c.filter_threshold >= 0, "filter_threshold must be >= 0");
  require(c.chamfer_samples >= 1000, "chamfer_samples must be >= 1000");
  validate(c.target);
}

namespace {

struct Adam {
  std::vector<double> m, v;
  double b1, b2, eps;
  int step = 0;

  Adam(std::size_t n, double beta1, double beta2, double epsilon)
      : m(n, 0.0), v(n, 0.0), b1(beta1), b2(beta2), eps(epsilon) {}

  // Applies one update; `grad(i)` and `param(i)` index the flat parameter.
  template <class Grad, class Param>
  void update(double lr, double c1, double c2, Grad grad, Param param) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = grad(i);
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      param(i) -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

std::string dump(int iteration, double s, const LossReport& r, std::size_t active, std::size_t bad) {
  std::ostringstream os;
  os << "non-finite loss or gradient at iteration " << iteration << ": s=" << s << " total=" << r.total
     << " map=" << r.map_total << " (opacity=" << r.map_opacity << " depth=" << r.map_depth
     << " normal=" << r.map_normal << ") eikonal=" << r.eikonal << " normal_consistency=" << r.normal_consistency
     << " active_tets=" << active << " nonfinite_gradient_entries=" << bad;
  return os.str();
}

}  // namespace

FitResult fit(const FitConfig& config, const FitCallback& on_iteration) {
  validate(config);
  FitResult result;
  result.grid = build_grid(config.resolution);
  const TetrahedralGrid& grid = result.grid;
  FieldState& field = result.field;
  field = init_sphere(grid, config.init_radius);

  OrbitSpec orbit = config.orbit;
  orbit.width = orbit.height = config.image_size;
  std::vector<Camera> cameras;
  std::vector<RenderMaps> targets;
  for (int v = 0; v < config.views; ++v) {
    cameras.push_back(orbit_camera(v, config.views, orbit));
    targets.push_back(render_target(config.target, cameras.back()));
  }

  std::mt19937_64 rng(config.seed);
  std::vector<int> order(config.views);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  const std::size_t nv = grid.vertex_count();
  Adam adam_sdf(nv, config.beta1, config.beta2, config.adam_epsilon);
  Adam adam_def(3 * nv, config.beta1, config.beta2, config.adam_epsilon);

  for (int it = 0; it < config.iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    const double s = s_schedule(it, config.s_ratio, config.s_start);
    field.steepness = s;

    // Shared per-iteration preprocessing.
    std::optional<CoarseToFine> ctf;
    Scene scene;
    std::vector<int> reg_tets;
    if (config.coarse_to_fine) {
      try {
        ctf = coarse_to_fine_filter(grid, field, s, config.filter_threshold);
      } catch (const EmptyScene&) {
        ctf.reset();
      }
    }
    if (ctf) {
      scene = make_scene(ctf->render.grid, ctf->field, s, ctf->active);
      reg_tets = ctf->first_active;
    } else {
      scene = preprocess(grid, field, s, config.filter_threshold);
      reg_tets = scene.active;
    }

    GradientBuffers grad(nv);
    GradientBuffers render_grad(scene.positions.size());
    LossReport report;
    report.lambda_eik = config.lambda_eik;
    report.lambda_nc = config.lambda_nc;
    report.lambda_rgb = config.map_weights.color;
    report.lambda_mask = config.map_weights.opacity;
    for (int b = 0; b < config.batch; ++b) {
      if (cursor >= order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const int view = order[cursor++];
      const RenderPass pass = render_view(scene, cameras[view], config.render);
      const MapLoss ml = map_mse_loss(pass.forward.maps, targets[view], config.map_weights);
      report.map_opacity += ml.opacity;
      report.map_depth += ml.depth;
      report.map_normal += ml.normal;
      report.map_color += ml.color;
      report.map_total += ml.total;
      if (!ml.grad.all_finite()) break;
      render_grad.add(render_backward(pass.forward.saved, pass.splats, scene, cameras[view], ml.grad));
    }
    if (ctf) resample_backward(ctf->render, render_grad.d_sdf, render_grad.d_deform, grad.d_sdf, grad.d_deform);
    else grad.add(render_grad);

    if (config.lambda_eik > 0) {
      std::vector<int> all;
      if (config.eikonal_scope == EikonalScope::all) {
        all.resize(grid.tet_count());
        std::iota(all.begin(), all.end(), 0);
      }
      const auto eik = eikonal_loss(grid, field, config.eikonal_scope == EikonalScope::all ? all : reg_tets);
      report.eikonal = eik.value;
      grad.add(eik.grad, config.lambda_eik);
    }
    if (config.lambda_nc > 0) {
      const auto nc = normal_consistency_loss(grid, field);
      report.normal_consistency = nc.value;
      grad.add(nc.grad, config.lambda_nc);
    }
    report.total = report.map_total + config.lambda_eik * report.eikonal + config.lambda_nc * report.normal_consistency;

    IterationRecord rec;
    rec.iteration = it;
    rec.steepness = s;
    rec.loss = report;
    rec.active_tets = scene.active.size();
    for (double f : field.sdf) rec.max_abs_sdf = std::max(rec.max_abs_sdf, std::abs(f));

    if (!std::isfinite(report.total) || !grad.all_finite()) {
      std::size_t bad = 0;
      for (double g : grad.d_sdf) bad += !std::isfinite(g);
      for (const Vec3& g : grad.d_deform) bad += !is_finite(g);
      throw NumericalError(dump(it, s, report, scene.active.size(), bad));
    }

    ++adam_sdf.step;
    ++adam_def.step;
    const double c1 = 1 - std::pow(config.beta1, adam_sdf.step);
    const double c2 = 1 - std::pow(config.beta2, adam_sdf.step);
    adam_sdf.update(config.lr_sdf, c1, c2, [&](std::size_t i) { return grad.d_sdf[i]; },
                    [&](std::size_t i) -> double& { return field.sdf[i]; });
    if (config.deformation) {
      adam_def.update(config.lr_deform, c1, c2, [&](std::size_t i) { return grad.d_deform[i / 3][static_cast<int>(i % 3)]; },
                      [&](std::size_t i) -> double& { return field.deformation[i / 3][static_cast<int>(i % 3)]; });
      clamp_deformation(field);
    }

    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.trace.records.push_back(rec);
    if (on_iteration) on_iteration(rec, field);
  }

  field.steepness = s_schedule(std::max(config.iterations - 1, 0), config.s_ratio, config.s_start);
  result.mesh = marching_tetrahedra(grid, field);
  result.trace.chamfer = chamfer(result.mesh, config.target, config.chamfer_samples, config.seed);
  return result;
}

// ---------------------------------------------------------------------------
// Chamfer

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Closest point by Voronoi region of the triangle.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0 && d2 <= 0) return length(ap);
  const Vec3 bp = p - b;
  const double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0 && d4 <= d3) return length(bp);
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return length(p - (a + (d1 / (d1 - d3)) * ab));
  const Vec3 cp = p - c;
  const double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0 && d5 <= d6) return length(cp);
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return length(p - (a + (d2 / (d2 - d6)) * ac));
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
    return length(p - (b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b)));
  const double denom = 1.0 / (va + vb + vc);
  return length(p - (a + ab * (vb * denom) + ac * (vc * denom)));
}

MeshDistance::MeshDistance(const TriangleMesh& mesh) : mesh_(mesh) {
  if (mesh.triangles.empty()) return;
  constexpr double inf = std::numeric_limits<double>::infinity();
  Vec3 lo{inf, inf, inf}, hi{-inf, -inf, -inf};
  for (const auto& t : mesh.triangles)
    for (int v : t) {
      lo = vmin(lo, mesh.vertices[v]);
      hi = vmax(hi, mesh.vertices[v]);
    }
  const Vec3 ext = hi - lo;
  const double vol = std::max(ext.x, 1e-9) * std::max(ext.y, 1e-9) * std::max(ext.z, 1e-9);
  cell_ = std::max(std::cbrt(vol / static_cast<double>(mesh.triangles.size())) * 1.5, 1e-6);
  for (int a = 0; a < 3; ++a) dims_[a] = std::clamp(static_cast<int>(ext[a] / cell_) + 1, 1, 256);
  cell_ = std::max({cell_, ext.x / dims_[0], ext.y / dims_[1], ext.z / dims_[2]});
  lo_ = lo;
  const std::size_t cells = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  auto cell_range = [&](const std::array<int, 3>& t, int lo_idx[3], int hi_idx[3]) {
    for (int a = 0; a < 3; ++a) {
      double mn = inf, mx = -inf;
      for (int v : t) {
        mn = std::min(mn, mesh.vertices[v][a]);
        mx = std::max(mx, mesh.vertices[v][a]);
      }
      lo_idx[a] = std::clamp(static_cast<int>((mn - lo_[a]) / cell_), 0, dims_[a] - 1);
      hi_idx[a] = std::clamp(static_cast<int>((mx - lo_[a]) / cell_), 0, dims_[a] - 1);
    }
  };
  offsets_.assign(cells + 1, 0);
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<std::uint32_t> fill;
    if (pass == 1) {
      for (std::size_t c = 0; c < cells; ++c) offsets_[c + 1] += offsets_[c];
      items_.resize(offsets_.back());
      fill.assign(offsets_.begin(), offsets_.end() - 1);
    }
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
      int a0[3], a1[3];
      cell_range(mesh.triangles[t], a0, a1);
      for (int z = a0[2]; z <= a1[2]; ++z)
        for (int y = a0[1]; y <= a1[1]; ++y)
          for (int x = a0[0]; x <= a1[0]; ++x) {
            const std::size_t c = (static_cast<std::size_t>(z) * dims_[1] + y) * dims_[0] + x;
            if (pass == 0) ++offsets_[c + 1];
            else items_[fill[c]++] = static_cast<int>(t);
          }
    }
  }
}

double MeshDistance::operator()(const Vec3& p) const {
  if (mesh_.triangles.empty()) return std::numeric_limits<double>::infinity();
  int home[3];
  for (int a = 0; a < 3; ++a) home[a] = std::clamp(static_cast<int>(std::floor((p[a] - lo_[a]) / cell_)), 0, dims_[a] - 1);
  double best = std::numeric_limits<double>::infinity();
  const int max_ring = std::max({dims_[0], dims_[1], dims_[2]});
  for (int ring = 0; ring <= max_ring; ++ring) {
    for (int z = home[2] - ring; z <= home[2] + ring; ++z) {
      if (z < 0 || z >= dims_[2]) continue;
      for (int y = home[1] - ring; y <= home[1] + ring; ++y) {
        if (y < 0 || y >= dims_[1]) continue;
        for (int x = home[0] - ring; x <= home[0] + ring; ++x) {
          if (x < 0 || x >= dims_[0]) continue;
          if (std::max({std::abs(x - home[0]), std::abs(y - home[1]), std::abs(z - home[2])}) != ring) continue;
          const std::size_t c = (static_cast<std::size_t>(z) * dims_[1] + y) * dims_[0] + x;
          for (std::uint32_t k = offsets_[c]; k < offsets_[c + 1]; ++k) {
            const auto& t = mesh_.triangles[items_[k]];
            best = std::min(best, point_triangle_distance(p, mesh_.vertices[t[0]], mesh_.vertices[t[1]],
                                                          mesh_.vertices[t[2]]));
          }
        }
      }
    }
    if (best <= ring * cell_) break;
  }
  return best;
}

std::vector<Vec3> sample_shape_surface(const AnalyticShape& shape, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  constexpr double two_pi = 6.283185307179586;
  std::vector<Vec3> out;
  out.reserve(count);
  while (static_cast<int>(out.size()) < count) {
    switch (shape.kind) {
      case ShapeKind::sphere: {
        Vec3 d{gauss(rng), gauss(rng), gauss(rng)};
        const double len = length(d);
        if (len < 1e-12) continue;
        out.push_back(shape.center + d * (shape.params[0] / len));
        break;
      }
      case ShapeKind::torus: {
        const double R = shape.params[0], r = shape.params[1];
        const double theta = two_pi * uni(rng), phi = two_pi * uni(rng);
        // Area element is proportional to R + r cos(phi).
        if (uni(rng) * (R + r) > R + r * std::cos(phi)) continue;
        const double ring = R + r * std::cos(phi);
        out.push_back(shape.center + Vec3{ring * std::cos(theta), ring * std::sin(theta), r * std::sin(phi)});
        break;
      }
      case ShapeKind::box: {
        const double hx = shape.params[0], hy = shape.params[1], hz = shape.params[2];
        const double areas[3] = {hy * hz, hx * hz, hx * hy};
        const double total = areas[0] + areas[1] + areas[2];
        double pick = uni(rng) * total;
        int axis = 0;
        while (axis < 2 && pick > areas[axis]) pick -= areas[axis++];
        Vec3 p{(2 * uni(rng) - 1) * hx, (2 * uni(rng) - 1) * hy, (2 * uni(rng) - 1) * hz};
        const double sign = uni(rng) < 0.5 ? -1.0 : 1.0;
        p[axis] = sign * shape.params[axis];
        out.push_back(shape.center + p);
        break;
      }
    }
  }
  return out;
}

double chamfer(const TriangleMesh& mesh, const AnalyticShape& shape, int samples, std::uint64_t seed) {
  if (samples < 1000) throw InvalidArgument("chamfer: at least 1000 samples required");
  if (mesh.triangles.empty()) return std::numeric_limits<double>::infinity();

  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) cumulative[t] = total += triangle_area(mesh, t);
  if (!(total > 0)) return std::numeric_limits<double>::infinity();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double to_shape = 0;
  for (int i = 0; i < samples; ++i) {
    const double pick = uni(rng) * total;
    const std::size_t t = std::min<std::size_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin(), cumulative.size() - 1);
    const double r1 = std::sqrt(uni(rng)), r2 = uni(rng);
    const auto& tri = mesh.triangles[t];
    const Vec3 p = (1 - r1) * mesh.vertices[tri[0]] + r1 * (1 - r2) * mesh.vertices[tri[1]] +
                   r1 * r2 * mesh.vertices[tri[2]];
    to_shape += std::abs(analytic_sdf(shape, p));
  }

  const MeshDistance dist(mesh);
  const auto surface = sample_shape_surface(shape, samples, seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<double> d(surface.size());
  parallel_for(surface.size(), 512, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) d[i] = dist(surface[i]);
  });
  double to_mesh = 0;
  for (double x : d) to_mesh += x;
  return to_shape / samples + to_mesh / samples;
}

}  // namespace tetsplat
