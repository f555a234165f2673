// Acceptance harness: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "tetsplat/diagnostics.hpp"
#include "tetsplat/errors.hpp"
#include "tetsplat/fit.hpp"
#include "tetsplat/losses.hpp"
#include "tetsplat/parallel.hpp"

using namespace tetsplat;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. gradient exactness

Outcome gradient_exactness() {
  const auto t0 = Clock::now();
  bool pass = true;
  std::string detail;
  for (int r : {4, 8}) {
    GradCheckConfig c;
    c.resolution = r;
    c.view.width = c.view.height = 32;
    const GradCheckReport rep = check_gradients(c);
    double worst = 0, worst_opacity = 0;
    for (const auto& e : rep.entries) {
      if (e.map == "opacity") worst_opacity = std::max(worst_opacity, e.max_rel_error);
      else worst = std::max(worst, e.max_rel_error);
      if (!e.passed) pass = false;
    }
    detail += fmt("R=%d opacity %.2e (<=1e-4) depth/normal %.2e (<=1e-3); ", r, worst_opacity, worst);
  }
  const double secs = seconds_since(t0);
  pass = pass && secs <= 300;
  return {pass, detail + fmt("%.0fs (<=300s)", secs)};
}

// ---------------------------------------------------------------------------
// 2. opacity bound soundness

Outcome opacity_bound() {
  const auto grid = build_grid(4);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(grid.tet_count()) - 1);
  FieldState field = random_smooth_field(grid, 99, 0.3);
  long hits = 0, violations = 0, attempts = 0;
  double worst = -1e300;
  while (hits < 10000 && attempts < 10000000) {
    ++attempts;
    // Fresh random values at the tet's vertices for every triple.
    const int t = pick(rng);
    for (int v : grid.tets[t]) field.sdf[v] = (u(rng) * 2 - 1) * 0.3;
    const double s = std::exp(std::log(1.0) + u(rng) * std::log(2000.0));
    Scene scene = make_scene(grid, field, s, {t});
    if (scene.active.empty()) continue;
    const Camera cam = spherical_camera(3, u(rng) * 360, u(rng) * 160 - 80, 64, 64, 40, 0.1, 10);
    const auto splats = make_splats(scene, cam);
    if (splats.empty()) continue;
    const TetSplat& sp = splats[0];
    const Vec2 px{sp.xmin + u(rng) * (sp.xmax - sp.xmin), sp.ymin + u(rng) * (sp.ymax - sp.ymin)};
    const auto hit = intersect_splat(sp, px);
    if (!hit) continue;
    ++hits;
    const double a = opacity(hit->prev.f, hit->next.f, s);
    const double bound = alpha_max(sp.f, s);
    worst = std::max(worst, a - bound);
    if (a > bound + 1e-12) ++violations;
  }
  return {hits == 10000 && violations == 0,
          fmt("%ld triples, %ld violations, max(alpha - alpha_max) = %.3e", hits, violations, worst)};
}

// ---------------------------------------------------------------------------
// 3. sorting window vs exact ordering

Outcome sorting_window() {
  const auto t0 = Clock::now();
  BenchSortConfig c;
  c.resolutions = {64};
  c.windows = {1, 3, 5, 9};
  c.view.width = c.view.height = 256;
  const auto rows = bench_sort(c);
  bool monotone = true;
  double at5 = 1e300;
  std::string detail;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    detail += fmt("N_w=%d max %.2e; ", rows[i].window, rows[i].max_abs);
    if (rows[i].window == 5) at5 = rows[i].max_abs;
    if (i > 0 && rows[i].max_abs > rows[i - 1].max_abs) monotone = false;
  }
  const double secs = seconds_since(t0);
  return {at5 <= 1e-3 && monotone && secs <= 120,
          detail + fmt("monotone %s; %.0fs (<=120s)", monotone ? "yes" : "no", secs)};
}

// ---------------------------------------------------------------------------
// 4. surface limit

Outcome surface_limit() {
  const auto grid = build_grid(32);
  const FieldState field = init_from_shape(grid, AnalyticShape::sphere(0.5));
  const double s = 500;
  const Scene scene = preprocess(grid, field, s);
  const TriangleMesh mesh = marching_tetrahedra(grid, field);
  OrbitSpec orbit;
  orbit.width = orbit.height = 128;
  long disagree = 0, silhouette = 0;
  for (int v = 0; v < 8; ++v) {
    const Camera cam = orbit_camera(v, 8, orbit);
    const RenderMaps splat = render_view(scene, cam).forward.maps;
    const RenderMaps raster = rasterize_mesh(mesh, cam);
    for (std::size_t p = 0; p < splat.pixel_count(); ++p) {
      const bool a = splat.opacity[p] > 0.5, b = raster.opacity[p] > 0.5;
      silhouette += b;
      disagree += a != b;
    }
  }
  const double frac = static_cast<double>(disagree) / std::max(silhouette, 1L);
  return {frac <= 0.01, fmt("%ld of %ld silhouette pixels disagree (%.3f%%, <=1%%)", disagree, silhouette, 100 * frac)};
}

// ---------------------------------------------------------------------------
// 5, 6, 10. torus fit

FitConfig torus_config() {
  FitConfig c;
  c.resolution = 64;
  c.views = 32;
  c.batch = 4;
  c.iterations = 1000;
  c.lambda_eik = 1000;
  c.lambda_nc = 1000;
  c.init_radius = 0.5;
  c.map_weights = {1e8, 1e8, 1e8, 1e4};
  c.target = AnalyticShape::torus(0.5, 0.2);
  return c;
}

struct TorusRun {
  bool ran = false;
  std::string error;
  FitResult result;
  double max_abs_at_500 = -1;
  double seconds = 0;
};

TorusRun& torus_run() {
  static TorusRun run;
  if (run.ran) return run;
  run.ran = true;
  const auto t0 = Clock::now();
  try {
    const FitConfig c = torus_config();
    run.result = fit(c, [&](const IterationRecord& r, const FieldState& f) {
      if (r.iteration == 499) {
        double m = 0;
        for (double x : f.sdf) m = std::max(m, std::abs(x));
        run.max_abs_at_500 = m;
      }
      if (r.iteration % 50 == 0)
        std::fprintf(stderr, "  torus fit %d: loss %.4g active %zu\n", r.iteration, r.loss.total, r.active_tets);
    });
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  run.seconds = seconds_since(t0);
  return run;
}

Outcome topology_change() {
  const TorusRun& run = torus_run();
  if (!run.error.empty()) return {false, "fit failed: " + run.error};
  const double edge = run.result.grid.cell_edge();
  const MeshTopology topo = mesh_topology(run.result.mesh);
  const double cd = run.result.trace.chamfer;
  const bool pass = cd <= 2 * edge && topo.watertight() && topo.euler_characteristic() == 0;
  return {pass, fmt("chamfer %.4f (<= %.4f), euler %ld (0), watertight %s, %zu iterations, %.0fs", cd, 2 * edge,
                    topo.euler_characteristic(), topo.watertight() ? "yes" : "no",
                    run.result.trace.records.size(), run.seconds)};
}

Outcome extraction_fidelity() {
  const TorusRun& run = torus_run();
  if (!run.error.empty()) return {false, "fit failed: " + run.error};
  const FitConfig c = torus_config();
  const double s = s_schedule(c.iterations - 1, c.s_ratio, c.s_start);
  const Scene scene = preprocess(run.result.grid, run.result.field, s, c.filter_threshold);
  OrbitSpec orbit = c.orbit;
  orbit.width = orbit.height = 128;
  double sum = 0;
  long count = 0;
  for (int v = 0; v < 8; ++v) {
    const Camera cam = orbit_camera(v, 8, orbit);
    const RenderMaps splat = render_view(scene, cam, c.render).forward.maps;
    const RenderMaps raster = rasterize_mesh(run.result.mesh, cam);
    for (std::size_t p = 0; p < splat.pixel_count(); ++p) {
      if (splat.opacity[p] <= 0.5 || raster.opacity[p] <= 0.5) continue;
      const Vec3 a{splat.normal[3 * p], splat.normal[3 * p + 1], splat.normal[3 * p + 2]};
      const Vec3 b{raster.normal[3 * p], raster.normal[3 * p + 1], raster.normal[3 * p + 2]};
      if (length(a) == 0) continue;
      sum += std::acos(std::clamp(dot(normalize(a), normalize(b)), -1.0, 1.0));
      ++count;
    }
  }
  const double mean_deg = count ? sum / count * 180 / std::numbers::pi : 180;
  return {count > 0 && mean_deg <= 10, fmt("mean angular error %.2f deg (<=10) over %ld pixels", mean_deg, count)};
}

Outcome eikonal_ablation() {
  const TorusRun& run = torus_run();
  if (!run.error.empty()) return {false, "reference fit failed: " + run.error};
  FitConfig c = torus_config();
  c.lambda_eik = 0;
  c.iterations = 500;
  double ablated = -1;
  std::string error;
  try {
    const FitResult r = fit(c);
    for (double x : r.field.sdf) ablated = std::max(ablated, std::abs(x));
  } catch (const NumericalError& e) {
    // A blow-up to non-finite values is the extreme outcome.
    ablated = std::numeric_limits<double>::infinity();
    error = " (diverged)";
  }
  const double ratio = ablated / run.max_abs_at_500;
  return {ratio >= 10, fmt("max|f| %.3g with lambda_eik=0 vs %.3g with 1000: ratio %.2f (>=10)%s", ablated,
                           run.max_abs_at_500, ratio, error.c_str())};
}

// ---------------------------------------------------------------------------
// 7. regularizers

double fd_worst(const TetrahedralGrid& g, FieldState field,
                const std::function<RegularizerResult(const FieldState&)>& loss) {
  const GradientBuffers grad = loss(field).grad;
  const double h = 1e-6;
  std::vector<double> an, nu;
  for (std::size_t v = 0; v < g.vertex_count(); ++v)
    for (int c = 0; c < 4; ++c) {
      double& x = c == 3 ? field.sdf[v] : field.deformation[v][c];
      const double keep = x;
      x = keep + h;
      const double up = loss(field).value;
      x = keep - h;
      const double dn = loss(field).value;
      x = keep;
      nu.push_back((up - dn) / (2 * h));
      an.push_back(c == 3 ? grad.d_sdf[v] : grad.d_deform[v][c]);
    }
  double scale = 0;
  for (double x : nu) scale = std::max(scale, std::abs(x));
  double worst = 0;
  for (std::size_t i = 0; i < an.size(); ++i)
    worst = std::max(worst, std::abs(an[i] - nu[i]) / std::max({std::abs(an[i]), std::abs(nu[i]), 1e-4 * scale}));
  return worst;
}

Outcome regularizers() {
  const auto g = build_grid(4);
  std::vector<int> all(g.tet_count());
  std::iota(all.begin(), all.end(), 0);
  std::vector<double> fx(g.vertex_count());
  for (std::size_t v = 0; v < fx.size(); ++v) fx[v] = g.rest_positions[v].x;
  const double eik_zero = eikonal_loss(g, make_field(g, fx), all).value;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0, 1);
  double nc_zero = 0;
  for (int k = 0; k < 5; ++k) {
    const Vec3 a{n(rng), n(rng), n(rng)};
    const double b = n(rng);
    std::vector<double> f(g.vertex_count());
    for (std::size_t v = 0; v < f.size(); ++v) f[v] = dot(a, g.rest_positions[v]) + b;
    nc_zero = std::max(nc_zero, normal_consistency_loss(g, make_field(g, f)).value);
  }
  const FieldState rnd = random_smooth_field(g, 21, 0.2);
  const double eik_fd = fd_worst(g, rnd, [&](const FieldState& f) { return eikonal_loss(g, f, all); });
  const double nc_fd = fd_worst(g, rnd, [&](const FieldState& f) { return normal_consistency_loss(g, f); });
  const bool pass = eik_zero <= 1e-12 && nc_zero <= 1e-12 && eik_fd <= 1e-4 && nc_fd <= 1e-4;
  return {pass, fmt("eikonal(f=x) %.1e, nc(linear) %.1e, fd rel. error eikonal %.1e nc %.1e (<=1e-4)", eik_zero,
                    nc_zero, eik_fd, nc_fd)};
}

// ---------------------------------------------------------------------------
// 8. marching tetrahedra golden

Outcome mt_golden() {
  const auto g = build_grid(32);
  const AnalyticShape sphere = AnalyticShape::sphere(0.5);
  const TriangleMesh ms = marching_tetrahedra(g, init_from_shape(g, sphere));
  const MeshTopology topo = mesh_topology(ms);
  const double edge = g.cell_edge();
  const double cd = chamfer(ms, sphere, 20000);
  const AnalyticShape box = AnalyticShape::box({0.45, 0.3, 0.6}, {0.05, -0.1, 0.0});
  const TriangleMesh mb = marching_tetrahedra(g, init_from_shape(g, box));
  double worst = 0;
  for (const Vec3& p : mb.vertices) worst = std::max(worst, std::abs(analytic_sdf(box, p)));
  const bool pass = topo.watertight() && topo.euler_characteristic() == 2 && cd <= edge && !mb.empty() &&
                    worst <= 1.5 * edge;
  return {pass, fmt("sphere watertight %s euler %ld chamfer %.4f (<= %.4f); box max|sdf| %.4f (<= %.4f)",
                    topo.watertight() ? "yes" : "no", topo.euler_characteristic(), cd, edge, worst, 1.5 * edge)};
}

// ---------------------------------------------------------------------------
// 9. determinism

Outcome determinism() {
  FitConfig c;
  c.resolution = 16;
  c.image_size = 48;
  c.views = 8;
  c.iterations = 20;
  c.chamfer_samples = 2000;
  c.target = AnalyticShape::torus(0.5, 0.2);
  std::vector<std::string> checkpoints;
  std::vector<std::vector<double>> losses;
  const int saved = worker_count();
  for (int workers : {worker_count(), 1}) {
    set_worker_count(workers);
    const FitResult r = fit(c);
    std::ostringstream out;
    write_checkpoint(r.field, out);
    checkpoints.push_back(out.str());
    losses.emplace_back();
    for (const auto& rec : r.trace.records) losses.back().push_back(rec.loss.total);
  }
  set_worker_count(saved);
  const bool pass = checkpoints[0] == checkpoints[1] && losses[0] == losses[1];
  return {pass, fmt("%zu-iteration traces %s, checkpoints %s", losses[0].size(),
                    losses[0] == losses[1] ? "identical" : "differ",
                    checkpoints[0] == checkpoints[1] ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria = {
      {"gradient exactness", gradient_exactness},
      {"opacity bound soundness", opacity_bound},
      {"sorting window equivalence", sorting_window},
      {"surface limit consistency", surface_limit},
      {"topology-change fit", topology_change},
      {"mesh extraction fidelity", extraction_fidelity},
      {"regularizer correctness", regularizers},
      {"marching tetrahedra golden", mt_golden},
      {"determinism", determinism},
      {"eikonal ablation", eikonal_ablation},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
