#include "tetsplat/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <random>

#include "tetsplat/errors.hpp"
#include "tetsplat/splat.hpp"

namespace tetsplat {

FieldState random_smooth_field(const TetrahedralGrid& grid, std::uint64_t seed, double amplitude) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  struct Wave {
    Vec3 k;
    double phase, amp;
  };
  std::vector<Wave> waves(4);
  for (auto& w : waves) {
    w.k = Vec3{uni(rng), uni(rng), uni(rng)} * 5.0;
    w.phase = 3.14159265358979 * uni(rng);
    w.amp = amplitude * (0.6 + 0.4 * uni(rng));
  }
  std::vector<double> sdf(grid.vertex_count());
  for (std::size_t v = 0; v < sdf.size(); ++v) {
    const Vec3& p = grid.rest_positions[v];
    double f = length(p) - 0.5;
    for (const auto& w : waves) f += w.amp * std::sin(dot(w.k, p) + w.phase);
    sdf[v] = f;
  }
  FieldState field = make_field(grid, std::move(sdf));
  for (auto& d : field.deformation)
    d = Vec3{uni(rng) * field.deformation_limit.x, uni(rng) * field.deformation_limit.y,
             uni(rng) * field.deformation_limit.z} * 0.5;
  return field;
}

Camera ViewSpec::camera() const {
  return spherical_camera(radius, azimuth_deg, elevation_deg, width, height, fov_deg, near, far);
}

MapDifference map_difference(const RenderMaps& a, const RenderMaps& b) {
  if (a.width != b.width || a.height != b.height) throw InvalidArgument("map_difference: size mismatch");
  MapDifference d;
  std::size_t n = 0;
  auto scan = [&](const std::vector<double>& x, const std::vector<double>& y) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = std::abs(x[i] - y[i]);
      d.max_abs = std::max(d.max_abs, e);
      d.mean_abs += e;
    }
    n += x.size();
  };
  scan(a.normal, b.normal);
  scan(a.depth, b.depth);
  scan(a.opacity, b.opacity);
  if (a.has_color() && b.has_color()) scan(a.color, b.color);
  if (n) d.mean_abs /= static_cast<double>(n);
  return d;
}

bool GradCheckReport::passed() const {
  return !entries.empty() && std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

GradCheckReport check_gradients(const GradCheckConfig& c) {
  if (c.resolution < 1) throw InvalidArgument("check-grad: resolution must be >= 1");
  if (c.resolution > 8) throw InvalidArgument("check-grad: resolution " + std::to_string(c.resolution) + " exceeds 8");
  if (!(c.step > 0)) throw InvalidArgument("check-grad: step must be positive");
  const TetrahedralGrid grid = build_grid(c.resolution);
  const FieldState base = random_smooth_field(grid, c.seed);
  const Camera camera = c.view.camera();
  validate(camera);
  const std::vector<int> active = prefilter(grid, base.sdf, c.s);
  const RenderOptions options{c.window, 0.0, kDefaultTileSize};

  std::mt19937_64 rng(c.seed + 17);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  RenderMaps weights(camera.width, camera.height);
  for (auto& w : weights.normal) w = uni(rng);
  for (auto& w : weights.depth) w = uni(rng);
  for (auto& w : weights.opacity) w = uni(rng);

  // Per-pixel weighted values, one vector per map.
  using PixelValues = std::array<std::vector<double>, 3>;
  const std::size_t np = static_cast<std::size_t>(camera.width) * camera.height;
  auto pixel_values = [&](const RenderMaps& m) {
    PixelValues out;
    for (auto& o : out) o.assign(np, 0.0);
    for (std::size_t i = 0; i < np; ++i) {
      out[0][i] = weights.opacity[i] * m.opacity[i];
      out[1][i] = weights.depth[i] * m.depth[i];
      for (int ch = 0; ch < 3; ++ch) out[2][i] += weights.normal[3 * i + ch] * m.normal[3 * i + ch];
    }
    return out;
  };
  auto render_values = [&](const FieldState& f) {
    const Scene scene = make_scene(grid, f, c.s, active);
    return pixel_values(render_view(scene, camera, options).forward.maps);
  };

  const Scene scene = make_scene(grid, base, c.s, active);
  const RenderPass pass = render_view(scene, camera, options);
  auto weights_for = [&](int m, std::optional<std::size_t> pixel) {
    RenderMaps d(camera.width, camera.height);
    for (std::size_t i = 0; i < np; ++i) {
      if (pixel && *pixel != i) continue;
      if (m == 0) d.opacity[i] = weights.opacity[i];
      if (m == 1) d.depth[i] = weights.depth[i];
      if (m == 2)
        for (int ch = 0; ch < 3; ++ch) d.normal[3 * i + ch] = weights.normal[3 * i + ch];
    }
    return d;
  };
  std::array<GradientBuffers, 3> analytic;
  for (int m = 0; m < 3; ++m)
    analytic[m] = render_backward(pass.forward.saved, pass.splats, scene, camera, weights_for(m, std::nullopt));
  std::map<std::pair<int, std::size_t>, GradientBuffers> per_pixel;
  auto pixel_gradient = [&](int m, std::size_t p) -> const GradientBuffers& {
    auto it = per_pixel.find({m, p});
    if (it == per_pixel.end())
      it = per_pixel.emplace(std::make_pair(m, p),
                             render_backward(pass.forward.saved, pass.splats, scene, camera, weights_for(m, p)))
               .first;
    return it->second;
  };
  auto component = [](const GradientBuffers& g, int cls, std::size_t i) {
    return cls == 0 ? g.d_sdf[i] : g.d_deform[i / 3][static_cast<int>(i % 3)];
  };

  const std::size_t nv = grid.vertex_count();
  struct Slot {
    std::vector<double> numeric, numeric_all, analytic;
    std::size_t excluded = 0;
  };
  // slots[m][class]
  std::array<std::array<Slot, 2>, 3> slots;
  for (auto& m : slots)
    for (int cls = 0; cls < 2; ++cls) {
      const std::size_t n = cls == 0 ? nv : 3 * nv;
      m[cls].numeric.assign(n, 0.0);
      m[cls].numeric_all.assign(n, 0.0);
      m[cls].analytic.assign(n, 0.0);
    }
  FieldState f = base;
  const double h = c.step;
  for (std::size_t v = 0; v < nv; ++v) {
    for (int p = 0; p < 4; ++p) {
      double& x = p == 0 ? f.sdf[v] : f.deformation[v][p - 1];
      const double saved = x;
      x = saved + h;
      const auto up = render_values(f);
      x = saved - h;
      const auto down = render_values(f);
      x = saved + h / 2;
      const auto up2 = render_values(f);
      x = saved - h / 2;
      const auto down2 = render_values(f);
      x = saved;
      const int cls = p == 0 ? 0 : 1;
      const std::size_t k = p == 0 ? v : 3 * v + p - 1;
      for (int m = 0; m < 3; ++m) {
        Slot& slot = slots[m][cls];
        double num = 0, num_all = 0, ana = component(analytic[m], cls, k);
        for (std::size_t i = 0; i < np; ++i) {
          const double d1 = (up[m][i] - down[m][i]) / (2 * h);
          const double d2 = (up2[m][i] - down2[m][i]) / h;
          num_all += d1;
          if (std::abs(d1 - d2) > c.kink_tolerance * std::max(std::abs(d1), std::abs(d2)) + c.kink_absolute) {
            ++slot.excluded;
            ana -= component(pixel_gradient(m, i), cls, k);
          } else {
            num += d1;
          }
        }
        slot.numeric[k] = num;
        slot.numeric_all[k] = num_all;
        slot.analytic[k] = ana;
      }
    }
  }

  auto max_rel = [&](const std::vector<double>& ana, const std::vector<double>& num, double scale) {
    double worst = 0;
    for (std::size_t i = 0; i < num.size(); ++i) {
      const double denom = std::max({std::abs(ana[i]), std::abs(num[i]), c.floor * scale});
      const double err = denom > 0 ? std::abs(ana[i] - num[i]) / denom : 0.0;
      worst = std::max(worst, std::isfinite(err) ? err : INFINITY);
    }
    return worst;
  };

  static const char* map_names[3] = {"opacity", "depth", "normal"};
  GradCheckReport report;
  report.active_tets = scene.active.size();
  for (int m = 0; m < 3; ++m)
    for (int cls = 0; cls < 2; ++cls) {
      const Slot& slot = slots[m][cls];
      std::vector<double> ana_all(slot.numeric_all.size());
      for (std::size_t i = 0; i < ana_all.size(); ++i) ana_all[i] = component(analytic[m], cls, i);
      double scale = 0;
      for (double g : slot.numeric_all) scale = std::max(scale, std::abs(g));
      GradCheckEntry e;
      e.map = map_names[m];
      e.parameter = cls == 0 ? "sdf" : "deformation";
      e.parameters = slot.numeric.size();
      e.max_abs_gradient = scale;
      e.excluded = slot.excluded;
      e.tolerance = m == 0 ? c.opacity_tolerance : c.tolerance;
      e.max_rel_error = max_rel(slot.analytic, slot.numeric, scale);
      e.max_rel_error_unfiltered = max_rel(ana_all, slot.numeric_all, scale);
      e.passed = e.max_rel_error <= e.tolerance;
      report.entries.push_back(e);
    }
  return report;
}

std::vector<BenchRow> bench_sort(const BenchSortConfig& c) {
  if (c.frames < 1) throw InvalidArgument("bench-sort: frames must be >= 1");
  const Camera camera = c.view.camera();
  validate(camera);
  std::vector<BenchRow> rows;
  for (int r : c.resolutions) {
    const TetrahedralGrid grid = build_grid(r);
    const FieldState field = random_smooth_field(grid, c.seed);
    const Scene scene = preprocess(grid, field, c.s);
    const auto splats = make_splats(scene, camera);
    const TileBins bins = bin_and_sort(splats, camera);
    const RenderMaps reference = render_reference(splats, camera, c.s);
    for (int w : c.windows) {
      if (w < 0) throw InvalidArgument("bench-sort: window must be >= 0");
      BenchRow row;
      row.resolution = r;
      row.window = w == 0 ? std::max<int>(1, static_cast<int>(bins.max_list_length())) : w;
      const RenderOptions options{row.window, 0.0, kDefaultTileSize};
      RenderMaps maps;
      const auto t0 = std::chrono::steady_clock::now();
      for (int k = 0; k < c.frames; ++k) maps = render_forward(bins, splats, camera, c.s, options).maps;
      row.ms_per_frame =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / c.frames;
      const MapDifference d = map_difference(maps, reference);
      row.max_abs = d.max_abs;
      row.mean_abs = d.mean_abs;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace tetsplat
