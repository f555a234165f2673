#include "tetsplat/splat.hpp"

#include <algorithm>
#include <cmath>

#include "tetsplat/errors.hpp"
#include "tetsplat/parallel.hpp"

namespace tetsplat {

double alpha_max(const std::array<double, 4>& f, double s) {
  const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
  // 1 - sigmoid(s*fmin)/sigmoid(s*fmax) in log space.
  const double ratio = std::exp(log_sigmoid(s * *lo) - log_sigmoid(s * *hi));
  return std::max(0.0, 1.0 - ratio);
}

Opacity opacity_with_grad(double f_prev, double f_next, double s) {
  const double ratio = std::exp(log_sigmoid(s * f_next) - log_sigmoid(s * f_prev));
  const double a = 1.0 - ratio;
  Opacity out;
  if (!(a > 0)) return out;
  if (a >= kAlphaClip) {
    out.alpha = kAlphaClip;
    return out;
  }
  out.alpha = a;
  out.d_prev = ratio * s * sigmoid(-s * f_prev);
  out.d_next = -ratio * s * sigmoid(-s * f_next);
  return out;
}

std::vector<int> prefilter(const TetrahedralGrid& grid, std::span<const double> sdf, double s,
                           double threshold) {
  if (sdf.size() != grid.vertex_count()) throw InvalidArgument("prefilter: sdf size mismatch");
  if (!(s > 0)) throw InvalidArgument("prefilter: steepness must be positive");
  const std::size_t n = grid.tet_count();
  constexpr std::size_t grain = 1 << 15;
  std::vector<std::vector<int>> parts(chunk_count(n, grain));
  parallel_for(n, grain, [&](std::size_t b, std::size_t e) {
    auto& out = parts[b / grain];
    for (std::size_t t = b; t < e; ++t) {
      const Tet& tet = grid.tets[t];
      const std::array<double, 4> f{sdf[tet[0]], sdf[tet[1]], sdf[tet[2]], sdf[tet[3]]};
      if (alpha_max(f, s) >= threshold) out.push_back(static_cast<int>(t));
    }
  });
  std::vector<int> active;
  for (auto& p : parts) active.insert(active.end(), p.begin(), p.end());
  return active;
}

std::pair<Vec3, Vec3> tet_bounds(const TetrahedralGrid& grid, std::span<const Vec3> positions,
                                 std::span<const int> tets) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  Vec3 lo{inf, inf, inf}, hi{-inf, -inf, -inf};
  for (int t : tets)
    for (int v : grid.tets[t]) {
      lo = vmin(lo, positions[v]);
      hi = vmax(hi, positions[v]);
    }
  return {lo, hi};
}

ResampledGrid make_resampled_grid(const TetrahedralGrid& canonical, const Vec3& lo, const Vec3& hi) {
  ResampledGrid rg;
  rg.grid = build_grid(canonical.resolution, lo, hi);
  const Vec3 ext = canonical.hi - canonical.lo;
  rg.scale = {(hi.x - lo.x) / ext.x, (hi.y - lo.y) / ext.y, (hi.z - lo.z) / ext.z};
  rg.samples.resize(rg.grid.vertex_count());
  for (std::size_t v = 0; v < rg.samples.size(); ++v)
    rg.samples[v] = locate(canonical, rg.grid.rest_positions[v]);
  return rg;
}

FieldState resample_field(const ResampledGrid& rg, const FieldState& canonical) {
  FieldState out;
  const std::size_t n = rg.samples.size();
  out.sdf.resize(n);
  out.deformation.resize(n);
  out.deformation_limit = deformation_limit(rg.grid);
  out.steepness = canonical.steepness;
  for (std::size_t v = 0; v < n; ++v) {
    const GridSample& s = rg.samples[v];
    double f = 0;
    Vec3 d;
    for (int c = 0; c < 4; ++c) {
      f += s.weights[c] * canonical.sdf[s.vertices[c]];
      d += s.weights[c] * canonical.deformation[s.vertices[c]];
    }
    out.sdf[v] = f;
    out.deformation[v] = mul(d, rg.scale);
  }
  clamp_deformation(out);
  return out;
}

void resample_backward(const ResampledGrid& rg, std::span<const double> d_sdf,
                       std::span<const Vec3> d_deform, std::span<double> canonical_d_sdf,
                       std::span<Vec3> canonical_d_deform) {
  for (std::size_t v = 0; v < rg.samples.size(); ++v) {
    const GridSample& s = rg.samples[v];
    const Vec3 dd = mul(d_deform[v], rg.scale);
    for (int c = 0; c < 4; ++c) {
      canonical_d_sdf[s.vertices[c]] += s.weights[c] * d_sdf[v];
      canonical_d_deform[s.vertices[c]] += s.weights[c] * dd;
    }
  }
}

CoarseToFine coarse_to_fine_filter(const TetrahedralGrid& grid, const FieldState& field, double s,
                                   double threshold, double margin) {
  CoarseToFine out;
  out.first_active = prefilter(grid, field.sdf, s, threshold);
  if (out.first_active.empty()) throw EmptyScene("coarse_to_fine_filter: no tet survives pre-filtering");
  const auto positions = deformed_positions(grid, field);
  std::tie(out.box_lo, out.box_hi) = tet_bounds(grid, positions, out.first_active);
  const Vec3 cell = grid.cell_size();
  Vec3 lo, hi;
  for (int a = 0; a < 3; ++a) {
    const double ext = std::max(out.box_hi[a] - out.box_lo[a], cell[a]);
    lo[a] = std::max(grid.lo[a], out.box_lo[a] - margin * ext);
    hi[a] = std::min(grid.hi[a], out.box_hi[a] + margin * ext);
  }
  out.render = make_resampled_grid(grid, lo, hi);
  out.field = resample_field(out.render, field);
  out.active = prefilter(out.render.grid, out.field.sdf, s, threshold);
  return out;
}

Scene make_scene(const TetrahedralGrid& grid, const FieldState& field, double s, std::vector<int> active,
                 std::vector<Vec3> colors) {
  if (!(s > 0)) throw InvalidArgument("make_scene: steepness must be positive");
  if (!colors.empty() && colors.size() != grid.tet_count())
    throw InvalidArgument("make_scene: colors must be empty or per tet");
  Scene scene;
  scene.grid = &grid;
  scene.positions = deformed_positions(grid, field);
  scene.sdf = field.sdf;
  scene.steepness = s;
  scene.colors = std::move(colors);
  scene.active.reserve(active.size());
  for (int t : active) {
    const Tet& tet = grid.tets[t];
    const std::array<Vec3, 4> p{scene.positions[tet[0]], scene.positions[tet[1]],
                                scene.positions[tet[2]], scene.positions[tet[3]]};
    const std::array<double, 4> f{scene.sdf[tet[0]], scene.sdf[tet[1]], scene.sdf[tet[2]],
                                  scene.sdf[tet[3]]};
    const auto g = linear_gradient(p, f);
    if (!g) {
      ++scene.degenerate_skipped;
      continue;
    }
    const auto n = tet_normal(*g);
    scene.active.push_back(t);
    scene.gradients.push_back(*g);
    scene.has_normal.push_back(n.has_value());
    scene.normals.push_back(n.value_or(Vec3{}));
  }
  return scene;
}

Scene preprocess(const TetrahedralGrid& grid, const FieldState& field, double s, double threshold,
                 std::vector<Vec3> colors) {
  return make_scene(grid, field, s, prefilter(grid, field.sdf, s, threshold), std::move(colors));
}

std::vector<TetSplat> make_splats(const Scene& scene, const Camera& camera) {
  const std::size_t n = scene.active.size();
  constexpr std::size_t grain = 1 << 14;
  std::vector<std::vector<TetSplat>> parts(chunk_count(n, grain));
  parallel_for(n, grain, [&](std::size_t b, std::size_t e) {
    auto& out = parts[b / grain];
    for (std::size_t i = b; i < e; ++i) {
      const int t = scene.active[i];
      const Tet& tet = scene.grid->tets[t];
      TetSplat sp;
      bool near_cull = false;
      Vec3 cam[4];
      for (int k = 0; k < 4; ++k) {
        cam[k] = camera.to_camera(scene.positions[tet[k]]);
        sp.depths[k] = cam[k].z;
        if (!(cam[k].z > camera.near)) near_cull = true;
      }
      if (near_cull) continue;
      for (int k = 0; k < 4; ++k) {
        sp.proj[k] = project_camera_space(camera, cam[k]);
        sp.f[k] = scene.sdf[tet[k]];
      }
      if (cull_tet(camera, sp.proj, sp.depths)) continue;
      sp.tet_index = t;
      sp.scene_index = static_cast<int>(i);
      sp.has_normal = scene.has_normal[i] != 0;
      sp.normal = scene.normals[i];
      sp.mean_depth = 0.25 * (sp.depths[0] + sp.depths[1] + sp.depths[2] + sp.depths[3]);
      sp.alpha_max = alpha_max(sp.f, scene.steepness);
      if (!scene.colors.empty()) {
        sp.has_color = true;
        sp.color = scene.colors[t];
      }
      sp.xmin = sp.xmax = sp.proj[0].x;
      sp.ymin = sp.ymax = sp.proj[0].y;
      for (int k = 1; k < 4; ++k) {
        sp.xmin = std::min(sp.xmin, sp.proj[k].x);
        sp.xmax = std::max(sp.xmax, sp.proj[k].x);
        sp.ymin = std::min(sp.ymin, sp.proj[k].y);
        sp.ymax = std::max(sp.ymax, sp.proj[k].y);
      }
      out.push_back(sp);
    }
  });
  std::vector<TetSplat> splats;
  splats.reserve(n);
  for (auto& p : parts) splats.insert(splats.end(), p.begin(), p.end());
  return splats;
}

std::optional<Vec2> barycentric_2d(const std::array<Vec2, 3>& tri, const Vec2& pixel) {
  const Vec2 ab = tri[1] - tri[0], ac = tri[2] - tri[0], ap = pixel - tri[0];
  const double d = cross(ab, ac);
  if (!(std::abs(d) * 0.5 > kTriangleAreaEpsilon)) return std::nullopt;
  const double u = cross(ap, ac) / d;
  const double v = cross(ab, ap) / d;
  if (u < 0 || v < 0 || u + v > 1) return std::nullopt;
  return Vec2{u, v};
}

PerspectiveCoords perspective_correct(double u_screen, double v_screen, double za, double zb, double zc) {
  const double wa = (1 - u_screen - v_screen) / za;
  const double wb = u_screen / zb;
  const double wc = v_screen / zc;
  const double w = wa + wb + wc;
  return {wb / w, wc / w, 1.0 / w};
}

std::optional<SplatIntersection> intersect_splat(const TetSplat& splat, const Vec2& pixel) {
  if (pixel.x < splat.xmin || pixel.x > splat.xmax || pixel.y < splat.ymin || pixel.y > splat.ymax)
    return std::nullopt;
  FaceHit hits[4];
  int count = 0;
  for (int face = 0; face < 4; ++face) {
    const int a = kFaces[face][0], b = kFaces[face][1], c = kFaces[face][2];
    const auto uv = barycentric_2d({splat.proj[a], splat.proj[b], splat.proj[c]}, pixel);
    if (!uv) continue;
    const auto pc = perspective_correct(uv->x, uv->y, splat.depths[a], splat.depths[b], splat.depths[c]);
    hits[count++] = {face, (1 - pc.u - pc.v) * splat.f[a] + pc.u * splat.f[b] + pc.v * splat.f[c],
                     pc.depth};
  }
  if (count < 2) return std::nullopt;
  int near = 0, far = 0;
  for (int i = 1; i < count; ++i) {
    if (hits[i].depth < hits[near].depth) near = i;
    if (hits[i].depth >= hits[far].depth) far = i;
  }
  if (near == far) far = near == 0 ? 1 : 0;
  return SplatIntersection{hits[near], hits[far]};
}

SplatGrad& SplatGrad::operator+=(const SplatGrad& o) {
  for (int k = 0; k < 4; ++k) {
    d_proj[k] += o.d_proj[k];
    d_depth[k] += o.d_depth[k];
    d_f[k] += o.d_f[k];
  }
  d_normal += o.d_normal;
  d_color += o.d_color;
  d_mean_depth += o.d_mean_depth;
  return *this;
}

void face_hit_backward(const TetSplat& splat, int face, const Vec2& pixel, double d_f, SplatGrad& grad) {
  const int ia = kFaces[face][0], ib = kFaces[face][1], ic = kFaces[face][2];
  const Vec2 a = splat.proj[ia], b = splat.proj[ib], c = splat.proj[ic];
  const double za = splat.depths[ia], zb = splat.depths[ib], zc = splat.depths[ic];
  const double fa = splat.f[ia], fb = splat.f[ib], fc = splat.f[ic];

  const Vec2 ab = b - a, ac = c - a, ap = pixel - a;
  const double d = cross(ab, ac);
  const double us = cross(ap, ac) / d;
  const double vs = cross(ab, ap) / d;
  const double ls = 1 - us - vs;
  const double wa = ls / za, wb = us / zb, wc = vs / zc;
  const double w = wa + wb + wc;
  const double u = wb / w, v = wc / w;

  grad.d_f[ia] += d_f * (1 - u - v);
  grad.d_f[ib] += d_f * u;
  grad.d_f[ic] += d_f * v;
  const double du = d_f * (fb - fa);
  const double dv = d_f * (fc - fa);

  const double dwa = (-du * u - dv * v) / w;
  const double dwb = (du * (1 - u) - dv * v) / w;
  const double dwc = (-du * u + dv * (1 - v)) / w;

  grad.d_depth[ia] -= dwa * wa / za;
  grad.d_depth[ib] -= dwb * wb / zb;
  grad.d_depth[ic] -= dwc * wc / zc;
  const double dls = dwa / za;
  const double dus = dwb / zb - dls;
  const double dvs = dwc / zc - dls;

  // Barycentric gradients w.r.t. the pixel; moving vertex k by delta acts
  // like moving the pixel by -lambda_k * delta.
  const Vec2 grad_u{ac.y / d, -ac.x / d};
  const Vec2 grad_v{-ab.y / d, ab.x / d};
  const Vec2 g = dus * grad_u + dvs * grad_v;
  grad.d_proj[ia] -= ls * g;
  grad.d_proj[ib] -= us * g;
  grad.d_proj[ic] -= vs * g;
}

}  // namespace tetsplat
