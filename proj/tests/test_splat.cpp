#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "tetsplat/diagnostics.hpp"
#include "tetsplat/errors.hpp"
#include "tetsplat/splat.hpp"

using namespace tetsplat;

namespace {

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Hand-built splat with equal depths unless given.
TetSplat make_test_splat(std::array<Vec2, 4> proj, std::array<double, 4> depths, std::array<double, 4> f) {
  TetSplat sp;
  sp.tet_index = 0;
  sp.scene_index = 0;
  sp.proj = proj;
  sp.depths = depths;
  sp.f = f;
  sp.xmin = sp.ymin = 1e300;
  sp.xmax = sp.ymax = -1e300;
  for (const Vec2& p : proj) {
    sp.xmin = std::min(sp.xmin, p.x);
    sp.xmax = std::max(sp.xmax, p.x);
    sp.ymin = std::min(sp.ymin, p.y);
    sp.ymax = std::max(sp.ymax, p.y);
  }
  sp.mean_depth = (depths[0] + depths[1] + depths[2] + depths[3]) / 4;
  return sp;
}

}  // namespace

TEST_SUITE("splat") {

TEST_CASE("opacity bound examples") {
  CHECK(alpha_max({1, 1, 1, 1}, 37) == 0.0);
  // 1 - sigmoid(4) / sigmoid(10), evaluated with mpmath at 30 digits.
  CHECK(alpha_max({0.2, 0.5, 0.3, 0.4}, 20) == doctest::Approx(0.017941626604998045).epsilon(1e-12));
  CHECK(alpha_max({-0.1, 0.2, 0.0, 0.05}, 1e4) == doctest::Approx(1.0));
  CHECK(alpha_max({-0.1, 0.2, 0.0, 0.05}, 1e4) <= 1.0);
}

TEST_CASE("opacity examples") {
  CHECK(opacity(0.3, 0.3, 50) == 0.0);
  // 1 - sigmoid(-2) / sigmoid(2) = 1 - e^-2.
  CHECK(opacity(0.1, -0.1, 20) == doctest::Approx(0.8646647167633873).epsilon(1e-12));
  CHECK(opacity(-0.05, 0.05, 20) == 0.0);
  CHECK(opacity(0.1, -0.1, 1e5) == kAlphaClip);
  CHECK(opacity(0.1, -0.1, 1e5) < 1.0);
}

TEST_CASE("opacity is finite for extreme arguments") {
  for (double s : {1.0, 100.0, 1e6})
    for (double a : {-50.0, -1.0, 0.0, 1e-9, 3.0, 80.0})
      for (double b : {-80.0, -2.0, 0.0, 0.5, 50.0}) {
        const Opacity o = opacity_with_grad(a, b, s);
        CHECK(std::isfinite(o.alpha));
        CHECK(std::isfinite(o.d_prev));
        CHECK(std::isfinite(o.d_next));
        CHECK(o.alpha >= 0);
        CHECK(o.alpha <= kAlphaClip);
      }
}

TEST_CASE("opacity derivatives match finite differences") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  int checked = 0;
  for (int i = 0; i < 200; ++i) {
    const double a = u(rng), b = u(rng), s = 20;
    const Opacity o = opacity_with_grad(a, b, s);
    if (o.alpha <= 1e-6 || o.alpha >= kAlphaClip - 1e-6) continue;
    const double h = 1e-7;
    const double da = (opacity(a + h, b, s) - opacity(a - h, b, s)) / (2 * h);
    const double db = (opacity(a, b + h, s) - opacity(a, b - h, s)) / (2 * h);
    CHECK(testing::rel_error(o.d_prev, da, 1e-8) < 1e-6);
    CHECK(testing::rel_error(o.d_next, db, 1e-8) < 1e-6);
    // Closed form from the quotient rule.
    const double ratio = sigmoid_ref(s * b) / sigmoid_ref(s * a);
    CHECK(o.d_prev == doctest::Approx(ratio * s * (1 - sigmoid_ref(s * a))));
    ++checked;
  }
  CHECK(checked > 50);
}

TEST_CASE("opacity never exceeds the bound over random chords") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0, 1), fv(-0.3, 0.3), sv(1, 500);
  for (int i = 0; i < 2000; ++i) {
    const std::array<double, 4> f{fv(rng), fv(rng), fv(rng), fv(rng)};
    const double s = sv(rng);
    double w1[4], w2[4], n1 = 0, n2 = 0;
    for (int k = 0; k < 4; ++k) {
      n1 += w1[k] = u(rng);
      n2 += w2[k] = u(rng);
    }
    double a = 0, b = 0;
    for (int k = 0; k < 4; ++k) {
      a += w1[k] / n1 * f[k];
      b += w2[k] / n2 * f[k];
    }
    CHECK(opacity(a, b, s) <= alpha_max(f, s) + 1e-12);
  }
}

TEST_CASE("prefilter matches a brute-force bound") {
  const auto g = build_grid(8);
  const auto field = init_sphere(g, 0.5);
  const double s = 20;
  const auto active = prefilter(g, field.sdf, s);
  std::vector<int> expect;
  for (int t = 0; t < static_cast<int>(g.tet_count()); ++t) {
    double lo = 1e300, hi = -1e300;
    bool far = true;
    for (int v : g.tets[t]) {
      lo = std::min(lo, field.sdf[v]);
      hi = std::max(hi, field.sdf[v]);
      far = far && std::abs(field.sdf[v]) >= 0.5;
    }
    const double bound = 1 - sigmoid_ref(s * lo) / sigmoid_ref(s * hi);
    if (bound >= 1.0 / 255.0) expect.push_back(t);
    if (far) CHECK(std::find(active.begin(), active.end(), t) == active.end());
  }
  CHECK(active == expect);
  CHECK(!active.empty());
  CHECK(active.size() < g.tet_count());
}

TEST_CASE("prefilter edge cases") {
  const auto g = build_grid(4);
  const std::vector<double> positive(g.vertex_count(), 10.0);
  CHECK(prefilter(g, positive, 20).empty());
  const auto sphere = init_sphere(g, 0.5);
  CHECK(prefilter(g, sphere.sdf, 20, 0.0).size() == g.tet_count());
}

TEST_CASE("coarse-to-fine box around a small sphere") {
  const auto g = build_grid(32);
  const auto field = init_sphere(g, 0.3);
  const double cell = g.cell_edge();
  const CoarseToFine c = coarse_to_fine_filter(g, field, 500);
  for (int a = 0; a < 3; ++a) {
    CHECK(c.box_lo[a] <= -0.3);
    CHECK(c.box_lo[a] >= -0.3 - 1.5 * cell);
    CHECK(c.box_hi[a] >= 0.3);
    CHECK(c.box_hi[a] <= 0.3 + 1.5 * cell);
  }
  CHECK(!c.active.empty());
  // The render lattice is finer than the canonical one.
  CHECK(c.render.grid.cell_edge() < cell);
}

TEST_CASE("coarse-to-fine over a field active everywhere keeps the whole grid") {
  const auto g = build_grid(8);
  std::vector<double> f(g.vertex_count());
  for (std::size_t v = 0; v < f.size(); ++v) f[v] = -0.05 - 0.05 * g.rest_positions[v].x;
  const CoarseToFine c = coarse_to_fine_filter(g, make_field(g, f), 20);
  CHECK(c.first_active.size() == g.tet_count());
  CHECK(length(c.box_lo - g.lo) < 1e-15);
  CHECK(length(c.box_hi - g.hi) < 1e-15);
  const auto positive = make_field(g, std::vector<double>(g.vertex_count(), 10.0));
  CHECK_THROWS_AS(coarse_to_fine_filter(g, positive, 20), EmptyScene);
}

TEST_CASE("resampling reproduces a linear field and its transpose is exact") {
  const auto g = build_grid(6);
  std::vector<double> f(g.vertex_count());
  for (std::size_t v = 0; v < f.size(); ++v) f[v] = dot(Vec3{0.3, -0.7, 1.1}, g.rest_positions[v]) + 0.2;
  FieldState field = make_field(g, f);
  std::mt19937_64 rng(6);
  for (auto& d : field.deformation) d = testing::random_vec(rng, -0.02, 0.02);
  const ResampledGrid rg = make_resampled_grid(g, {-0.4, -0.5, -0.3}, {0.6, 0.2, 0.7});
  const FieldState r = resample_field(rg, field);
  for (std::size_t v = 0; v < r.sdf.size(); ++v)
    CHECK(r.sdf[v] == doctest::Approx(dot(Vec3{0.3, -0.7, 1.1}, rg.grid.rest_positions[v]) + 0.2));

  // <R x, y> == <x, R^T y> for the SDF and deformation maps.
  std::vector<double> y(r.sdf.size());
  std::vector<Vec3> yd(r.sdf.size());
  for (auto& v : y) v = testing::random_vec(rng).x;
  for (auto& v : yd) v = testing::random_vec(rng);
  std::vector<double> back(g.vertex_count(), 0.0);
  std::vector<Vec3> back_d(g.vertex_count());
  resample_backward(rg, y, yd, back, back_d);
  double lhs = 0, rhs = 0;
  for (std::size_t v = 0; v < y.size(); ++v) lhs += r.sdf[v] * y[v] + dot(r.deformation[v], yd[v]);
  for (std::size_t v = 0; v < back.size(); ++v) rhs += field.sdf[v] * back[v] + dot(field.deformation[v], back_d[v]);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("screen barycentrics") {
  const std::array<Vec2, 3> tri{Vec2{1, 1}, Vec2{5, 1}, Vec2{1, 7}};
  const Vec2 a = *barycentric_2d(tri, {1, 1});
  CHECK(a.x == 0.0);
  CHECK(a.y == 0.0);
  const Vec2 c = *barycentric_2d(tri, {7.0 / 3.0, 3.0});
  CHECK(c.x == doctest::Approx(1.0 / 3.0));
  CHECK(c.y == doctest::Approx(1.0 / 3.0));
  CHECK_FALSE(barycentric_2d(tri, {6, 6}).has_value());
  CHECK_FALSE(barycentric_2d(tri, {0.5, 2}).has_value());
  const std::array<Vec2, 3> flat{Vec2{0, 0}, Vec2{1, 1}, Vec2{2, 2}};
  CHECK_FALSE(barycentric_2d(flat, {1, 1}).has_value());
}

TEST_CASE("perspective correction") {
  const auto eq = perspective_correct(0.25, 0.25, 2, 2, 2);
  CHECK(eq.u == doctest::Approx(0.25));
  CHECK(eq.v == doctest::Approx(0.25));
  CHECK(eq.depth == doctest::Approx(2));
  // w = (1/3)(1/1) + (1/3)(1/2) + (1/3)(1/2) = 2/3; u = (1/6)/(2/3).
  const auto p = perspective_correct(1.0 / 3, 1.0 / 3, 1, 2, 2);
  CHECK(p.u == doctest::Approx(0.25));
  CHECK(p.v == doctest::Approx(0.25));
  CHECK(p.depth == doctest::Approx(1.5));
  const auto b = perspective_correct(1, 0, 1, 3, 5);
  CHECK(b.u == doctest::Approx(1));
  CHECK(b.v == doctest::Approx(0));
  CHECK(b.depth == doctest::Approx(3));
}

TEST_CASE("silhouette edge midpoint hits two faces at the edge interpolant") {
  // d projects inside triangle abc, so ab is a silhouette edge.
  const TetSplat flat = make_test_splat({Vec2{0, 0}, Vec2{10, 0}, Vec2{5, 10}, Vec2{5, 3}}, {2, 2, 2, 2},
                                        {0.4, -0.2, 0.9, 0.1});
  const auto hit = intersect_splat(flat, {5, 0});
  REQUIRE(hit.has_value());
  CHECK(hit->prev.f == doctest::Approx(0.1));
  CHECK(hit->next.f == doctest::Approx(0.1));
  std::set<int> faces{hit->prev.face, hit->next.face};
  CHECK(faces == std::set<int>{2, 3});

  // Depths 1 and 3 along ab: the screen midpoint sits at 3D parameter
  // (0.5/3) / (0.5/1 + 0.5/3) = 1/4 from a.
  const TetSplat persp = make_test_splat({Vec2{0, 0}, Vec2{10, 0}, Vec2{5, 10}, Vec2{5, 3}}, {1, 3, 2, 2},
                                         {0.4, -0.2, 0.9, 0.1});
  const auto h2 = intersect_splat(persp, {5, 0});
  REQUIRE(h2.has_value());
  CHECK(h2->prev.f == doctest::Approx(0.75 * 0.4 + 0.25 * -0.2));
  CHECK(h2->prev.depth == doctest::Approx(1.5));
}

TEST_CASE("interior pixel is ordered by depth and outside pixels miss") {
  const TetSplat sp = make_test_splat({Vec2{0, 0}, Vec2{10, 0}, Vec2{5, 10}, Vec2{5, 3}}, {2, 2, 2, 1},
                                      {0.3, 0.3, 0.3, -0.3});
  const auto hit = intersect_splat(sp, {5, 2});
  REQUIRE(hit.has_value());
  CHECK(hit->prev.depth < hit->next.depth);
  CHECK(hit->prev.face != 3);  // the near hit lies on a face through d
  CHECK(hit->next.face == 3);
  CHECK(hit->next.f == doctest::Approx(0.3));
  CHECK_FALSE(intersect_splat(sp, {-1, 5}).has_value());
  CHECK_FALSE(intersect_splat(sp, {9, 9}).has_value());
}

TEST_CASE("face-hit backward matches finite differences") {
  TetSplat sp = make_test_splat({Vec2{0.3, 0.1}, Vec2{10.2, 0.7}, Vec2{4.6, 9.8}, Vec2{5.1, 3.2}},
                                {1.2, 2.9, 2.1, 1.7}, {0.4, -0.2, 0.9, 0.1});
  const Vec2 px{4.7, 2.2};
  for (int face = 0; face < 4; ++face) {
    auto face_f = [&](const TetSplat& s) -> std::optional<double> {
      const int a = kFaces[face][0], b = kFaces[face][1], c = kFaces[face][2];
      const auto uv = barycentric_2d({s.proj[a], s.proj[b], s.proj[c]}, px);
      if (!uv) return std::nullopt;
      const auto pc = perspective_correct(uv->x, uv->y, s.depths[a], s.depths[b], s.depths[c]);
      return (1 - pc.u - pc.v) * s.f[a] + pc.u * s.f[b] + pc.v * s.f[c];
    };
    if (!face_f(sp)) continue;
    SplatGrad g;
    face_hit_backward(sp, face, px, 1.0, g);
    const double h = 1e-6;
    for (int k = 0; k < 4; ++k) {
      TetSplat p = sp, m = sp;
      p.f[k] += h;
      m.f[k] -= h;
      CHECK(testing::rel_error(g.d_f[k], (*face_f(p) - *face_f(m)) / (2 * h), 1e-9) < 1e-6);
      p = m = sp;
      p.depths[k] += h;
      m.depths[k] -= h;
      CHECK(testing::rel_error(g.d_depth[k], (*face_f(p) - *face_f(m)) / (2 * h), 1e-9) < 1e-6);
      for (int a = 0; a < 2; ++a) {
        p = m = sp;
        (a == 0 ? p.proj[k].x : p.proj[k].y) += h;
        (a == 0 ? m.proj[k].x : m.proj[k].y) -= h;
        const double fd = (*face_f(p) - *face_f(m)) / (2 * h);
        CHECK(testing::rel_error(a == 0 ? g.d_proj[k].x : g.d_proj[k].y, fd, 1e-9) < 1e-6);
      }
    }
  }
}

TEST_CASE("scene read-out") {
  const auto g = build_grid(6);
  const auto field = init_sphere(g, 0.5);
  const Scene scene = preprocess(g, field, 30);
  CHECK(scene.active == prefilter(g, field.sdf, 30));
  CHECK(scene.normals.size() == scene.active.size());
  CHECK(scene.degenerate_skipped == 0);
  for (std::size_t i = 0; i < scene.active.size(); ++i) {
    CHECK(scene.has_normal[i]);
    CHECK(length(scene.normals[i]) == doctest::Approx(1.0));
  }
  const Camera cam = spherical_camera(3, 20, 10, 48, 48, 40, 0.1, 10);
  const auto splats = make_splats(scene, cam);
  CHECK(!splats.empty());
  for (std::size_t i = 1; i < splats.size(); ++i) CHECK(splats[i - 1].scene_index < splats[i].scene_index);
  CHECK_THROWS_AS(make_scene(g, field, 0.0, scene.active), InvalidArgument);
}

}  // TEST_SUITE
