#include <doctest.h>

#include "helpers.hpp"
#include "tetsplat/camera.hpp"
#include "tetsplat/errors.hpp"

using namespace tetsplat;

TEST_SUITE("camera") {

TEST_CASE("optical axis projects to the image center") {
  const Camera c = look_at({0, -4, 0}, {0, 0, 0}, 64, 48, 40, 0.1, 10);
  const Projection p = project(c, {0, -1.5, 0});
  CHECK(p.pixel.x == doctest::Approx(32));
  CHECK(p.pixel.y == doctest::Approx(24));
  CHECK(p.depth == doctest::Approx(2.5));
  CHECK_FALSE(p.behind_near);
}

TEST_CASE("camera-space construction inverts the pinhole") {
  const Camera c = spherical_camera(3, 40, 20, 80, 60, 50, 0.1, 10);
  const double z = 2.7, px = 13.25, py = 51.5;
  const Vec3 cam{z * (px - c.cx()) / c.focal, z * (py - c.cy()) / c.focal, z};
  const Vec2 q = project_camera_space(c, cam);
  CHECK(q.x == doctest::Approx(px));
  CHECK(q.y == doctest::Approx(py));
}

TEST_CASE("points closer than near are flagged") {
  const Camera c = look_at({0, 0, -3}, {0, 0, 0}, 32, 32, 40, 0.2, 10);
  CHECK(project(c, {0, 0, -3 + 0.1}).behind_near);
  CHECK_FALSE(project(c, {0, 0, -3 + 0.3}).behind_near);
}

TEST_CASE("unproject round trip") {
  const Camera c = spherical_camera(3, 110, -25, 64, 64, 40, 0.1, 10);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 64), d(0.5, 8);
  for (int i = 0; i < 100; ++i) {
    const Vec2 px{u(rng), u(rng)};
    const double depth = d(rng);
    const Projection p = project(c, unproject(c, px, depth));
    CHECK(std::abs(p.pixel.x - px.x) < 1e-6);
    CHECK(std::abs(p.pixel.y - px.y) < 1e-6);
    CHECK(p.depth == doctest::Approx(depth));
  }
}

TEST_CASE("culling") {
  const Camera c = look_at({0, 0, -3}, {0, 0, 0}, 64, 64, 40, 0.1, 10);
  const std::array<Vec2, 4> inside{Vec2{10, 10}, Vec2{20, 10}, Vec2{10, 20}, Vec2{15, 15}};
  CHECK_FALSE(cull_tet(c, inside, {2, 2.5, 3, 3.5}));
  CHECK(cull_tet(c, inside, {11, 12, 13, 14}));
  CHECK(cull_tet(c, inside, {0.05, 2, 2, 2}));
  const std::array<Vec2, 4> left{Vec2{-10, 10}, Vec2{-2, 10}, Vec2{-5, 20}, Vec2{-1, 15}};
  CHECK(cull_tet(c, left, {2, 2, 2, 2}));
}

TEST_CASE("orbit poses") {
  OrbitSpec spec;
  spec.elevation_min_deg = spec.elevation_max_deg = 0;
  const Camera c0 = orbit_camera(0, 8, spec);
  CHECK(length(c0.position() - Vec3{3, 0, 0}) < 1e-12);
  const Projection origin = project(c0, {0, 0, 0});
  CHECK(origin.pixel.x == doctest::Approx(c0.cx()));
  CHECK(origin.pixel.y == doctest::Approx(c0.cy()));
  CHECK(origin.depth == doctest::Approx(3));

  const OrbitSpec def;
  for (int i = 0; i < 20; ++i) {
    const Camera c = orbit_camera(i, 7, def);
    CHECK(length(c.position()) == doctest::Approx(def.radius));
    const Camera d = orbit_camera(i + 7, 7, def);
    CHECK(length(c.position() - d.position()) < 1e-12);
  }
}

TEST_CASE("world z is up in the image") {
  const Camera c = spherical_camera(3, 0, 0, 64, 64, 40, 0.1, 10);
  CHECK(project(c, {0, 0, 0.5}).pixel.y < c.cy());
}

TEST_CASE("radical inverse") {
  CHECK(radical_inverse2(0) == 0.0);
  CHECK(radical_inverse2(1) == 0.5);
  CHECK(radical_inverse2(2) == 0.25);
  CHECK(radical_inverse2(3) == 0.75);
  CHECK(radical_inverse2(6) == 0.375);
}

TEST_CASE("invalid cameras are rejected") {
  Camera c = look_at({0, 0, -3}, {0, 0, 0}, 64, 64, 40, 0.1, 10);
  c.near = 5;
  c.far = 1;
  CHECK_THROWS_AS(validate(c), InvalidArgument);
  CHECK_THROWS_AS(look_at({0, 0, -3}, {0, 0, 0}, 0, 64, 40, 0.1, 10), InvalidArgument);
}

}  // TEST_SUITE
