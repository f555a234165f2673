#pragma once

#include <array>

#include "tetsplat/math.hpp"

namespace tetsplat {

// Pinhole camera, square pixels, principal point at the image center.
// Camera space: +z forward, +x right, +y down (image rows).
struct Camera {
  int width = 64;
  int height = 64;
  double focal = 64;  // pixels, fx == fy
  Mat3 rotation;      // world -> camera
  Vec3 translation;   // world -> camera
  double near = 0.1;
  double far = 100;

  double cx() const { return 0.5 * width; }
  double cy() const { return 0.5 * height; }
  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  Vec3 position() const { return -transpose_mul(rotation, translation); }
};

// Throws InvalidArgument when the invariants (0 < near < far, orthonormal
// rotation, positive size and focal) do not hold.
void validate(const Camera& camera);

struct Projection {
  Vec2 pixel;
  double depth = 0;
  bool behind_near = false;
};

Projection project(const Camera& camera, const Vec3& world);
Vec2 project_camera_space(const Camera& camera, const Vec3& cam);
Vec3 unproject(const Camera& camera, const Vec2& pixel, double depth);

// Conservative frustum test on a projected tet. Any vertex at or behind the
// near plane culls the whole tet (no clipping).
bool cull_tet(const Camera& camera, const std::array<Vec2, 4>& pixels,
              const std::array<double, 4>& depths);

// Camera at `position` looking at `target`, world +z up.
Camera look_at(const Vec3& position, const Vec3& target, int width, int height, double fov_deg,
               double near, double far);

// Orbit pose around the origin: azimuth 2*pi*index/count, elevation from a
// base-2 radical inverse of (index mod count) spread over
// [elevation_min, elevation_max] degrees.
struct OrbitSpec {
  double radius = 3.0;
  double elevation_min_deg = -30;
  double elevation_max_deg = 60;
  double fov_deg = 40;
  int width = 64;
  int height = 64;
  double near = 0.1;
  double far = 10;
};

Camera orbit_camera(int index, int count, const OrbitSpec& spec);

// Explicit pose as in the camera JSON schema.
Camera spherical_camera(double radius, double azimuth_deg, double elevation_deg, int width, int height,
                        double fov_deg, double near, double far);

double radical_inverse2(unsigned index);

}  // namespace tetsplat
