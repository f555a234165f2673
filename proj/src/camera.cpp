#include "tetsplat/camera.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tetsplat/errors.hpp"

namespace tetsplat {

void validate(const Camera& c) {
  if (c.width < 1 || c.height < 1) throw InvalidArgument("camera size must be positive");
  if (!(c.focal > 0)) throw InvalidArgument("camera focal length must be positive");
  if (!(c.near > 0 && c.near < c.far)) throw InvalidArgument("camera requires 0 < near < far");
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double d = dot(c.rotation.row(i), c.rotation.row(j)) - (i == j ? 1.0 : 0.0);
      if (std::abs(d) > 1e-9) throw InvalidArgument("camera rotation is not orthonormal");
    }
}

Vec2 project_camera_space(const Camera& c, const Vec3& p) {
  return {c.focal * p.x / p.z + c.cx(), c.focal * p.y / p.z + c.cy()};
}

Projection project(const Camera& camera, const Vec3& world) {
  const Vec3 p = camera.to_camera(world);
  Projection out;
  out.depth = p.z;
  out.behind_near = p.z <= camera.near;
  if (p.z > 0) out.pixel = project_camera_space(camera, p);
  return out;
}

Vec3 unproject(const Camera& c, const Vec2& pixel, double depth) {
  const Vec3 cam{(pixel.x - c.cx()) * depth / c.focal, (pixel.y - c.cy()) * depth / c.focal, depth};
  return transpose_mul(c.rotation, cam - c.translation);
}

bool cull_tet(const Camera& c, const std::array<Vec2, 4>& px, const std::array<double, 4>& z) {
  bool all_far = true;
  for (double d : z) {
    if (!(d > c.near)) return true;
    all_far = all_far && d > c.far;
  }
  if (all_far) return true;
  double xmin = px[0].x, xmax = px[0].x, ymin = px[0].y, ymax = px[0].y;
  for (int i = 1; i < 4; ++i) {
    xmin = std::min(xmin, px[i].x);
    xmax = std::max(xmax, px[i].x);
    ymin = std::min(ymin, px[i].y);
    ymax = std::max(ymax, px[i].y);
  }
  return xmax < 0 || ymax < 0 || xmin > c.width || ymin > c.height;
}

Camera look_at(const Vec3& position, const Vec3& target, int width, int height, double fov_deg,
               double near, double far) {
  const Vec3 forward = normalize(target - position);
  Vec3 up{0, 0, 1};
  if (std::abs(dot(forward, up)) > 1 - 1e-9) up = {0, 1, 0};
  const Vec3 right = normalize(cross(forward, up));
  const Vec3 down = cross(forward, right);
  Camera c;
  c.width = width;
  c.height = height;
  c.focal = 0.5 * height / std::tan(0.5 * fov_deg * std::numbers::pi / 180.0);
  for (int a = 0; a < 3; ++a) {
    c.rotation(0, a) = right[a];
    c.rotation(1, a) = down[a];
    c.rotation(2, a) = forward[a];
  }
  c.translation = -(c.rotation * position);
  c.near = near;
  c.far = far;
  validate(c);
  return c;
}

double radical_inverse2(unsigned index) {
  double result = 0, scale = 0.5;
  while (index) {
    if (index & 1u) result += scale;
    scale *= 0.5;
    index >>= 1;
  }
  return result;
}

Camera spherical_camera(double radius, double azimuth_deg, double elevation_deg, int width, int height,
                        double fov_deg, double near, double far) {
  const double az = azimuth_deg * std::numbers::pi / 180.0;
  const double el = elevation_deg * std::numbers::pi / 180.0;
  const Vec3 pos{radius * std::cos(el) * std::cos(az), radius * std::cos(el) * std::sin(az),
                 radius * std::sin(el)};
  return look_at(pos, {0, 0, 0}, width, height, fov_deg, near, far);
}

Camera orbit_camera(int index, int count, const OrbitSpec& spec) {
  if (count < 1) throw InvalidArgument("orbit_camera: count must be >= 1");
  const int k = ((index % count) + count) % count;
  const double azimuth = 360.0 * k / count;
  const double elevation = spec.elevation_min_deg +
                           (spec.elevation_max_deg - spec.elevation_min_deg) * radical_inverse2(k);
  return spherical_camera(spec.radius, azimuth, elevation, spec.width, spec.height, spec.fov_deg,
                          spec.near, spec.far);
}

}  // namespace tetsplat
