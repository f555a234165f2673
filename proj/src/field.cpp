#include "tetsplat/field.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "tetsplat/errors.hpp"

namespace tetsplat {

Vec3 deformation_limit(const TetrahedralGrid& grid) { return kDeformationFraction * grid.cell_size(); }

FieldState make_field(const TetrahedralGrid& grid, std::vector<double> sdf) {
  if (sdf.size() != grid.vertex_count()) throw InvalidArgument("make_field: sdf size mismatch");
  FieldState f;
  f.sdf = std::move(sdf);
  f.deformation.assign(grid.vertex_count(), Vec3{});
  f.deformation_limit = deformation_limit(grid);
  return f;
}

FieldState init_sphere(const TetrahedralGrid& grid, double radius) {
  if (!(radius > 0 && radius < 1)) throw InvalidArgument("init_sphere: radius must lie in (0, 1)");
  std::vector<double> sdf(grid.vertex_count());
  for (std::size_t v = 0; v < sdf.size(); ++v) sdf[v] = length(grid.rest_positions[v]) - radius;
  return make_field(grid, std::move(sdf));
}

void clamp_deformation(FieldState& field) {
  const Vec3& lim = field.deformation_limit;
  for (Vec3& d : field.deformation)
    for (int a = 0; a < 3; ++a) d[a] = std::clamp(d[a], -lim[a], lim[a]);
}

std::vector<Vec3> deformed_positions(const TetrahedralGrid& grid, const FieldState& field) {
  if (field.deformation.size() != grid.vertex_count())
    throw InvalidArgument("deformed_positions: field does not match grid");
  std::vector<Vec3> out(grid.vertex_count());
  for (std::size_t v = 0; v < out.size(); ++v) out[v] = grid.rest_positions[v] + field.deformation[v];
  return out;
}

Vec3 tet_sdf_gradient(const std::array<Vec3, 4>& p, const std::array<double, 4>& f) {
  if (std::abs(signed_volume(p[0], p[1], p[2], p[3])) <= kDegenerateVolume)
    throw DegenerateTet("tet_sdf_gradient: degenerate tetrahedron");
  // Gauss-Jordan on [M | I] with rows [x y z 1].
  double a[4][8];
  for (int r = 0; r < 4; ++r) {
    a[r][0] = p[r].x;
    a[r][1] = p[r].y;
    a[r][2] = p[r].z;
    a[r][3] = 1.0;
    for (int c = 0; c < 4; ++c) a[r][4 + c] = r == c ? 1.0 : 0.0;
  }
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (a[piv][col] == 0.0) throw DegenerateTet("tet_sdf_gradient: singular system");
    if (piv != col)
      for (int c = 0; c < 8; ++c) std::swap(a[piv][c], a[col][c]);
    const double inv = 1.0 / a[col][col];
    for (int c = 0; c < 8; ++c) a[col][c] *= inv;
    for (int r = 0; r < 4; ++r) {
      if (r == col || a[r][col] == 0.0) continue;
      const double m = a[r][col];
      for (int c = 0; c < 8; ++c) a[r][c] -= m * a[col][c];
    }
  }
  Vec3 g;
  for (int r = 0; r < 3; ++r) {
    double s = 0;
    for (int c = 0; c < 4; ++c) s += a[r][4 + c] * f[c];
    g[r] = s;
  }
  return g;
}

std::optional<Vec3> linear_gradient(const std::array<Vec3, 4>& p, const std::array<double, 4>& f) {
  const Vec3 e1 = p[1] - p[0], e2 = p[2] - p[0], e3 = p[3] - p[0];
  const Vec3 c1 = cross(e2, e3);
  const double det = dot(e1, c1);
  if (std::abs(det) <= 6.0 * kDegenerateVolume) return std::nullopt;
  return ((f[1] - f[0]) * c1 + (f[2] - f[0]) * cross(e3, e1) + (f[3] - f[0]) * cross(e1, e2)) / det;
}

void linear_gradient_backward(const std::array<Vec3, 4>& p, const Vec3& g, const Vec3& d_g,
                              std::array<double, 4>& d_f, std::array<Vec3, 4>& d_p) {
  const Vec3 e1 = p[1] - p[0], e2 = p[2] - p[0], e3 = p[3] - p[0];
  const Vec3 c1 = cross(e2, e3);
  const double det = dot(e1, c1);
  // w = E^{-1} dL/dg, rows of E^{-1} are the cofactor vectors over det.
  const double w[3] = {dot(c1, d_g) / det, dot(cross(e3, e1), d_g) / det,
                       dot(cross(e1, e2), d_g) / det};
  for (int i = 0; i < 3; ++i) {
    d_f[i + 1] += w[i];
    d_f[0] -= w[i];
    d_p[i + 1] -= w[i] * g;
    d_p[0] += w[i] * g;
  }
}

std::optional<Vec3> tet_normal(const Vec3& g) {
  const double len = length(g);
  if (!(len >= kNormalEpsilon)) return std::nullopt;
  return g / len;
}

AnalyticShape AnalyticShape::sphere(double radius, Vec3 center) {
  return {ShapeKind::sphere, {radius, 0, 0}, center};
}

AnalyticShape AnalyticShape::torus(double major, double minor, Vec3 center) {
  return {ShapeKind::torus, {major, minor, 0}, center};
}

AnalyticShape AnalyticShape::box(Vec3 half_extents, Vec3 center) {
  return {ShapeKind::box, {half_extents.x, half_extents.y, half_extents.z}, center};
}

void validate(const AnalyticShape& shape) {
  Vec3 half;
  switch (shape.kind) {
    case ShapeKind::sphere:
      if (!(shape.params[0] > 0)) throw InvalidArgument("sphere radius must be positive");
      half = {shape.params[0], shape.params[0], shape.params[0]};
      break;
    case ShapeKind::torus:
      if (!(shape.params[0] > 0 && shape.params[1] > 0))
        throw InvalidArgument("torus radii must be positive");
      if (!(shape.params[1] < shape.params[0]))
        throw InvalidArgument("torus minor radius must be below the major radius");
      half = {shape.params[0] + shape.params[1], shape.params[0] + shape.params[1], shape.params[1]};
      break;
    case ShapeKind::box:
      if (!(shape.params[0] > 0 && shape.params[1] > 0 && shape.params[2] > 0))
        throw InvalidArgument("box half extents must be positive");
      half = {shape.params[0], shape.params[1], shape.params[2]};
      break;
  }
  for (int a = 0; a < 3; ++a)
    if (std::abs(shape.center[a]) + half[a] > 0.9 + 1e-12)
      throw InvalidArgument("shape must stay inside [-0.9, 0.9]^3");
}

double analytic_sdf(const AnalyticShape& shape, const Vec3& point) {
  const Vec3 p = point - shape.center;
  switch (shape.kind) {
    case ShapeKind::sphere:
      return length(p) - shape.params[0];
    case ShapeKind::torus: {
      const double ring = std::hypot(p.x, p.y) - shape.params[0];
      return std::hypot(ring, p.z) - shape.params[1];
    }
    case ShapeKind::box: {
      const Vec3 q{std::abs(p.x) - shape.params[0], std::abs(p.y) - shape.params[1],
                   std::abs(p.z) - shape.params[2]};
      const Vec3 outside = vmax(q, Vec3{});
      return length(outside) + std::min(std::max({q.x, q.y, q.z}), 0.0);
    }
  }
  return 0;
}

Vec3 analytic_gradient(const AnalyticShape& shape, const Vec3& p, double h) {
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 lo = p, hi = p;
    lo[a] -= h;
    hi[a] += h;
    g[a] = (analytic_sdf(shape, hi) - analytic_sdf(shape, lo)) / (2 * h);
  }
  return g;
}

FieldState init_from_shape(const TetrahedralGrid& grid, const AnalyticShape& shape) {
  std::vector<double> sdf(grid.vertex_count());
  for (std::size_t v = 0; v < sdf.size(); ++v) sdf[v] = analytic_sdf(shape, grid.rest_positions[v]);
  return make_field(grid, std::move(sdf));
}

namespace {

template <class T>
void put(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.write(buf, sizeof(T));
}

template <class T>
T get(std::istream& in) {
  char buf[sizeof(T)];
  if (!in.read(buf, sizeof(T))) throw IoError("checkpoint truncated");
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

constexpr char kMagic[4] = {'T', 'S', 'P', 'F'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void write_checkpoint(const FieldState& field, std::ostream& out) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, field.sdf.size());
  for (double f : field.sdf) put(out, f);
  for (const Vec3& d : field.deformation) {
    put(out, d.x);
    put(out, d.y);
    put(out, d.z);
  }
  put(out, field.steepness);
}

void save_checkpoint(const FieldState& field, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(field, out);
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

FieldState read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError("not a TSPF checkpoint");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto n = get<std::uint64_t>(in);
  if (n > (1ull << 32)) throw IoError("checkpoint vertex count out of range");
  FieldState field;
  field.sdf.resize(n);
  field.deformation.resize(n);
  for (auto& f : field.sdf) f = get<double>(in);
  for (auto& d : field.deformation) {
    d.x = get<double>(in);
    d.y = get<double>(in);
    d.z = get<double>(in);
  }
  field.steepness = get<double>(in);
  return field;
}

FieldState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

int resolution_for_vertex_count(std::size_t vertex_count) {
  const int r = static_cast<int>(std::llround(std::cbrt(static_cast<double>(vertex_count)))) - 1;
  for (int c = std::max(r - 1, 1); c <= r + 1; ++c)
    if (static_cast<std::size_t>(c + 1) * (c + 1) * (c + 1) == vertex_count) return c;
  return 0;
}

}  // namespace tetsplat
