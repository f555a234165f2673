#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "tetsplat/math.hpp"

namespace tetsplat {

using Tet = std::array<int, 4>;
using Edge = std::array<int, 2>;

// Structured tetrahedral lattice: (R+1)^3 vertices on an axis-aligned box,
// each of the R^3 cubes split into 6 Kuhn tetrahedra sharing the cube's main
// diagonal. Immutable after construction.
struct TetrahedralGrid {
  int resolution = 0;
  Vec3 lo{-1, -1, -1};
  Vec3 hi{1, 1, 1};
  std::vector<Vec3> rest_positions;
  std::vector<Tet> tets;             // positively oriented
  std::vector<Edge> edges;           // unique, first < second
  std::vector<int> incidence_offsets;  // CSR over vertices, size N+1
  std::vector<int> incidence;          // tet indices

  std::size_t vertex_count() const { return rest_positions.size(); }
  std::size_t tet_count() const { return tets.size(); }
  Vec3 cell_size() const { return (hi - lo) / static_cast<double>(resolution); }
  // Smallest cell edge.
  double cell_edge() const;
  int vertex_index(int i, int j, int k) const {
    return i + (resolution + 1) * (j + (resolution + 1) * k);
  }
  std::span<const int> incident_tets(int v) const {
    return {incidence.data() + incidence_offsets[v],
            static_cast<std::size_t>(incidence_offsets[v + 1] - incidence_offsets[v])};
  }
};

// Canonical grid over [-1,1]^3. Throws InvalidArgument for resolution < 1.
TetrahedralGrid build_grid(int resolution);

// Same connectivity, rest positions mapped onto the box [lo, hi].
TetrahedralGrid build_grid(int resolution, const Vec3& lo, const Vec3& hi);

// A point expressed as a convex combination of grid vertices.
struct GridSample {
  int tet = -1;
  std::array<int, 4> vertices{};
  std::array<double, 4> weights{};
};

// Locates a point in the undeformed lattice (points outside are clamped to
// the box). The weights reproduce the point from rest positions.
GridSample locate(const TetrahedralGrid& grid, const Vec3& point);

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  bool empty() const { return triangles.empty(); }
};

struct MarchingTetsResult {
  TriangleMesh mesh;
  // Grid edge each mesh vertex was interpolated on. For a crossing that
  // lands exactly on a grid vertex (f == 0) both entries hold that vertex.
  std::vector<Edge> vertex_edges;
};

// Marching Tetrahedra over the piecewise-linear field. f == 0 counts as
// positive. Triangles are wound so their normal follows the field gradient.
MarchingTetsResult marching_tetrahedra_detailed(const TetrahedralGrid& grid,
                                               std::span<const Vec3> positions,
                                               std::span<const double> sdf);

inline TriangleMesh marching_tetrahedra(const TetrahedralGrid& grid,
                                        std::span<const Vec3> positions,
                                        std::span<const double> sdf) {
  return marching_tetrahedra_detailed(grid, positions, sdf).mesh;
}

// Topology summary used by the watertightness and genus checks.
struct MeshTopology {
  std::size_t vertices = 0;
  std::size_t edges = 0;
  std::size_t faces = 0;
  std::size_t boundary_edges = 0;      // used by one triangle
  std::size_t nonmanifold_edges = 0;   // used by more than two
  long euler_characteristic() const {
    return static_cast<long>(vertices) - static_cast<long>(edges) + static_cast<long>(faces);
  }
  bool watertight() const { return boundary_edges == 0 && nonmanifold_edges == 0; }
};

MeshTopology mesh_topology(const TriangleMesh& mesh);

double triangle_area(const TriangleMesh& mesh, std::size_t tri);

// Wavefront OBJ: `v` records then `f` records, 1-based, 9 significant digits.
void write_obj(const TriangleMesh& mesh, std::ostream& out);
void export_obj(const TriangleMesh& mesh, const std::filesystem::path& path);
TriangleMesh read_obj(std::istream& in);
TriangleMesh import_obj(const std::filesystem::path& path);

}  // namespace tetsplat
