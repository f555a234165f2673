#include "tetsplat/tetgrid.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>

#include "tetsplat/errors.hpp"
#include "tetsplat/parallel.hpp"

namespace tetsplat {
namespace {

// Axis orders of the six Kuhn simplices. Simplex p walks from corner 000 to
// corner 111 along axes perm[p][0], perm[p][1], perm[p][2]; it is the region
// u[perm0] >= u[perm1] >= u[perm2] of the unit cube.
constexpr int kPerms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};

// Corner bit masks (bit a set = +1 along axis a) of the path vertices.
std::array<int, 4> kuhn_corners(int p) {
  const int b0 = 1 << kPerms[p][0];
  const int b1 = b0 | (1 << kPerms[p][1]);
  return {0, b0, b1, 7};
}

// Even permutations give positive volume with path order; odd ones need the
// last two vertices swapped.
bool kuhn_is_odd(int p) { return p == 1 || p == 2 || p == 5; }

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

}  // namespace

double TetrahedralGrid::cell_edge() const {
  const Vec3 c = cell_size();
  return std::min({c.x, c.y, c.z});
}

TetrahedralGrid build_grid(int resolution) { return build_grid(resolution, {-1, -1, -1}, {1, 1, 1}); }

TetrahedralGrid build_grid(int resolution, const Vec3& lo, const Vec3& hi) {
  if (resolution < 1) throw InvalidArgument("build_grid: resolution must be >= 1");
  if (!(hi.x > lo.x && hi.y > lo.y && hi.z > lo.z))
    throw InvalidArgument("build_grid: empty box");
  TetrahedralGrid g;
  g.resolution = resolution;
  g.lo = lo;
  g.hi = hi;
  const int n = resolution + 1;
  const Vec3 cell = g.cell_size();
  g.rest_positions.resize(static_cast<std::size_t>(n) * n * n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        g.rest_positions[g.vertex_index(i, j, k)] =
            Vec3{i == resolution ? hi.x : lo.x + i * cell.x,
                 j == resolution ? hi.y : lo.y + j * cell.y,
                 k == resolution ? hi.z : lo.z + k * cell.z};

  g.tets.reserve(static_cast<std::size_t>(6) * resolution * resolution * resolution);
  for (int k = 0; k < resolution; ++k)
    for (int j = 0; j < resolution; ++j)
      for (int i = 0; i < resolution; ++i)
        for (int p = 0; p < 6; ++p) {
          Tet t;
          const auto corners = kuhn_corners(p);
          for (int c = 0; c < 4; ++c) {
            const int m = corners[c];
            t[c] = g.vertex_index(i + (m & 1), j + ((m >> 1) & 1), k + ((m >> 2) & 1));
          }
          if (kuhn_is_odd(p)) std::swap(t[2], t[3]);
          g.tets.push_back(t);
        }

  // Kuhn edges join corners whose bit sets are nested: from every vertex,
  // the seven offsets in {0,1}^3 \ {0}.
  g.edges.reserve(static_cast<std::size_t>(7) * n * n * n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        for (int m = 1; m < 8; ++m) {
          const int i2 = i + (m & 1), j2 = j + ((m >> 1) & 1), k2 = k + ((m >> 2) & 1);
          if (i2 > resolution || j2 > resolution || k2 > resolution) continue;
          g.edges.push_back({g.vertex_index(i, j, k), g.vertex_index(i2, j2, k2)});
        }
  std::sort(g.edges.begin(), g.edges.end());

  g.incidence_offsets.assign(g.rest_positions.size() + 1, 0);
  for (const Tet& t : g.tets)
    for (int v : t) ++g.incidence_offsets[v + 1];
  for (std::size_t v = 0; v < g.rest_positions.size(); ++v)
    g.incidence_offsets[v + 1] += g.incidence_offsets[v];
  g.incidence.resize(g.tets.size() * 4);
  std::vector<int> fill(g.incidence_offsets.begin(), g.incidence_offsets.end() - 1);
  for (std::size_t t = 0; t < g.tets.size(); ++t)
    for (int v : g.tets[t]) g.incidence[fill[v]++] = static_cast<int>(t);
  return g;
}

GridSample locate(const TetrahedralGrid& grid, const Vec3& point) {
  const int r = grid.resolution;
  const Vec3 cell = grid.cell_size();
  int idx[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    const double t = std::clamp((point[a] - grid.lo[a]) / cell[a], 0.0, static_cast<double>(r));
    idx[a] = std::min(static_cast<int>(std::floor(t)), r - 1);
    frac[a] = t - idx[a];
  }
  int p = 0;
  for (; p < 6; ++p)
    if (frac[kPerms[p][0]] >= frac[kPerms[p][1]] && frac[kPerms[p][1]] >= frac[kPerms[p][2]]) break;
  const double u0 = frac[kPerms[p][0]], u1 = frac[kPerms[p][1]], u2 = frac[kPerms[p][2]];
  GridSample s;
  s.tet = ((idx[2] * r + idx[1]) * r + idx[0]) * 6 + p;
  const auto corners = kuhn_corners(p);
  const double w[4] = {1.0 - u0, u0 - u1, u1 - u2, u2};
  for (int c = 0; c < 4; ++c) {
    const int m = corners[c];
    s.vertices[c] = grid.vertex_index(idx[0] + (m & 1), idx[1] + ((m >> 1) & 1), idx[2] + ((m >> 2) & 1));
    s.weights[c] = w[c];
  }
  return s;
}

MarchingTetsResult marching_tetrahedra_detailed(const TetrahedralGrid& grid,
                                               std::span<const Vec3> positions,
                                               std::span<const double> sdf) {
  if (positions.size() != grid.vertex_count() || sdf.size() != grid.vertex_count())
    throw InvalidArgument("marching_tetrahedra: field size does not match grid");

  const std::size_t nt = grid.tet_count();
  std::vector<unsigned char> crossing(nt, 0);
  parallel_for(nt, 1 << 14, [&](std::size_t b, std::size_t e) {
    for (std::size_t t = b; t < e; ++t) {
      int neg = 0;
      for (int v : grid.tets[t]) neg += sdf[v] < 0;
      crossing[t] = neg != 0 && neg != 4;
    }
  });

  MarchingTetsResult out;
  std::unordered_map<std::uint64_t, int> lookup;

  // Crossing point on edge (a, b) with f[a] < 0 <= f[b].
  auto crossing_vertex = [&](int a, int b) -> int {
    const bool on_vertex = sdf[b] == 0.0;
    const std::uint64_t key = on_vertex ? edge_key(b, b) : edge_key(a, b);
    auto [it, inserted] = lookup.try_emplace(key, static_cast<int>(out.mesh.vertices.size()));
    if (inserted) {
      if (on_vertex) {
        out.mesh.vertices.push_back(positions[b]);
        out.vertex_edges.push_back({b, b});
      } else {
        int v1 = std::min(a, b), v2 = std::max(a, b);
        const double f1 = sdf[v1], f2 = sdf[v2];
        out.mesh.vertices.push_back((f2 * positions[v1] - f1 * positions[v2]) / (f2 - f1));
        out.vertex_edges.push_back({v1, v2});
      }
    }
    return it->second;
  };

  auto emit = [&](const Tet& t, int i0, int i1, int i2) {
    if (i0 == i1 || i1 == i2 || i0 == i2) return;
    const Vec3 e1 = positions[t[1]] - positions[t[0]];
    const Vec3 e2 = positions[t[2]] - positions[t[0]];
    const Vec3 e3 = positions[t[3]] - positions[t[0]];
    const double f0 = sdf[t[0]];
    // Unnormalized field gradient (scaled by the positive-volume determinant).
    const Vec3 g = (sdf[t[1]] - f0) * cross(e2, e3) + (sdf[t[2]] - f0) * cross(e3, e1) +
                   (sdf[t[3]] - f0) * cross(e1, e2);
    const Vec3& p0 = out.mesh.vertices[i0];
    const Vec3 n = cross(out.mesh.vertices[i1] - p0, out.mesh.vertices[i2] - p0);
    const double orient = dot(cross(e1, e2), e3);
    if (dot(n, g) * orient < 0) std::swap(i1, i2);
    out.mesh.triangles.push_back({i0, i1, i2});
  };

  for (std::size_t ti = 0; ti < nt; ++ti) {
    if (!crossing[ti]) continue;
    const Tet& t = grid.tets[ti];
    int neg[4], pos[4], nn = 0, np = 0;
    for (int v : t) {
      if (sdf[v] < 0) neg[nn++] = v;
      else pos[np++] = v;
    }
    if (nn == 1) {
      emit(t, crossing_vertex(neg[0], pos[0]), crossing_vertex(neg[0], pos[1]),
           crossing_vertex(neg[0], pos[2]));
    } else if (nn == 3) {
      emit(t, crossing_vertex(neg[0], pos[0]), crossing_vertex(neg[1], pos[0]),
           crossing_vertex(neg[2], pos[0]));
    } else {
      const int a = neg[0], b = neg[1], c = pos[0], d = pos[1];
      const int ac = crossing_vertex(a, c), ad = crossing_vertex(a, d);
      const int bd = crossing_vertex(b, d), bc = crossing_vertex(b, c);
      const auto& vs = out.mesh.vertices;
      const Vec3 d1 = vs[ac] - vs[bd], d2 = vs[ad] - vs[bc];
      const double l1 = dot(d1, d1), l2 = dot(d2, d2);
      bool use_first;
      if (l1 != l2) {
        use_first = l1 < l2;
      } else {
        auto key_of = [&](int m) { return edge_key(out.vertex_edges[m][0], out.vertex_edges[m][1]); };
        use_first = std::min(key_of(ac), key_of(bd)) <= std::min(key_of(ad), key_of(bc));
      }
      if (use_first) {
        emit(t, ac, ad, bd);
        emit(t, ac, bd, bc);
      } else {
        emit(t, ad, bd, bc);
        emit(t, ad, bc, ac);
      }
    }
  }
  return out;
}

MeshTopology mesh_topology(const TriangleMesh& mesh) {
  std::unordered_map<std::uint64_t, int> uses;
  uses.reserve(mesh.triangles.size() * 2);
  std::vector<unsigned char> referenced(mesh.vertices.size(), 0);
  for (const auto& tri : mesh.triangles)
    for (int e = 0; e < 3; ++e) {
      ++uses[edge_key(tri[e], tri[(e + 1) % 3])];
      referenced[tri[e]] = 1;
    }
  MeshTopology topo;
  topo.vertices = static_cast<std::size_t>(std::count(referenced.begin(), referenced.end(), 1));
  topo.edges = uses.size();
  topo.faces = mesh.triangles.size();
  for (const auto& [key, count] : uses) {
    if (count == 1) ++topo.boundary_edges;
    if (count > 2) ++topo.nonmanifold_edges;
  }
  return topo;
}

double triangle_area(const TriangleMesh& mesh, std::size_t tri) {
  const auto& t = mesh.triangles[tri];
  const Vec3& a = mesh.vertices[t[0]];
  return 0.5 * length(cross(mesh.vertices[t[1]] - a, mesh.vertices[t[2]] - a));
}

void write_obj(const TriangleMesh& mesh, std::ostream& out) {
  char buf[128];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", v.x, v.y, v.z);
    out << buf;
  }
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

void export_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_obj(mesh, out);
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

TriangleMesh read_obj(std::istream& in) {
  TriangleMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3 v;
      ls >> v.x >> v.y >> v.z;
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<int, 3> t{};
      for (int& i : t) {
        std::string tok;
        ls >> tok;
        i = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      mesh.triangles.push_back(t);
    }
    if (ls.fail()) throw IoError("malformed OBJ line: " + line);
  }
  return mesh;
}

TriangleMesh import_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_obj(in);
}

}  // namespace tetsplat
