#include "tetsplat/losses.hpp"

#include <cmath>

#include "tetsplat/errors.hpp"
#include "tetsplat/parallel.hpp"

namespace tetsplat {
namespace {

struct TetGrad {
  std::array<double, 4> d_f{};
  std::array<Vec3, 4> d_p;
};

std::array<Vec3, 4> tet_points(const TetrahedralGrid& grid, std::span<const Vec3> pos, int t) {
  const Tet& tet = grid.tets[t];
  return {pos[tet[0]], pos[tet[1]], pos[tet[2]], pos[tet[3]]};
}

std::array<double, 4> tet_values(const TetrahedralGrid& grid, std::span<const double> sdf, int t) {
  const Tet& tet = grid.tets[t];
  return {sdf[tet[0]], sdf[tet[1]], sdf[tet[2]], sdf[tet[3]]};
}

void scatter(const TetrahedralGrid& grid, std::span<const int> tets, const std::vector<TetGrad>& per_tet,
             GradientBuffers& out) {
  for (std::size_t i = 0; i < tets.size(); ++i) {
    const Tet& tet = grid.tets[tets[i]];
    for (int k = 0; k < 4; ++k) {
      out.d_sdf[tet[k]] += per_tet[i].d_f[k];
      out.d_deform[tet[k]] += per_tet[i].d_p[k];
    }
  }
}

constexpr std::size_t kGrain = 1 << 14;

}  // namespace

RegularizerResult eikonal_loss(const TetrahedralGrid& grid, const FieldState& field, std::span<const int> tets) {
  RegularizerResult out;
  out.grad = GradientBuffers(grid.vertex_count());
  const auto pos = deformed_positions(grid, field);
  std::vector<TetGrad> per_tet(tets.size());
  std::vector<double> partial(chunk_count(tets.size(), kGrain), 0.0);
  parallel_for(tets.size(), kGrain, [&](std::size_t b, std::size_t e) {
    double sum = 0;
    for (std::size_t i = b; i < e; ++i) {
      const auto p = tet_points(grid, pos, tets[i]);
      const auto g = linear_gradient(p, tet_values(grid, field.sdf, tets[i]));
      if (!g) continue;
      const double len = length(*g);
      const double r = len - 1;
      sum += r * r;
      if (len > 0) linear_gradient_backward(p, *g, (2 * r / len) * *g, per_tet[i].d_f, per_tet[i].d_p);
    }
    partial[b / kGrain] = sum;
  });
  for (double v : partial) out.value += v;
  scatter(grid, tets, per_tet, out.grad);
  return out;
}

RegularizerResult normal_consistency_loss(const TetrahedralGrid& grid, const FieldState& field) {
  RegularizerResult out;
  const std::size_t nv = grid.vertex_count(), nt = grid.tet_count();
  out.grad = GradientBuffers(nv);
  const auto pos = deformed_positions(grid, field);

  std::vector<Vec3> tet_g(nt);
  std::vector<unsigned char> tet_ok(nt, 0);
  parallel_for(nt, kGrain, [&](std::size_t b, std::size_t e) {
    for (std::size_t t = b; t < e; ++t) {
      const int ti = static_cast<int>(t);
      const auto g = linear_gradient(tet_points(grid, pos, ti), tet_values(grid, field.sdf, ti));
      if (g && tet_normal(*g)) {
        tet_g[t] = *g;
        tet_ok[t] = 1;
      }
    }
  });

  // Vertex normals: normalized mean of incident tet normals.
  std::vector<Vec3> mean(nv), vnormal(nv);
  std::vector<int> count(nv, 0);
  std::vector<unsigned char> v_ok(nv, 0);
  parallel_for(nv, kGrain, [&](std::size_t b, std::size_t e) {
    for (std::size_t v = b; v < e; ++v) {
      Vec3 sum;
      int c = 0;
      for (int t : grid.incident_tets(static_cast<int>(v)))
        if (tet_ok[t]) {
          sum += normalize(tet_g[t]);
          ++c;
        }
      if (c == 0) continue;
      mean[v] = sum / c;
      count[v] = c;
      if (length(mean[v]) > 1e-12) {
        vnormal[v] = normalize(mean[v]);
        v_ok[v] = 1;
      }
    }
  });

  const std::size_t ne = grid.edges.size();
  std::vector<double> partial(chunk_count(ne, kGrain), 0.0);
  parallel_for(ne, kGrain, [&](std::size_t b, std::size_t e) {
    double sum = 0;
    for (std::size_t i = b; i < e; ++i) {
      const auto [a, c] = grid.edges[i];
      if (v_ok[a] && v_ok[c]) sum += 1 - dot(vnormal[a], vnormal[c]);
    }
    partial[b / kGrain] = sum;
  });
  for (double v : partial) out.value += v;

  // Backward: edges -> vertex normals (ordered, sequential) -> tet normals.
  std::vector<Vec3> d_vnormal(nv);
  for (const auto& [a, c] : grid.edges)
    if (v_ok[a] && v_ok[c]) {
      d_vnormal[a] -= vnormal[c];
      d_vnormal[c] -= vnormal[a];
    }
  std::vector<Vec3> d_mean(nv);
  for (std::size_t v = 0; v < nv; ++v)
    if (v_ok[v]) d_mean[v] = normalize_backward(mean[v], d_vnormal[v]) / count[v];

  std::vector<TetGrad> per_tet(nt);
  std::vector<int> all(nt);
  parallel_for(nt, kGrain, [&](std::size_t b, std::size_t e) {
    for (std::size_t t = b; t < e; ++t) {
      all[t] = static_cast<int>(t);
      if (!tet_ok[t]) continue;
      Vec3 d_n;
      for (int v : grid.tets[t])
        if (v_ok[v]) d_n += d_mean[v];
      if (d_n.x == 0 && d_n.y == 0 && d_n.z == 0) continue;
      const int ti = static_cast<int>(t);
      linear_gradient_backward(tet_points(grid, pos, ti), tet_g[t], normalize_backward(tet_g[t], d_n),
                               per_tet[t].d_f, per_tet[t].d_p);
    }
  });
  scatter(grid, all, per_tet, out.grad);
  return out;
}

MapLoss map_mse_loss(const RenderMaps& rendered, const RenderMaps& target, const MapWeights& weights) {
  if (rendered.width != target.width || rendered.height != target.height)
    throw InvalidArgument("map_mse_loss: image sizes differ");
  const bool color = rendered.has_color() && target.has_color();
  MapLoss out;
  out.grad = RenderMaps(rendered.width, rendered.height, color);
  const double inv = 1.0 / static_cast<double>(rendered.pixel_count());
  auto term = [inv](const std::vector<double>& r, const std::vector<double>& t, double w,
                    std::vector<double>& g) {
    double sum = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double d = r[i] - t[i];
      sum += d * d;
      g[i] = w * 2 * d * inv;
    }
    return sum * inv;
  };
  out.opacity = term(rendered.opacity, target.opacity, weights.opacity, out.grad.opacity);
  out.depth = term(rendered.depth, target.depth, weights.depth, out.grad.depth);
  out.normal = term(rendered.normal, target.normal, weights.normal, out.grad.normal);
  if (color) out.color = term(rendered.color, target.color, weights.color, out.grad.color);
  out.total = weights.opacity * out.opacity + weights.depth * out.depth + weights.normal * out.normal +
              (color ? weights.color * out.color : 0.0);
  return out;
}

}  // namespace tetsplat
