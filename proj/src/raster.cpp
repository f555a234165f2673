#include "tetsplat/raster.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <limits>

#include "tetsplat/errors.hpp"
#include "tetsplat/parallel.hpp"

namespace tetsplat {
namespace {

std::atomic<double> g_backward_corruption{1.0};

bool finite_all(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Vec3 load3(const std::vector<double>& v, std::size_t p) { return {v[3 * p], v[3 * p + 1], v[3 * p + 2]}; }

struct Pending {
  double depth;
  int splat;
  double alpha;
};

struct PixelAccum {
  double transmittance = 1;
  double opacity = 0, depth = 0;
  Vec3 normal, color;
};

// Blends one term into a pixel; returns false once the pixel saturates.
bool blend(PixelAccum& acc, const TetSplat& sp, int splat, double alpha, double stop,
           std::vector<Contribution>* saved) {
  const double w = acc.transmittance * alpha;
  if (saved) saved->push_back({splat, alpha, acc.transmittance});
  acc.opacity += w;
  acc.depth += w * sp.mean_depth;
  acc.normal += w * sp.normal;
  if (sp.has_color) acc.color += w * sp.color;
  acc.transmittance *= 1 - alpha;
  return !(acc.transmittance < stop);
}

void write_pixel(RenderMaps& maps, std::size_t p, const PixelAccum& acc) {
  maps.opacity[p] = acc.opacity;
  maps.depth[p] = acc.depth;
  maps.normal[3 * p] = acc.normal.x;
  maps.normal[3 * p + 1] = acc.normal.y;
  maps.normal[3 * p + 2] = acc.normal.z;
  if (maps.has_color()) {
    maps.color[3 * p] = acc.color.x;
    maps.color[3 * p + 1] = acc.color.y;
    maps.color[3 * p + 2] = acc.color.z;
  }
}

Vec2 pixel_center(int x, int y) { return {x + 0.5, y + 0.5}; }

}  // namespace

RenderMaps::RenderMaps(int w, int h, bool with_color)
    : width(w),
      height(h),
      normal(3 * static_cast<std::size_t>(w) * h, 0.0),
      depth(static_cast<std::size_t>(w) * h, 0.0),
      opacity(static_cast<std::size_t>(w) * h, 0.0),
      color(with_color ? 3 * static_cast<std::size_t>(w) * h : 0, 0.0) {}

bool RenderMaps::all_finite() const {
  return finite_all(normal) && finite_all(depth) && finite_all(opacity) && finite_all(color);
}

std::size_t TileBins::max_list_length() const {
  std::size_t m = 0;
  for (int t = 0; t < tile_count(); ++t) m = std::max<std::size_t>(m, offsets[t + 1] - offsets[t]);
  return m;
}

std::uint32_t quantize_depth(double depth, double near, double far) {
  const double t = std::clamp((depth - near) / (far - near), 0.0, 1.0);
  return static_cast<std::uint32_t>(t * 4294967295.0);
}

void radix_sort_pairs(std::vector<std::uint64_t>& keys, std::vector<int>& values, int key_bits) {
  const std::size_t n = keys.size();
  std::vector<std::uint64_t> tmp_keys(n);
  std::vector<int> tmp_values(n);
  for (int shift = 0; shift < key_bits; shift += 8) {
    std::size_t count[257] = {};
    for (std::uint64_t k : keys) ++count[((k >> shift) & 0xff) + 1];
    if (count[1] == n) continue;  // every key has this digit == 0
    for (int d = 0; d < 256; ++d) count[d + 1] += count[d];
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t dst = count[(keys[i] >> shift) & 0xff]++;
      tmp_keys[dst] = keys[i];
      tmp_values[dst] = values[i];
    }
    keys.swap(tmp_keys);
    values.swap(tmp_values);
  }
}

TileBins bin_and_sort(std::span<const TetSplat> splats, const Camera& camera, int tile_size) {
  if (tile_size < 1) throw InvalidArgument("bin_and_sort: tile size must be positive");
  TileBins bins;
  bins.tile_size = tile_size;
  bins.tiles_x = (camera.width + tile_size - 1) / tile_size;
  bins.tiles_y = (camera.height + tile_size - 1) / tile_size;
  const int tiles = bins.tile_count();

  struct Range {
    int x0, x1, y0, y1;
  };
  std::vector<Range> ranges(splats.size());
  std::size_t total = 0;
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const TetSplat& sp = splats[i];
    Range& r = ranges[i];
    if (sp.xmax < 0 || sp.ymax < 0 || sp.xmin > camera.width || sp.ymin > camera.height) {
      r = {0, -1, 0, -1};
      continue;
    }
    r.x0 = std::clamp(static_cast<int>(std::floor(sp.xmin / tile_size)), 0, bins.tiles_x - 1);
    r.x1 = std::clamp(static_cast<int>(std::floor(sp.xmax / tile_size)), 0, bins.tiles_x - 1);
    r.y0 = std::clamp(static_cast<int>(std::floor(sp.ymin / tile_size)), 0, bins.tiles_y - 1);
    r.y1 = std::clamp(static_cast<int>(std::floor(sp.ymax / tile_size)), 0, bins.tiles_y - 1);
    total += static_cast<std::size_t>(r.x1 - r.x0 + 1) * (r.y1 - r.y0 + 1);
  }

  std::vector<std::uint64_t> keys;
  keys.reserve(total);
  bins.entries.reserve(total);
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const Range& r = ranges[i];
    const std::uint64_t q = quantize_depth(splats[i].mean_depth, camera.near, camera.far);
    for (int ty = r.y0; ty <= r.y1; ++ty)
      for (int tx = r.x0; tx <= r.x1; ++tx) {
        keys.push_back((static_cast<std::uint64_t>(ty * bins.tiles_x + tx) << 32) | q);
        bins.entries.push_back(static_cast<int>(i));
      }
  }
  radix_sort_pairs(keys, bins.entries, 32 + std::bit_width(static_cast<unsigned>(tiles)));

  bins.offsets.assign(tiles + 1, 0);
  for (std::uint64_t k : keys) ++bins.offsets[(k >> 32) + 1];
  for (int t = 0; t < tiles; ++t) bins.offsets[t + 1] += bins.offsets[t];
  return bins;
}

ForwardResult render_forward(const TileBins& bins, std::span<const TetSplat> splats, const Camera& camera,
                             double steepness, const RenderOptions& options) {
  if (options.window < 1) throw InvalidArgument("render_forward: window must be >= 1");
  const bool with_color = !splats.empty() && splats.front().has_color;
  ForwardResult out;
  out.maps = RenderMaps(camera.width, camera.height, with_color);
  const int w = camera.width, h = camera.height, ts = bins.tile_size;
  const std::size_t window = static_cast<std::size_t>(options.window);

  struct TileOut {
    std::vector<Contribution> contribs;
    std::vector<std::uint32_t> counts;  // per tile pixel, row-major
  };
  std::vector<TileOut> tile_out(bins.tile_count());

  parallel_for(bins.tile_count(), 1, [&](std::size_t tb, std::size_t te) {
    std::vector<Pending> pending;
    pending.reserve(window + 1);
    // Splats of the current row that cover it vertically: {xmin, xmax, index}.
    struct RowEntry {
      double xmin, xmax;
      int splat;
    };
    std::vector<RowEntry> row;
    for (std::size_t t = tb; t < te; ++t) {
      const auto list = bins.tile(static_cast<int>(t));
      const int tx = static_cast<int>(t) % bins.tiles_x, ty = static_cast<int>(t) / bins.tiles_x;
      TileOut& to = tile_out[t];
      for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y) {
        const double py = y + 0.5;
        row.clear();
        for (int si : list) {
          const TetSplat& sp = splats[si];
          if (py >= sp.ymin && py <= sp.ymax) row.push_back({sp.xmin, sp.xmax, si});
        }
        for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
          const Vec2 px = pixel_center(x, y);
          const std::size_t before = to.contribs.size();
          PixelAccum acc;
          pending.clear();
          bool alive = true;
          for (std::size_t li = 0; li < row.size() && alive; ++li) {
            if (px.x < row[li].xmin || px.x > row[li].xmax) continue;
            const int si = row[li].splat;
            const TetSplat& sp = splats[si];
            const auto hit = intersect_splat(sp, px);
            if (!hit) continue;
            const double alpha = opacity(hit->prev.f, hit->next.f, steepness);
            if (alpha <= 0) continue;
            // Stable insertion by the depth where this pixel's ray enters the tet.
            const double entry = hit->prev.depth;
            auto pos = std::upper_bound(pending.begin(), pending.end(), entry,
                                        [](double d, const Pending& p) { return d < p.depth; });
            pending.insert(pos, {entry, si, alpha});
            if (pending.size() >= window) {
              const Pending front = pending.front();
              pending.erase(pending.begin());
              alive = blend(acc, splats[front.splat], front.splat, front.alpha, options.stop_transmittance,
                            &to.contribs);
            }
          }
          for (std::size_t k = 0; k < pending.size() && alive; ++k)
            alive = blend(acc, splats[pending[k].splat], pending[k].splat, pending[k].alpha,
                          options.stop_transmittance, &to.contribs);
          write_pixel(out.maps, static_cast<std::size_t>(y) * w + x, acc);
          to.counts.push_back(static_cast<std::uint32_t>(to.contribs.size() - before));
        }
      }
    }
  });

  SavedState& saved = out.saved;
  saved.width = w;
  saved.height = h;
  saved.steepness = steepness;
  saved.pixel_offsets.assign(static_cast<std::size_t>(w) * h + 1, 0);
  for (int t = 0; t < bins.tile_count(); ++t) {
    const int tx = t % bins.tiles_x, ty = t / bins.tiles_x;
    std::size_t k = 0;
    for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y)
      for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x)
        saved.pixel_offsets[static_cast<std::size_t>(y) * w + x + 1] = tile_out[t].counts[k++];
  }
  for (std::size_t p = 0; p < saved.pixel_offsets.size() - 1; ++p)
    saved.pixel_offsets[p + 1] += saved.pixel_offsets[p];
  saved.contributions.resize(saved.pixel_offsets.back());
  for (int t = 0; t < bins.tile_count(); ++t) {
    const int tx = t % bins.tiles_x, ty = t / bins.tiles_x;
    std::size_t k = 0, c = 0;
    for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y)
      for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
        const std::uint32_t n = tile_out[t].counts[k++];
        std::copy_n(tile_out[t].contribs.begin() + c, n,
                    saved.contributions.begin() + saved.pixel_offsets[static_cast<std::size_t>(y) * w + x]);
        c += n;
      }
  }
  return out;
}

RenderMaps render_reference(std::span<const TetSplat> splats, const Camera& camera, double steepness) {
  const bool with_color = !splats.empty() && splats.front().has_color;
  RenderMaps maps(camera.width, camera.height, with_color);
  const int w = camera.width, h = camera.height;
  constexpr int band = 16;
  const int bands = (h + band - 1) / band;
  // Row bands only bound the work; ordering is exact per pixel.
  std::vector<std::vector<int>> band_splats(bands);
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const TetSplat& sp = splats[i];
    if (sp.ymax < 0 || sp.ymin > h) continue;
    const int b0 = std::clamp(static_cast<int>(std::floor(sp.ymin / band)), 0, bands - 1);
    const int b1 = std::clamp(static_cast<int>(std::floor(sp.ymax / band)), 0, bands - 1);
    for (int b = b0; b <= b1; ++b) band_splats[b].push_back(static_cast<int>(i));
  }
  parallel_for(bands, 1, [&](std::size_t bb, std::size_t be) {
    for (std::size_t b = bb; b < be; ++b) {
      const int y0 = static_cast<int>(b) * band, y1 = std::min(h, y0 + band);
      std::vector<std::vector<Pending>> lists(static_cast<std::size_t>(w) * (y1 - y0));
      for (int si : band_splats[b]) {
        const TetSplat& sp = splats[si];
        const int xa = std::max(0, static_cast<int>(std::ceil(sp.xmin - 0.5)));
        const int xb = std::min(w - 1, static_cast<int>(std::floor(sp.xmax - 0.5)));
        const int ya = std::max(y0, static_cast<int>(std::ceil(sp.ymin - 0.5)));
        const int yb = std::min(y1 - 1, static_cast<int>(std::floor(sp.ymax - 0.5)));
        for (int y = ya; y <= yb; ++y)
          for (int x = xa; x <= xb; ++x) {
            const auto hit = intersect_splat(sp, pixel_center(x, y));
            if (!hit) continue;
            const double alpha = opacity(hit->prev.f, hit->next.f, steepness);
            if (alpha <= 0) continue;
            lists[static_cast<std::size_t>(y - y0) * w + x].push_back({hit->prev.depth, si, alpha});
          }
      }
      for (int y = y0; y < y1; ++y)
        for (int x = 0; x < w; ++x) {
          auto& list = lists[static_cast<std::size_t>(y - y0) * w + x];
          // Ties fall back to the tile order.
          std::sort(list.begin(), list.end(), [&](const Pending& a, const Pending& b) {
            if (a.depth != b.depth) return a.depth < b.depth;
            const auto qa = quantize_depth(splats[a.splat].mean_depth, camera.near, camera.far);
            const auto qb = quantize_depth(splats[b.splat].mean_depth, camera.near, camera.far);
            return qa < qb || (qa == qb && a.splat < b.splat);
          });
          PixelAccum acc;
          for (const Pending& p : list) blend(acc, splats[p.splat], p.splat, p.alpha, 0.0, nullptr);
          write_pixel(maps, static_cast<std::size_t>(y) * w + x, acc);
        }
    }
  });
  return maps;
}

GradientBuffers::GradientBuffers(std::size_t vertices, std::size_t tets_with_color)
    : d_sdf(vertices, 0.0), d_deform(vertices), d_color(tets_with_color) {}

void GradientBuffers::add(const GradientBuffers& o, double w) {
  if (d_sdf.size() != o.d_sdf.size()) throw InvalidArgument("GradientBuffers::add: size mismatch");
  for (std::size_t i = 0; i < d_sdf.size(); ++i) {
    d_sdf[i] += w * o.d_sdf[i];
    d_deform[i] += w * o.d_deform[i];
  }
  if (!o.d_color.empty()) {
    if (d_color.empty()) d_color.assign(o.d_color.size(), Vec3{});
    for (std::size_t i = 0; i < d_color.size(); ++i) d_color[i] += w * o.d_color[i];
  }
}

bool GradientBuffers::all_finite() const {
  if (!finite_all(d_sdf)) return false;
  for (const Vec3& v : d_deform)
    if (!is_finite(v)) return false;
  for (const Vec3& v : d_color)
    if (!is_finite(v)) return false;
  return true;
}

void set_backward_corruption(double factor) { g_backward_corruption.store(factor); }

GradientBuffers render_backward(const SavedState& saved, std::span<const TetSplat> splats,
                                const Scene& scene, const Camera& camera, const RenderMaps& d_maps) {
  if (d_maps.width != saved.width || d_maps.height != saved.height)
    throw InvalidArgument("render_backward: gradient image size mismatch");
  if (!d_maps.all_finite()) throw InvalidArgument("render_backward: non-finite incoming gradient");
  const int w = saved.width, h = saved.height;
  const bool with_color = d_maps.has_color() && !scene.colors.empty();
  const double s = saved.steepness;

  // Per-row-band partial splat gradients, merged in band order.
  constexpr int band = 16;
  const int bands = (h + band - 1) / band;
  struct BandOut {
    std::vector<int> splat_ids;
    std::vector<SplatGrad> grads;
  };
  std::vector<BandOut> band_out(bands);

  parallel_for(bands, 1, [&](std::size_t bb, std::size_t be) {
    std::vector<int> slot(splats.size(), -1);
    for (std::size_t b = bb; b < be; ++b) {
      BandOut& bo = band_out[b];
      auto grad_of = [&](int si) -> SplatGrad& {
        if (slot[si] < 0) {
          slot[si] = static_cast<int>(bo.grads.size());
          bo.splat_ids.push_back(si);
          bo.grads.emplace_back();
        }
        return bo.grads[slot[si]];
      };
      const int y0 = static_cast<int>(b) * band, y1 = std::min(h, y0 + band);
      for (int y = y0; y < y1; ++y)
        for (int x = 0; x < w; ++x) {
          const std::size_t p = static_cast<std::size_t>(y) * w + x;
          const auto contribs = saved.pixel(p);
          if (contribs.empty()) continue;
          const double g_o = d_maps.opacity[p];
          const double g_d = d_maps.depth[p];
          const Vec3 g_n = load3(d_maps.normal, p);
          const Vec3 g_c = with_color ? load3(d_maps.color, p) : Vec3{};
          const Vec2 px = pixel_center(x, y);
          double acc_o = 0, acc_d = 0;
          Vec3 acc_n, acc_c;
          for (std::size_t k = contribs.size(); k-- > 0;) {
            const Contribution& c = contribs[k];
            const TetSplat& sp = splats[c.splat];
            const double t = c.transmittance, a = c.alpha;
            const double inv = 1.0 / (1.0 - a);
            double d_alpha = g_o * (t - acc_o * inv) + g_d * (t * sp.mean_depth - acc_d * inv) +
                             dot(g_n, t * sp.normal - acc_n * inv);
            if (with_color) d_alpha += dot(g_c, t * sp.color - acc_c * inv);
            const double wgt = t * a;
            acc_o += wgt;
            acc_d += wgt * sp.mean_depth;
            acc_n += wgt * sp.normal;
            if (with_color) acc_c += wgt * sp.color;

            SplatGrad& sg = grad_of(c.splat);
            sg.d_mean_depth += g_d * wgt;
            sg.d_normal += wgt * g_n;
            if (with_color) sg.d_color += wgt * g_c;
            const auto hit = intersect_splat(sp, px);
            if (!hit) continue;
            const Opacity op = opacity_with_grad(hit->prev.f, hit->next.f, s);
            if (op.d_prev != 0) face_hit_backward(sp, hit->prev.face, px, d_alpha * op.d_prev, sg);
            if (op.d_next != 0) face_hit_backward(sp, hit->next.face, px, d_alpha * op.d_next, sg);
          }
        }
      for (int si : bo.splat_ids) slot[si] = -1;
    }
  });

  std::vector<SplatGrad> splat_grads(splats.size());
  std::vector<unsigned char> touched(splats.size(), 0);
  for (const BandOut& bo : band_out)
    for (std::size_t i = 0; i < bo.splat_ids.size(); ++i) {
      splat_grads[bo.splat_ids[i]] += bo.grads[i];
      touched[bo.splat_ids[i]] = 1;
    }

  // Per-splat chain to vertex derivatives, then an ordered scatter.
  struct VertexGrad {
    std::array<double, 4> d_f{};
    std::array<Vec3, 4> d_p;
  };
  std::vector<VertexGrad> vgrads(splats.size());
  parallel_for(splats.size(), 4096, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      if (!touched[i]) continue;
      const TetSplat& sp = splats[i];
      SplatGrad& sg = splat_grads[i];
      VertexGrad& vg = vgrads[i];
      const Tet& tet = scene.grid->tets[sp.tet_index];
      std::array<Vec3, 4> p;
      for (int k = 0; k < 4; ++k) {
        p[k] = scene.positions[tet[k]];
        const double z = sp.depths[k];
        const double dz = sg.d_depth[k] + 0.25 * sg.d_mean_depth;
        const Vec2 dp = sg.d_proj[k];
        const Vec3 d_cam{dp.x * camera.focal / z, dp.y * camera.focal / z,
                         dz - (dp.x * (sp.proj[k].x - camera.cx()) + dp.y * (sp.proj[k].y - camera.cy())) / z};
        vg.d_p[k] += transpose_mul(camera.rotation, d_cam);
        vg.d_f[k] += sg.d_f[k];
      }
      if (sp.has_normal && (sg.d_normal.x != 0 || sg.d_normal.y != 0 || sg.d_normal.z != 0)) {
        const Vec3& g = scene.gradients[sp.scene_index];
        linear_gradient_backward(p, g, normalize_backward(g, sg.d_normal), vg.d_f, vg.d_p);
      }
    }
  });

  GradientBuffers out(scene.positions.size(), with_color ? scene.grid->tet_count() : 0);
  const double corrupt = g_backward_corruption.load();
  for (std::size_t i = 0; i < splats.size(); ++i) {
    if (!touched[i]) continue;
    const Tet& tet = scene.grid->tets[splats[i].tet_index];
    for (int k = 0; k < 4; ++k) {
      out.d_sdf[tet[k]] += corrupt * vgrads[i].d_f[k];
      out.d_deform[tet[k]] += corrupt * vgrads[i].d_p[k];
    }
    if (with_color) out.d_color[splats[i].tet_index] += corrupt * splat_grads[i].d_color;
  }
  return out;
}

RenderPass render_view(const Scene& scene, const Camera& camera, const RenderOptions& options) {
  RenderPass pass;
  pass.splats = make_splats(scene, camera);
  pass.bins = bin_and_sort(pass.splats, camera, options.tile_size);
  pass.forward = render_forward(pass.bins, pass.splats, camera, scene.steepness, options);
  return pass;
}

RenderMaps rasterize_mesh(const TriangleMesh& mesh, const Camera& camera) {
  RenderMaps maps(camera.width, camera.height);
  std::vector<double> zbuf(maps.pixel_count(), std::numeric_limits<double>::infinity());
  for (const auto& tri : mesh.triangles) {
    std::array<Vec2, 3> px;
    double z[3];
    bool skip = false;
    for (int k = 0; k < 3; ++k) {
      const Vec3 c = camera.to_camera(mesh.vertices[tri[k]]);
      z[k] = c.z;
      if (!(c.z > camera.near)) skip = true;
      else px[k] = project_camera_space(camera, c);
    }
    if (skip) continue;
    const Vec3& a = mesh.vertices[tri[0]];
    const Vec3 n3 = cross(mesh.vertices[tri[1]] - a, mesh.vertices[tri[2]] - a);
    const double len = length(n3);
    if (!(len > 0)) continue;
    const Vec3 n = n3 / len;
    const double xmin = std::min({px[0].x, px[1].x, px[2].x}), xmax = std::max({px[0].x, px[1].x, px[2].x});
    const double ymin = std::min({px[0].y, px[1].y, px[2].y}), ymax = std::max({px[0].y, px[1].y, px[2].y});
    const int xa = std::max(0, static_cast<int>(std::ceil(xmin - 0.5)));
    const int xb = std::min(camera.width - 1, static_cast<int>(std::floor(xmax - 0.5)));
    const int ya = std::max(0, static_cast<int>(std::ceil(ymin - 0.5)));
    const int yb = std::min(camera.height - 1, static_cast<int>(std::floor(ymax - 0.5)));
    for (int y = ya; y <= yb; ++y)
      for (int x = xa; x <= xb; ++x) {
        const auto uv = barycentric_2d(px, pixel_center(x, y));
        if (!uv) continue;
        const double depth = perspective_correct(uv->x, uv->y, z[0], z[1], z[2]).depth;
        const std::size_t p = static_cast<std::size_t>(y) * camera.width + x;
        if (depth >= zbuf[p]) continue;
        zbuf[p] = depth;
        maps.depth[p] = depth;
        maps.opacity[p] = 1.0;
        maps.normal[3 * p] = n.x;
        maps.normal[3 * p + 1] = n.y;
        maps.normal[3 * p + 2] = n.z;
      }
  }
  return maps;
}

}  // namespace tetsplat
