#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tetsplat/camera.hpp"
#include "tetsplat/splat.hpp"
#include "tetsplat/tetgrid.hpp"

namespace tetsplat {

inline constexpr int kDefaultTileSize = 16;
inline constexpr int kDefaultWindow = 5;
inline constexpr double kDefaultStopTransmittance = 1e-4;

// Image maps, row-major. Normal and color are interleaved RGB.
struct RenderMaps {
  int width = 0;
  int height = 0;
  std::vector<double> normal;
  std::vector<double> depth;
  std::vector<double> opacity;
  std::vector<double> color;  // empty when colors are disabled

  RenderMaps() = default;
  RenderMaps(int w, int h, bool with_color = false);
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool has_color() const { return !color.empty(); }
  bool all_finite() const;
};

// Per-tile splat lists after replication and sorting. Tile t's entries are
// entries[offsets[t] .. offsets[t+1]), ascending by quantized mean depth,
// ties by splat index.
struct TileBins {
  int tile_size = kDefaultTileSize;
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<std::uint32_t> offsets;
  std::vector<int> entries;

  int tile_count() const { return tiles_x * tiles_y; }
  std::span<const int> tile(int t) const {
    return {entries.data() + offsets[t], static_cast<std::size_t>(offsets[t + 1] - offsets[t])};
  }
  std::size_t max_list_length() const;
};

// Mean depth mapped to 32-bit fixed point over [near, far].
std::uint32_t quantize_depth(double depth, double near, double far);

// Stable LSD radix sort of (key, value) pairs by key. Only the low
// `key_bits` bits are examined.
void radix_sort_pairs(std::vector<std::uint64_t>& keys, std::vector<int>& values, int key_bits = 64);

TileBins bin_and_sort(std::span<const TetSplat> splats, const Camera& camera,
                      int tile_size = kDefaultTileSize);

struct RenderOptions {
  // Per-pixel resorting window N_w >= 1, keyed on the ray's entry depth.
  int window = kDefaultWindow;
  double stop_transmittance = kDefaultStopTransmittance;  // 0 disables early stop
  int tile_size = kDefaultTileSize;
};

// One blended term of a pixel, in blending order.
struct Contribution {
  int splat = -1;
  double alpha = 0;
  double transmittance = 0;  // T at entry
};

// Forward state kept for the backward pass.
struct SavedState {
  int width = 0, height = 0;
  double steepness = 0;
  // pixel_offsets[p] .. pixel_offsets[p+1] index into contributions.
  std::vector<std::uint32_t> pixel_offsets;
  std::vector<Contribution> contributions;

  std::span<const Contribution> pixel(std::size_t p) const {
    return {contributions.data() + pixel_offsets[p],
            static_cast<std::size_t>(pixel_offsets[p + 1] - pixel_offsets[p])};
  }
};

struct ForwardResult {
  RenderMaps maps;
  SavedState saved;
};

ForwardResult render_forward(const TileBins& bins, std::span<const TetSplat> splats, const Camera& camera,
                             double steepness, const RenderOptions& options = {});

// Exact per-pixel depth ordering: every intersecting splat is collected and
// sorted by the depth where the pixel ray enters it (ties in tile order).
// No window, no early stop.
RenderMaps render_reference(std::span<const TetSplat> splats, const Camera& camera, double steepness);

struct GradientBuffers {
  std::vector<double> d_sdf;
  std::vector<Vec3> d_deform;
  std::vector<Vec3> d_color;  // per tet; empty when colors are disabled

  GradientBuffers() = default;
  GradientBuffers(std::size_t vertices, std::size_t tets_with_color = 0);
  // this += w * o
  void add(const GradientBuffers& o, double w = 1.0);
  bool all_finite() const;
};

// Reverse mode through blending, opacity, interpolation, projection and the
// per-tet normal. `d_maps` must match the forward image size; its color
// part is ignored when empty. Throws InvalidArgument for non-finite input.
GradientBuffers render_backward(const SavedState& saved, std::span<const TetSplat> splats,
                                const Scene& scene, const Camera& camera, const RenderMaps& d_maps);

// make_splats + bin_and_sort + render_forward for one camera.
struct RenderPass {
  std::vector<TetSplat> splats;
  TileBins bins;
  ForwardResult forward;
};

RenderPass render_view(const Scene& scene, const Camera& camera, const RenderOptions& options = {});

// Test hook: scales every backward derivative by `factor` when not 1.
void set_backward_corruption(double factor);

// Flat-shaded z-buffered triangle rasterization sampled at pixel centers:
// normal = geometric triangle normal, depth = camera z, opacity in {0, 1}.
RenderMaps rasterize_mesh(const TriangleMesh& mesh, const Camera& camera);

}  // namespace tetsplat
