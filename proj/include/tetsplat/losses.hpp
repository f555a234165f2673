#pragma once

#include <span>

#include "tetsplat/field.hpp"
#include "tetsplat/raster.hpp"
#include "tetsplat/tetgrid.hpp"

namespace tetsplat {

struct RegularizerResult {
  double value = 0;
  GradientBuffers grad;
};

// Sum over `tets` of (|g_k| - 1)^2 with g_k the per-tet SDF gradient.
// Degenerate tets are skipped.
RegularizerResult eikonal_loss(const TetrahedralGrid& grid, const FieldState& field, std::span<const int> tets);

// Sum over grid edges of 1 - cos(n_a, n_b), where vertex normals are the
// normalized unweighted mean of incident tet normals. Tets without a normal
// are skipped; edges touching a vertex without a normal are skipped.
RegularizerResult normal_consistency_loss(const TetrahedralGrid& grid, const FieldState& field);

struct MapWeights {
  double opacity = 1;
  double depth = 1;
  double normal = 1;
  double color = 1;
};

struct MapLoss {
  double total = 0;
  double opacity = 0;  // unweighted per-map mean squared errors
  double depth = 0;
  double normal = 0;
  double color = 0;
  RenderMaps grad;  // d total / d rendered
};

// Per-map sum of squared differences over the pixel count, weighted and
// summed. Color participates only when both sides carry it. Throws
// InvalidArgument on size mismatch.
MapLoss map_mse_loss(const RenderMaps& rendered, const RenderMaps& target, const MapWeights& weights);

}  // namespace tetsplat
