#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tetsplat/camera.hpp"
#include "tetsplat/field.hpp"
#include "tetsplat/raster.hpp"
#include "tetsplat/tetgrid.hpp"

namespace tetsplat {

// Sphere of radius 0.5 plus a few low-frequency sinusoids, with random
// deformations up to half the per-axis limit. Deterministic in `seed`.
FieldState random_smooth_field(const TetrahedralGrid& grid, std::uint64_t seed, double amplitude = 0.05);

struct ViewSpec {
  double radius = 3.0;
  double azimuth_deg = 30;
  double elevation_deg = 25;
  double fov_deg = 40;
  int width = 32;
  int height = 32;
  double near = 0.1;
  double far = 10;

  Camera camera() const;
};

struct MapDifference {
  double max_abs = 0;
  double mean_abs = 0;
};

// Over normal, depth and opacity (and color when both carry it).
MapDifference map_difference(const RenderMaps& a, const RenderMaps& b);

struct GradCheckConfig {
  int resolution = 4;
  ViewSpec view;
  double s = 10;
  std::uint64_t seed = 1;
  double step = 1e-4;
  double tolerance = 1e-3;
  double opacity_tolerance = 1e-4;
  // Relative errors use max(|analytic|, |numeric|, floor * largest |numeric|
  // of the same map and parameter class) as denominator.
  double floor = 1e-4;
  // A pixel is excluded for a parameter when its central differences at
  // step and step / 2 disagree by more than kink_tolerance (relative) plus
  // kink_absolute: the image is only piecewise smooth in vertex positions
  // and such a pixel has a kink within the stencil.
  double kink_tolerance = 1e-4;
  double kink_absolute = 1e-9;
  int window = kDefaultWindow;
};

struct GradCheckEntry {
  std::string map;          // opacity, depth, normal
  std::string parameter;    // sdf, deformation
  double max_rel_error = 0;
  double max_rel_error_unfiltered = 0;  // no kink exclusion
  double max_abs_gradient = 0;
  std::size_t excluded = 0;            // (pixel, parameter) pairs
  std::size_t parameters = 0;
  double tolerance = 0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  std::size_t active_tets = 0;
  bool passed() const;
};

// Central finite differences over every SDF value and deformation component
// against render_backward, one scalar loss per map (random per-pixel
// weights). The active set is frozen and early stopping disabled.
// Throws InvalidArgument when resolution > 8.
GradCheckReport check_gradients(const GradCheckConfig& config);

struct BenchSortConfig {
  std::vector<int> resolutions{32};
  std::vector<int> windows{1, 3, 5, 9};  // 0 selects the longest tile list
  ViewSpec view{3.0, 30, 25, 40, 128, 128, 0.1, 10};
  double s = 50;
  std::uint64_t seed = 3;
  int frames = 1;
};

struct BenchRow {
  int resolution = 0;
  int window = 0;
  double max_abs = 0;
  double mean_abs = 0;
  double ms_per_frame = 0;
};

// render_forward (no early stop) against render_reference on
// random_smooth_field for every (resolution, window) pair.
std::vector<BenchRow> bench_sort(const BenchSortConfig& config);

}  // namespace tetsplat
