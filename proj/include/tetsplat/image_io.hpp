#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tetsplat/camera.hpp"
#include "tetsplat/raster.hpp"

namespace tetsplat {

// Row-major, top row first, interleaved channels.
struct FloatImage {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 or 3
  std::vector<float> data;
};

struct ByteImage {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 or 3
  std::vector<std::uint8_t> data;
};

// PFM: "Pf"/"PF" header, scale -1.0 (little-endian), rows stored bottom to top.
void write_pfm(const std::filesystem::path& path, const FloatImage& image);
FloatImage read_pfm(const std::filesystem::path& path);

// 8-bit gray or RGB PNG.
void write_png(const std::filesystem::path& path, const ByteImage& image);
ByteImage read_png(const std::filesystem::path& path);

// floor(clamp(x, 0, 1) * 255 + 0.5)
std::uint8_t quantize_unit(double x);

enum class MapKind { normal, depth, opacity, color };

// Float map as stored in PFM: normals in [-1, 1], camera-space depth,
// opacity, color.
FloatImage map_image(const RenderMaps& maps, MapKind kind);

// Preview of a stored float map: normal (n + 1) / 2, depth (d - near) / (far - near),
// opacity and color as-is, then quantize_unit.
ByteImage preview(const FloatImage& map, MapKind kind, double near, double far);

const char* map_name(MapKind kind);

// Writes <name>.pfm and <name>.png for normal, depth, opacity (and color when
// present). Returns the written paths.
std::vector<std::filesystem::path> write_maps(const std::filesystem::path& dir, const RenderMaps& maps,
                                              const Camera& camera);

}  // namespace tetsplat
