#include "tetsplat/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "tetsplat/errors.hpp"

namespace tetsplat {

static_assert(std::endian::native == std::endian::little, "PFM writer assumes a little-endian host");

namespace {

void check_shape(int w, int h, int c, std::size_t n) {
  if (w < 1 || h < 1 || (c != 1 && c != 3) || n != static_cast<std::size_t>(w) * h * c)
    throw InvalidArgument("image: inconsistent shape");
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

}  // namespace

void write_pfm(const std::filesystem::path& path, const FloatImage& image) {
  check_shape(image.width, image.height, image.channels, image.data.size());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << (image.channels == 3 ? "PF" : "Pf") << '\n' << image.width << ' ' << image.height << '\n' << "-1.0" << '\n';
  const std::size_t row = static_cast<std::size_t>(image.width) * image.channels;
  for (int y = image.height - 1; y >= 0; --y)
    out.write(reinterpret_cast<const char*>(image.data.data() + y * row), static_cast<std::streamsize>(row * sizeof(float)));
  if (!out) throw IoError("write failed: " + path.string());
}

FloatImage read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  FloatImage image;
  double scale = 0;
  in >> magic >> image.width >> image.height >> scale;
  in.get();
  if (!in || (magic != "PF" && magic != "Pf")) throw IoError("not a PFM file: " + path.string());
  if (scale >= 0) throw IoError("big-endian PFM not supported: " + path.string());
  image.channels = magic == "PF" ? 3 : 1;
  const std::size_t row = static_cast<std::size_t>(image.width) * image.channels;
  image.data.resize(row * image.height);
  for (int y = image.height - 1; y >= 0; --y)
    in.read(reinterpret_cast<char*>(image.data.data() + y * row), static_cast<std::streamsize>(row * sizeof(float)));
  if (!in) throw IoError("truncated PFM: " + path.string());
  return image;
}

void write_png(const std::filesystem::path& path, const ByteImage& image) {
  check_shape(image.width, image.height, image.channels, image.data.size());
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, image.width, image.height, 8, image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t row = static_cast<std::size_t>(image.width) * image.channels;
  for (int y = 0; y < image.height; ++y)
    png_write_row(png, const_cast<png_bytep>(image.data.data() + y * row));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ByteImage read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialization failed");
  }
  ByteImage image;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("PNG read failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  image.width = static_cast<int>(png_get_image_width(png, info));
  image.height = static_cast<int>(png_get_image_height(png, info));
  const int type = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) != 8 || (type != PNG_COLOR_TYPE_GRAY && type != PNG_COLOR_TYPE_RGB)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported PNG layout: " + path.string());
  }
  image.channels = type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const std::size_t row = static_cast<std::size_t>(image.width) * image.channels;
  image.data.resize(row * image.height);
  for (int y = 0; y < image.height; ++y) png_read_row(png, image.data.data() + y * row, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

std::uint8_t quantize_unit(double x) {
  if (!(x > 0)) return 0;
  if (x >= 1) return 255;
  return static_cast<std::uint8_t>(std::floor(x * 255.0 + 0.5));
}

const char* map_name(MapKind kind) {
  switch (kind) {
    case MapKind::normal: return "normal";
    case MapKind::depth: return "depth";
    case MapKind::opacity: return "opacity";
    case MapKind::color: return "color";
  }
  return "";
}

FloatImage map_image(const RenderMaps& maps, MapKind kind) {
  FloatImage img;
  img.width = maps.width;
  img.height = maps.height;
  const std::vector<double>* src = nullptr;
  switch (kind) {
    case MapKind::normal: src = &maps.normal; img.channels = 3; break;
    case MapKind::depth: src = &maps.depth; break;
    case MapKind::opacity: src = &maps.opacity; break;
    case MapKind::color:
      if (!maps.has_color()) throw InvalidArgument("map_image: maps carry no color");
      src = &maps.color;
      img.channels = 3;
      break;
  }
  img.data.assign(src->begin(), src->end());
  return img;
}

ByteImage preview(const FloatImage& map, MapKind kind, double near, double far) {
  ByteImage out;
  out.width = map.width;
  out.height = map.height;
  out.channels = map.channels;
  out.data.resize(map.data.size());
  for (std::size_t i = 0; i < map.data.size(); ++i) {
    const double x = map.data[i];
    double u = x;
    if (kind == MapKind::normal) u = (x + 1.0) * 0.5;
    else if (kind == MapKind::depth) u = (x - near) / (far - near);
    out.data[i] = quantize_unit(u);
  }
  return out;
}

std::vector<std::filesystem::path> write_maps(const std::filesystem::path& dir, const RenderMaps& maps,
                                              const Camera& camera) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<MapKind> kinds{MapKind::normal, MapKind::depth, MapKind::opacity};
  if (maps.has_color()) kinds.push_back(MapKind::color);
  std::vector<std::filesystem::path> written;
  for (MapKind k : kinds) {
    const FloatImage img = map_image(maps, k);
    const auto pfm = dir / (std::string(map_name(k)) + ".pfm");
    const auto png = dir / (std::string(map_name(k)) + ".png");
    write_pfm(pfm, img);
    write_png(png, preview(img, k, camera.near, camera.far));
    written.push_back(png);
    written.push_back(pfm);
  }
  return written;
}

}  // namespace tetsplat
