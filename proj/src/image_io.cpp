#include "stm/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace stm {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

uint8_t quantize(Scalar v) {
  v = std::clamp(v, Scalar(0), Scalar(1));
  return static_cast<uint8_t>(std::lround(v * 255.0));
}

}  // namespace

void save_png(const Image& image, const std::string& path) {
  if (image.channels != 1 && image.channels != 3)
    throw IoError("save_png: only 1- or 3-channel images supported");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for write: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, image.width, image.height, 8,
               image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<uint8_t> row(size_t(image.width) * image.channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c)
        row[size_t(x) * image.channels + c] = quantize(image.at(y, x, c));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image load_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png read failed: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int width = int(png_get_image_width(png, info));
  const int height = int(png_get_image_height(png, info));
  const int channels = int(png_get_channels(png, info));
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("load_png: unsupported channel count in " + path);
  }

  Image image(width, height, channels);
  std::vector<uint8_t> row(size_t(width) * channels);
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c)
        image.at(y, x, c) = row[size_t(x) * channels + c] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void save_pfm(const Image& image, const std::string& path) {
  if (image.channels != 1)
    throw IoError("save_pfm: single-channel only");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path);
  out << "Pf\n" << image.width << " " << image.height << "\n-1.0\n";
  // PFM scanlines run bottom to top.
  std::vector<float> row(image.width);
  for (int y = image.height - 1; y >= 0; --y) {
    for (int x = 0; x < image.width; ++x) row[x] = float(image.at(y, x));
    out.write(reinterpret_cast<const char*>(row.data()),
              std::streamsize(row.size() * sizeof(float)));
  }
  if (!out) throw IoError("write failed: " + path);
}

Image load_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::string magic;
  in >> magic;
  if (magic != "Pf") throw IoError("pfm: unsupported format " + magic);
  int width = 0, height = 0;
  double scale = 0;
  in >> width >> height >> scale;
  in.get();  // single whitespace after the scale line
  if (width <= 0 || height <= 0) throw IoError("pfm: bad dimensions");
  if (scale >= 0) throw IoError("pfm: big-endian files unsupported");
  Image image(width, height, 1);
  std::vector<float> row(width);
  for (int y = height - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()),
            std::streamsize(row.size() * sizeof(float)));
    if (!in) throw IoError("pfm: truncated payload in " + path);
    for (int x = 0; x < width; ++x) image.at(y, x) = row[x];
  }
  return image;
}

}  // namespace stm
