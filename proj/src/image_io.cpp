#include "pcbdet/image_io.hpp"

#include <png.h>

#include <cstring>

#include "pcbdet/errors.hpp"

namespace pcbdet {

Raster read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Raster r(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, r.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return r;
}

void write_png(const std::filesystem::path& path, const Raster& image) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + img.message);
  }
}

Tensor normalize_image(const Raster& image) { return normalize_batch({&image}); }

Tensor normalize_batch(const std::vector<const Raster*>& images) {
  if (images.empty()) throw ShapeError("normalize_batch needs at least one image");
  const int w = images.front()->width;
  const int h = images.front()->height;
  Tensor out(Shape{static_cast<int>(images.size()), 3, h, w});
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Raster& r = *images[n];
    if (r.width != w || r.height != h) throw ShapeError("normalize_batch: images differ in size");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) out.at(static_cast<int>(n), c, y, x) = r.at(x, y, c) / 255.0;
  }
  return out;
}

}  // namespace pcbdet
