#include "dad/imageio.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>

namespace dad {

ImageU8 read_png(const std::string& path, Index force_channels) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw IoError("cannot read PNG '" + path + "': " + png.message);

  Index channels = force_channels;
  if (channels == 0) channels = PNG_IMAGE_PIXEL_CHANNELS(png.format) >= 3 ? 3 : 1;
  png.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

  ImageU8 img;
  img.height = png.height;
  img.width = png.width;
  img.channels = channels;
  img.pixels.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw IoError("cannot decode PNG '" + path + "': " + msg);
  }
  return img;
}

void write_png(const std::string& path, const ImageU8& img) {
  DAD_CHECK(img.channels == 1 || img.channels == 3, ValidationError,
            "write_png: only gray or RGB images are supported");
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, img.pixels.data(), 0, nullptr))
    throw IoError("cannot write PNG '" + path + "': " + png.message);
}

void heat_color(double v, std::uint8_t rgb[3]) {
  v = std::clamp(v, 0.0, 1.0);
  auto ramp = [](double x) { return std::clamp(x, 0.0, 1.0); };
  double r = ramp(1.5 - std::abs(4.0 * v - 3.0));
  double g = ramp(1.5 - std::abs(4.0 * v - 2.0));
  double b = ramp(1.5 - std::abs(4.0 * v - 1.0));
  rgb[0] = static_cast<std::uint8_t>(std::lround(255.0 * r));
  rgb[1] = static_cast<std::uint8_t>(std::lround(255.0 * g));
  rgb[2] = static_cast<std::uint8_t>(std::lround(255.0 * b));
}

ImageU8 overlay_heatmap(const ImageU8& base_rgb, const std::vector<double>& values, double blend) {
  DAD_CHECK(base_rgb.channels == 3, ValidationError, "overlay_heatmap: base image must be RGB");
  DAD_CHECK(static_cast<Index>(values.size()) == base_rgb.height * base_rgb.width, ShapeError,
            "overlay_heatmap: value count does not match the image");
  ImageU8 out = base_rgb;
  for (Index i = 0; i < base_rgb.height * base_rgb.width; ++i) {
    std::uint8_t rgb[3];
    heat_color(values[static_cast<std::size_t>(i)], rgb);
    for (Index c = 0; c < 3; ++c) {
      double mixed = (1.0 - blend) * base_rgb.pixels[static_cast<std::size_t>(i * 3 + c)] +
                     blend * rgb[c];
      out.pixels[static_cast<std::size_t>(i * 3 + c)] =
          static_cast<std::uint8_t>(std::lround(std::clamp(mixed, 0.0, 255.0)));
    }
  }
  return out;
}

}  // namespace dad
