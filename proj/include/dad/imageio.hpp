#ifndef DAD_IMAGEIO_HPP
#define DAD_IMAGEIO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dad/tensor.hpp"

namespace dad {

// 8-bit image, interleaved rows (HWC); channels is 1 (gray) or 3 (RGB).
struct ImageU8 {
  Index height = 0, width = 0, channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(Index y, Index x, Index c) const {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
};

ImageU8 read_png(const std::string& path, Index force_channels = 0);
void write_png(const std::string& path, const ImageU8& img);

// Conversions between 8-bit images and [C,H,W] float-range tensors in [0,1].
template <typename S>
Tensor<S> image_to_tensor(const ImageU8& img) {
  Tensor<S> t({img.channels, img.height, img.width});
  for (Index c = 0; c < img.channels; ++c)
    for (Index y = 0; y < img.height; ++y)
      for (Index x = 0; x < img.width; ++x)
        t[(c * img.height + y) * img.width + x] = static_cast<S>(img.at(y, x, c)) / S(255);
  return t;
}

template <typename S>
ImageU8 tensor_to_image(const Tensor<S>& t) {
  DAD_CHECK(t.rank() == 3, ShapeError, "tensor_to_image: expects [C,H,W]");
  ImageU8 img;
  img.channels = t.dim(0);
  img.height = t.dim(1);
  img.width = t.dim(2);
  img.pixels.resize(static_cast<std::size_t>(t.numel()));
  for (Index c = 0; c < img.channels; ++c)
    for (Index y = 0; y < img.height; ++y)
      for (Index x = 0; x < img.width; ++x) {
        double v = std::lround(255.0 * std::clamp(double(t[(c * img.height + y) * img.width + x]), 0.0, 1.0));
        img.pixels[static_cast<std::size_t>((y * img.width + x) * img.channels + c)] =
            static_cast<std::uint8_t>(v);
      }
  return img;
}

// Blue-to-red heat colormap for the prediction overlays.
void heat_color(double v, std::uint8_t rgb[3]);
ImageU8 overlay_heatmap(const ImageU8& base_rgb, const std::vector<double>& values, double blend = 0.5);

}  // namespace dad

#endif  // DAD_IMAGEIO_HPP
