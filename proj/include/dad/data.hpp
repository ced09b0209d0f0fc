#ifndef DAD_DATA_HPP
#define DAD_DATA_HPP

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dad/conv.hpp"
#include "dad/imageio.hpp"

namespace dad {

// One image/mask pair, resized to the working resolution. The mask is
// strictly binary after thresholding at 127/255.
template <typename S>
struct SamplePair {
  Tensor<S> image;  // [3,H,W] in [0,1]
  Tensor<S> mask;   // [1,H,W] in {0,1}
  std::string image_id;
  bool resize_flagged = false;  // image/mask disagreed in size on disk
};

namespace data_detail {
inline std::map<std::string, std::string> stems_in(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;  // stem -> path, map keeps ids sorted
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") out[e.path().stem().string()] = e.path().string();
  }
  return out;
}
}  // namespace data_detail

// Load every image/mask pair below `dir` (expects images/ and masks/ with
// matching PNG stems), in deterministic alphabetical order.
template <typename S>
std::vector<SamplePair<S>> load_dataset(const std::string& dir, Index image_size) {
  namespace fs = std::filesystem;
  fs::path root(dir);
  DAD_CHECK(fs::is_directory(root / "images") && fs::is_directory(root / "masks"), ValidationError,
            "dataset '" + dir + "' must contain images/ and masks/");
  auto images = data_detail::stems_in(root / "images");
  auto masks = data_detail::stems_in(root / "masks");
  DAD_CHECK(!images.empty(), ValidationError, "dataset '" + dir + "' has no images");

  std::string unmatched;
  for (const auto& [stem, p] : images)
    if (!masks.count(stem)) unmatched += " images/" + stem;
  for (const auto& [stem, p] : masks)
    if (!images.count(stem)) unmatched += " masks/" + stem;
  DAD_CHECK(unmatched.empty(), ValidationError, "dataset '" + dir + "' has unmatched stems:" + unmatched);

  std::vector<SamplePair<S>> out;
  for (const auto& [stem, ipath] : images) {
    ImageU8 img = read_png(ipath, 3);
    ImageU8 msk = read_png(masks.at(stem), 1);
    SamplePair<S> s;
    s.image_id = stem;
    s.resize_flagged = (img.height != msk.height || img.width != msk.width);

    Tensor<S> it = image_to_tensor<S>(img).reshaped({1, 3, img.height, img.width});
    s.image = resize_bilinear_tensor(it, image_size, image_size).reshaped({3, image_size, image_size});

    Tensor<S> mt = image_to_tensor<S>(msk).reshaped({1, 1, msk.height, msk.width});
    Tensor<S> mr = resize_nearest_tensor(mt, image_size, image_size).reshaped({1, image_size, image_size});
    for (Index i = 0; i < mr.numel(); ++i) mr[i] = mr[i] > S(127.0 / 255.0) ? S(1) : S(0);
    s.mask = std::move(mr);
    out.push_back(std::move(s));
  }
  return out;
}

// Stack samples into [B,3,H,W] images and [B,1,H,W] masks.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> stack_samples(const std::vector<SamplePair<S>>& set,
                                              const std::vector<std::size_t>& idx) {
  DAD_CHECK(!idx.empty(), ValidationError, "stack_samples: empty batch");
  Index h = set[idx[0]].image.dim(1), w = set[idx[0]].image.dim(2);
  Tensor<S> images({static_cast<Index>(idx.size()), 3, h, w});
  Tensor<S> masks({static_cast<Index>(idx.size()), 1, h, w});
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& s = set[idx[k]];
    std::copy(s.image.data(), s.image.data() + s.image.numel(), images.data() + Index(k) * 3 * h * w);
    std::copy(s.mask.data(), s.mask.data() + s.mask.numel(), masks.data() + Index(k) * h * w);
  }
  return {std::move(images), std::move(masks)};
}

// ---------------------------------------------------------------------------
// Synthetic data: random ellipses/rectangles on textured noise. Good enough
// to overfit on and fully offline.
// ---------------------------------------------------------------------------

template <typename S>
SamplePair<S> make_synthetic_pair(Rng& rng, Index size, const std::string& image_id) {
  SamplePair<S> s;
  s.image_id = image_id;
  s.image = Tensor<S>({3, size, size});
  s.mask = Tensor<S>({1, size, size});

  double fx = rng.uniform(0.05, 0.25), fy = rng.uniform(0.05, 0.25);
  double phase = rng.uniform(0.0, 6.28);
  double bg[3] = {rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5)};
  double fgc[3] = {rng.uniform(0.6, 0.95), rng.uniform(0.6, 0.95), rng.uniform(0.6, 0.95)};

  bool ellipse = rng.uniform() < 0.5;
  double cx = rng.uniform(0.3, 0.7) * double(size);
  double cy = rng.uniform(0.3, 0.7) * double(size);
  double rx = rng.uniform(0.15, 0.3) * double(size);
  double ry = rng.uniform(0.15, 0.3) * double(size);

  for (Index y = 0; y < size; ++y)
    for (Index x = 0; x < size; ++x) {
      bool inside = ellipse ? (std::pow((x - cx) / rx, 2) + std::pow((y - cy) / ry, 2) <= 1.0)
                            : (std::abs(x - cx) <= rx && std::abs(y - cy) <= ry);
      s.mask[y * size + x] = inside ? S(1) : S(0);
      double texture = 0.12 * std::sin(fx * x + phase) * std::cos(fy * y) + 0.08 * rng.normal();
      for (Index c = 0; c < 3; ++c) {
        double v = (inside ? fgc[c] : bg[c]) + texture;
        s.image[(c * size + y) * size + x] = static_cast<S>(std::clamp(v, 0.0, 1.0));
      }
    }
  return s;
}

template <typename S>
std::vector<SamplePair<S>> make_synthetic_dataset(Index count, Index size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SamplePair<S>> out;
  for (Index i = 0; i < count; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "synth_%04d", static_cast<int>(i));
    out.push_back(make_synthetic_pair<S>(rng, size, buf));
  }
  return out;
}

// Write a synthetic dataset to disk in the images/ + masks/ layout.
template <typename S>
void write_synthetic_dataset(const std::string& dir, Index count, Index size, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");
  auto set = make_synthetic_dataset<S>(count, size, seed);
  for (const auto& s : set) {
    write_png((fs::path(dir) / "images" / (s.image_id + ".png")).string(), tensor_to_image(s.image));
    write_png((fs::path(dir) / "masks" / (s.image_id + ".png")).string(), tensor_to_image(s.mask));
  }
}

}  // namespace dad

#endif  // DAD_DATA_HPP
