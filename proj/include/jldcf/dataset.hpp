#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "jldcf/image_io.hpp"
#include "jldcf/jl.hpp"
#include "jldcf/random.hpp"

namespace jldcf {

/// Directory layout: <root>/RGB, <root>/depth, <root>/GT, paired by stem.
struct DatasetSpec {
  std::filesystem::path root;
  std::string rgb_dir = "RGB";
  std::string depth_dir = "depth";
  std::string gt_dir = "GT";
};

/// Paths of one RGB / depth / ground-truth triple.
struct SampleTriple {
  std::string stem;
  std::filesystem::path rgb;
  std::filesystem::path depth;
  std::filesystem::path gt;
};

struct IngestResult {
  std::vector<SampleTriple> samples;  // lexicographic by stem
  std::vector<std::string> warnings;
};

namespace detail {

inline std::map<std::string, std::filesystem::path> images_by_stem(
    const std::filesystem::path& dir, std::vector<std::string>& warnings) {
  if (!std::filesystem::is_directory(dir)) throw DataError("missing directory " + dir.string());
  std::map<std::string, std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
    const auto stem = entry.path().stem().string();
    auto [it, inserted] = out.emplace(stem, entry.path());
    if (!inserted) {
      // keep the lexicographically smallest file name for determinism
      if (entry.path().filename() < it->second.filename()) it->second = entry.path();
      warnings.push_back("duplicate stem '" + stem + "' in " + dir.string());
    }
  }
  return out;
}

}  // namespace detail

/// Pairs files by stem. Stems missing from any directory are reported and
/// skipped; an empty intersection is an error.
inline IngestResult ingest(const DatasetSpec& spec) {
  IngestResult result;
  const auto rgb = detail::images_by_stem(spec.root / spec.rgb_dir, result.warnings);
  const auto depth = detail::images_by_stem(spec.root / spec.depth_dir, result.warnings);
  const auto gt = detail::images_by_stem(spec.root / spec.gt_dir, result.warnings);
  std::set<std::string> all;
  for (const auto* m : {&rgb, &depth, &gt}) {
    for (const auto& [stem, path] : *m) all.insert(stem);
  }
  for (const auto& stem : all) {
    const bool in_rgb = rgb.count(stem), in_depth = depth.count(stem), in_gt = gt.count(stem);
    if (in_rgb && in_depth && in_gt) {
      result.samples.push_back({stem, rgb.at(stem), depth.at(stem), gt.at(stem)});
    } else {
      std::string missing;
      if (!in_rgb) missing += " " + spec.rgb_dir;
      if (!in_depth) missing += " " + spec.depth_dir;
      if (!in_gt) missing += " " + spec.gt_dir;
      result.warnings.push_back("stem '" + stem + "' skipped, missing from:" + missing);
    }
  }
  if (result.samples.empty()) {
    throw DataError("no stem is present in all of " + spec.rgb_dir + ", " + spec.depth_dir +
                    ", " + spec.gt_dir + " under " + spec.root.string());
  }
  return result;
}

/// Resizes a single-image plane stack (C x H x W) with aligned-corners
/// bilinear interpolation.
inline std::vector<double> resize_planes(const std::vector<double>& src, std::int64_t channels,
                                         std::int64_t h, std::int64_t w, std::int64_t oh,
                                         std::int64_t ow) {
  NoGradGuard guard;
  auto t = resize_bilinear(Tensor<double>({1, channels, h, w}, src), oh, ow);
  return t.vec();
}

/// First channel of an image as raw values.
inline DepthMap depth_from_image(const Image& img) {
  DepthMap d{img.height, img.width, {}};
  d.values.reserve(static_cast<std::size_t>(img.height * img.width));
  for (std::int64_t r = 0; r < img.height; ++r) {
    for (std::int64_t c = 0; c < img.width; ++c) d.values.push_back(img.at(r, c, 0));
  }
  return d;
}

/// Binary ground truth: stored value >= half the range.
inline std::vector<std::uint8_t> binary_gt(const Image& img) {
  std::vector<std::uint8_t> g;
  g.reserve(static_cast<std::size_t>(img.height * img.width));
  const double half = (img.max_value + 1) / 2.0;
  for (std::int64_t r = 0; r < img.height; ++r) {
    for (std::int64_t c = 0; c < img.width; ++c) g.push_back(img.at(r, c, 0) >= half ? 1 : 0);
  }
  return g;
}

/// RGB planes on the [0, 255] scale (gray sources are replicated).
inline std::vector<double> rgb_planes(const Image& img) {
  const auto plane = img.height * img.width;
  std::vector<double> out(static_cast<std::size_t>(3 * plane));
  const double to8 = 255.0 / img.max_value;
  for (std::int64_t ch = 0; ch < 3; ++ch) {
    const auto src_ch = img.channels >= 3 ? ch : 0;
    for (std::int64_t i = 0; i < plane; ++i) {
      out[ch * plane + i] = img.values[i * img.channels + src_ch] * to8;
    }
  }
  return out;
}

/// Network-ready tensors of one sample at the fixed input size.
template <class T>
struct PreparedSample {
  std::string stem;
  Tensor<T> rgb;     // 1 x 3 x H x H, [0, 255]
  Tensor<T> depth3;  // 1 x 3 x H x H, [0, 255]
  Tensor<T> gt;      // 1 x 1 x H x H, soft resize of the binary GT
  std::int64_t native_height = 0;
  std::int64_t native_width = 0;
  std::vector<std::uint8_t> gt_native;  // binary, native resolution
};

template <class T>
Tensor<T> to_tensor(const std::vector<double>& v, Shape shape) {
  return Tensor<T>(std::move(shape), std::vector<T>(v.begin(), v.end()));
}

template <class T>
PreparedSample<T> prepare_images(const std::string& stem, const Image& rgb_img,
                                 const Image& depth_img, const Image& gt_img,
                                 std::int64_t input_size) {
  if (rgb_img.height != gt_img.height || rgb_img.width != gt_img.width ||
      depth_img.height != gt_img.height || depth_img.width != gt_img.width) {
    throw DataError("sample '" + stem + "': RGB, depth and GT sizes differ");
  }
  PreparedSample<T> s;
  s.stem = stem;
  s.native_height = gt_img.height;
  s.native_width = gt_img.width;
  const auto h = gt_img.height, w = gt_img.width, n = input_size;
  s.rgb = to_tensor<T>(resize_planes(rgb_planes(rgb_img), 3, h, w, n, n), {1, 3, n, n});
  const auto depth = depth_from_image(depth_img);
  DepthMap resized{n, n, resize_planes(depth.values, 1, h, w, n, n)};
  s.depth3 = depth_to_3ch<T>(resized);
  s.gt_native = binary_gt(gt_img);
  std::vector<double> g(s.gt_native.begin(), s.gt_native.end());
  s.gt = to_tensor<T>(resize_planes(g, 1, h, w, n, n), {1, 1, n, n});
  return s;
}

template <class T>
PreparedSample<T> prepare(const SampleTriple& t, std::int64_t input_size) {
  return prepare_images<T>(t.stem, read_image(t.rgb.string()), read_image(t.depth.string()),
                           read_image(t.gt.string()), input_size);
}

template <class T>
std::vector<PreparedSample<T>> prepare_all(const std::vector<SampleTriple>& triples,
                                           std::int64_t input_size) {
  std::vector<PreparedSample<T>> out;
  out.reserve(triples.size());
  for (const auto& t : triples) out.push_back(prepare<T>(t, input_size));
  return out;
}

/// Mirrored copy of a prepared sample (all maps flipped left-right).
template <class T>
PreparedSample<T> mirrored(const PreparedSample<T>& s) {
  PreparedSample<T> m = s;
  m.rgb = mirror_horizontal(s.rgb);
  m.depth3 = mirror_horizontal(s.depth3);
  m.gt = mirror_horizontal(s.gt);
  for (std::int64_t r = 0; r < s.native_height; ++r) {
    auto row = m.gt_native.begin() + r * s.native_width;
    std::reverse(row, row + s.native_width);
  }
  return m;
}

struct SyntheticOptions {
  std::int64_t count = 8;
  std::int64_t size = 64;
  std::uint64_t seed = 7;
  bool depth16 = false;          // store depth as 16-bit PNG
  double distractor_rate = 0.7;  // chance of each single-modality distractor
};

/// Writes a corpus of random scenes into <root>/{RGB,depth,GT}. The salient
/// object is the shape that stands out in both modalities; optional
/// distractors stand out in only one (a colored patch lying on the
/// background plane, or a raised patch colored like the background).
inline std::vector<std::string> generate_synthetic(const std::filesystem::path& root,
                                                   const SyntheticOptions& opt) {
  namespace fs = std::filesystem;
  for (const char* d : {"RGB", "depth", "GT"}) fs::create_directories(root / d);
  Rng rng(opt.seed);
  const auto n = opt.size;
  std::vector<std::string> stems;

  struct Shape2D {
    bool ellipse;
    double cx, cy, rx, ry;
    bool contains(double x, double y) const {
      const double dx = (x - cx) / rx, dy = (y - cy) / ry;
      return ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
    }
  };
  auto random_shape = [&](double min_r, double max_r) {
    Shape2D s;
    s.ellipse = rng.uniform() < 0.5;
    s.rx = rng.uniform(min_r, max_r) * n;
    s.ry = rng.uniform(min_r, max_r) * n;
    s.cx = rng.uniform(s.rx, n - s.rx);
    s.cy = rng.uniform(s.ry, n - s.ry);
    return s;
  };
  auto random_color = [&]() {
    return std::array<double, 3>{rng.uniform(0, 255), rng.uniform(0, 255), rng.uniform(0, 255)};
  };

  for (std::int64_t i = 0; i < opt.count; ++i) {
    const auto bg_a = random_color();
    const auto bg_b = random_color();
    const auto obj_color = random_color();
    const double bg_depth = rng.uniform(0.15, 0.35);
    const double obj_depth = rng.uniform(0.7, 0.95);
    const auto object = random_shape(0.12, 0.3);
    const bool rgb_distractor = rng.uniform() < opt.distractor_rate;
    const bool depth_distractor = rng.uniform() < opt.distractor_rate;
    const auto rgb_d = random_shape(0.08, 0.2);
    const auto rgb_d_color = random_color();
    const auto depth_d = random_shape(0.08, 0.2);
    const double depth_d_value = rng.uniform(0.7, 0.95);

    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(3 * n * n));
    std::vector<std::uint16_t> depth(static_cast<std::size_t>(n * n));
    std::vector<std::uint8_t> gt(static_cast<std::size_t>(n * n));
    const double depth_max = opt.depth16 ? 65535.0 : 255.0;
    for (std::int64_t y = 0; y < n; ++y) {
      for (std::int64_t x = 0; x < n; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        const double t = static_cast<double>(x + y) / (2.0 * n);
        std::array<double, 3> color{};
        for (int ch = 0; ch < 3; ++ch) color[ch] = bg_a[ch] * (1 - t) + bg_b[ch] * t;
        double d = bg_depth + 0.1 * static_cast<double>(y) / n;
        if (rgb_distractor && rgb_d.contains(px, py)) color = rgb_d_color;
        if (depth_distractor && depth_d.contains(px, py)) d = depth_d_value;
        const bool in_object = object.contains(px, py);
        if (in_object) {
          color = obj_color;
          d = obj_depth;
        }
        for (int ch = 0; ch < 3; ++ch) {
          const double noisy = color[ch] + rng.uniform(-12.0, 12.0);
          rgb[(y * n + x) * 3 + ch] =
              static_cast<std::uint8_t>(std::clamp(std::lround(noisy), 0L, 255L));
        }
        const double dn = std::clamp(d + rng.uniform(-0.02, 0.02), 0.0, 1.0);
        depth[y * n + x] = static_cast<std::uint16_t>(std::lround(dn * depth_max));
        gt[y * n + x] = in_object ? 255 : 0;
      }
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "syn_%05lld", static_cast<long long>(i));
    const std::string stem = buf;
    write_png((root / "RGB" / (stem + ".png")).string(), n, n, 3, rgb);
    if (opt.depth16) {
      write_png16((root / "depth" / (stem + ".png")).string(), n, n, depth);
    } else {
      std::vector<std::uint8_t> d8(depth.begin(), depth.end());
      write_png((root / "depth" / (stem + ".png")).string(), n, n, 1, d8);
    }
    write_png((root / "GT" / (stem + ".png")).string(), n, n, 1, gt);
    stems.push_back(stem);
  }
  return stems;
}

}  // namespace jldcf
