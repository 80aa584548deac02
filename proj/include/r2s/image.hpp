#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "r2s/common.hpp"
#include "r2s/tensor.hpp"

namespace r2s {

enum class Domain { kSim, kReal };

inline const char* domain_name(Domain d) { return d == Domain::kSim ? "sim" : "real"; }

// H x W x 3 float image in [0,1], row-major, interleaved channels.
struct Image {
  int width = 0;
  int height = 0;
  Domain domain = Domain::kSim;
  std::vector<float> data;  // height * width * 3

  Image() = default;
  Image(int w, int h, Domain d) : width(w), height(h), domain(d), data(static_cast<std::size_t>(w) * h * 3, 0.0f) {}

  float& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  std::int64_t pixels() const { return static_cast<std::int64_t>(width) * height; }

  void clamp01() {
    for (auto& v : data) v = std::min(1.0f, std::max(0.0f, v));
  }
};

inline bool same_pixels(const Image& a, const Image& b) {
  return a.width == b.width && a.height == b.height && a.data == b.data;
}

// Planar CHW tensor for the networks.
inline Tensor image_to_chw(const Image& img) {
  Tensor t({3, img.height, img.width});
  const std::int64_t plane = img.pixels();
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const std::int64_t p = static_cast<std::int64_t>(y) * img.width + x;
      for (int c = 0; c < 3; ++c) t[c * plane + p] = img.at(y, x, c);
    }
  return t;
}

inline Image chw_to_image(const Tensor& t, Domain domain) {
  if (t.rank() != 3 || t.dim(0) != 3) throw ShapeError("expected (3,H,W) tensor, got " + t.shape_str());
  Image img(t.dim(2), t.dim(1), domain);
  const std::int64_t plane = img.pixels();
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const std::int64_t p = static_cast<std::int64_t>(y) * img.width + x;
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = t[c * plane + p];
    }
  return img;
}

// Per-channel mean and std, the 6-vector used for domain statistics.
inline std::array<double, 6> channel_stats(const Image& img) {
  std::array<double, 6> stats{};
  const std::int64_t n = img.pixels();
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0, sq = 0.0;
    for (std::int64_t p = 0; p < n; ++p) {
      const double v = img.data[static_cast<std::size_t>(p) * 3 + c];
      sum += v;
      sq += v * v;
    }
    const double mean = sum / static_cast<double>(n);
    stats[static_cast<std::size_t>(c)] = mean;
    stats[static_cast<std::size_t>(c + 3)] = std::sqrt(std::max(0.0, sq / static_cast<double>(n) - mean * mean));
  }
  return stats;
}

inline double stats_distance(const std::array<double, 6>& a, const std::array<double, 6>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < 6; ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(d);
}

// PPM P6, maxval 255.
inline void write_ppm(const std::string& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::min(1.0f, std::max(0.0f, img.at(y, x, c)));
        row[static_cast<std::size_t>(x) * 3 + c] = static_cast<unsigned char>(v * 255.0f + 0.5f);
      }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw IoError("write failed: " + path);
}

inline Image read_ppm(const std::string& path, Domain domain) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255 || w <= 0 || h <= 0) throw IoError("unsupported PPM: " + path);
  is.get();  // single whitespace after header
  Image img(w, h, domain);
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!is) throw IoError("truncated PPM: " + path);
  for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = static_cast<float>(raw[i]) / 255.0f;
  return img;
}

}  // namespace r2s
