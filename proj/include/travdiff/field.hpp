#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace travdiff {

// Dense row-major float grid. Used for traversability maps, heatmaps,
// noise fields and single channels of observation images.
struct Field {
  int rows = 0;
  int cols = 0;
  std::vector<float> v;

  Field() = default;
  Field(int r, int c, float fill = 0.0f) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

  float& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  float at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  size_t size() const { return v.size(); }
  bool in_bounds(int r, int c) const { return r >= 0 && r < rows && c >= 0 && c < cols; }

  float max_value() const;
  float min_value() const;
  double mean_value() const;
};

// Three-channel observation image, channel-major.
struct Image {
  std::array<Field, 3> ch;
  int rows() const { return ch[0].rows; }
  int cols() const { return ch[0].cols; }
};

struct Pixel {
  int row = 0;
  int col = 0;
  bool operator==(const Pixel&) const = default;
};

// Continuous position in grid units (row, col order, subpixel allowed).
struct PointF {
  double row = 0.0;
  double col = 0.0;
  bool operator==(const PointF&) const = default;
};

inline double dist(const PointF& a, const PointF& b) {
  double dr = a.row - b.row, dc = a.col - b.col;
  return std::sqrt(dr * dr + dc * dc);
}

inline double dist(const Pixel& a, const Pixel& b) {
  double dr = a.row - b.row, dc = a.col - b.col;
  return std::sqrt(dr * dr + dc * dc);
}

// Raw little-endian float32 blob IO (the on-disk tensor format).
void write_f32_blob(const std::string& path, const float* data, size_t n);
std::vector<float> read_f32_blob(const std::string& path, size_t expect_n);

// 8-bit binary PGM, values clamped from [0,1].
void write_pgm(const std::string& path, const Field& f);
// 8-bit binary PPM from a three-channel image.
void write_ppm(const std::string& path, const Image& img);

// FNV-1a over raw bytes, used for manifest integrity hashes.
uint64_t fnv1a(const void* data, size_t n, uint64_t seed = 0xcbf29ce484222325ULL);
std::string hash_hex(uint64_t h);

}  // namespace travdiff
