#include "travdiff/field.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace travdiff {

float Field::max_value() const {
  float m = v.empty() ? 0.0f : v[0];
  for (float x : v) m = std::max(m, x);
  return m;
}

float Field::min_value() const {
  float m = v.empty() ? 0.0f : v[0];
  for (float x : v) m = std::min(m, x);
  return m;
}

double Field::mean_value() const {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (float x : v) s += x;
  return s / static_cast<double>(v.size());
}

void write_f32_blob(const std::string& path, const float* data, size_t n) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  size_t w = std::fwrite(data, sizeof(float), n, f);
  std::fclose(f);
  if (w != n) throw std::runtime_error("short write: " + path);
}

std::vector<float> read_f32_blob(const std::string& path, size_t expect_n) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open for read: " + path);
  std::vector<float> out(expect_n);
  size_t r = std::fread(out.data(), sizeof(float), expect_n, f);
  // Reject files with trailing bytes as well: size must match exactly.
  int extra = std::fgetc(f);
  std::fclose(f);
  if (r != expect_n || extra != EOF)
    throw std::runtime_error("blob size mismatch: " + path);
  return out;
}

static unsigned char to_byte(float x) {
  float c = std::clamp(x, 0.0f, 1.0f);
  return static_cast<unsigned char>(c * 255.0f + 0.5f);
}

void write_pgm(const std::string& path, const Field& f) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot open for write: " + path);
  std::fprintf(fp, "P5\n%d %d\n255\n", f.cols, f.rows);
  std::vector<unsigned char> row(f.cols);
  for (int r = 0; r < f.rows; ++r) {
    for (int c = 0; c < f.cols; ++c) row[c] = to_byte(f.at(r, c));
    std::fwrite(row.data(), 1, row.size(), fp);
  }
  std::fclose(fp);
}

void write_ppm(const std::string& path, const Image& img) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot open for write: " + path);
  std::fprintf(fp, "P6\n%d %d\n255\n", img.cols(), img.rows());
  std::vector<unsigned char> row(static_cast<size_t>(img.cols()) * 3);
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c)
      for (int k = 0; k < 3; ++k) row[c * 3 + k] = to_byte(img.ch[k].at(r, c));
    std::fwrite(row.data(), 1, row.size(), fp);
  }
  std::fclose(fp);
}

uint64_t fnv1a(const void* data, size_t n, uint64_t seed) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace travdiff
