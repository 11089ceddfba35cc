#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dggx {

/// 8-bit raster, interleaved channels (1 = grayscale, 3 = RGB), row-major.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;
};

/// Grayscale image of doubles, row-major.
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  double& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

/// 3-D scalar volume, slice-major ([D][H][W]).
struct Volume {
  std::size_t depth = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> voxels;
};

// Binary netpbm: P5 (grayscale) and P6 (RGB), maxval 255. Header comments
// are accepted on read; writes emit "P5\n<w> <h>\n255\n" and the raw bytes.
Image8 decode_pnm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pnm(const Image8& image);
Image8 read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Image8& image);

// "VOL1" raw volume: magic, three little-endian u32 extents D, H, W, then
// D*H*W little-endian float32 values.
Volume decode_volume(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_volume(const Volume& volume);
Volume read_volume(const std::filesystem::path& path);
void write_volume(const std::filesystem::path& path, const Volume& volume);

/// Luma-free conversion: the channel mean scaled to [0,1].
GrayImage to_gray(const Image8& image);
/// Values clamped to [0,1] and rounded to 8 bits.
Image8 to_image8(const GrayImage& image);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace dggx
