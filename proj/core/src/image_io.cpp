#include "dggx/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string_view>

#include "dggx/errors.hpp"

namespace dggx {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number() {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + (bytes_[pos_] - '0');
      if (++digits > 9) throw FormatError("pnm: header value too large");
      ++pos_;
    }
    if (digits == 0) throw FormatError("pnm: malformed header");
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void single_space() {
    if (pos_ >= bytes_.size()) throw FormatError("pnm: truncated header");
    const auto c = bytes_[pos_];
    if (c != ' ' && c != '\t' && c != '\n' && c != '\r') throw FormatError("pnm: malformed header");
    ++pos_;
  }

  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t load_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void store_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

Image8 decode_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("pnm: expected binary P5 or P6 magic");
  }
  Image8 img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader header(bytes.subspan(2));
  img.width = header.number();
  img.height = header.number();
  const std::size_t maxval = header.number();
  header.single_space();
  if (img.width == 0 || img.height == 0) throw FormatError("pnm: zero extent");
  if (maxval != 255) throw FormatError("pnm: only maxval 255 is supported");
  const std::size_t offset = 2 + header.position();
  const std::size_t expected = img.width * img.height * img.channels;
  if (bytes.size() - offset < expected) throw FormatError("pnm: truncated raster");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                    bytes.begin() + static_cast<std::ptrdiff_t>(offset + expected));
  return img;
}

std::vector<std::uint8_t> encode_pnm(const Image8& image) {
  if (image.channels != 1 && image.channels != 3) throw FormatError("pnm: 1 or 3 channels required");
  if (image.pixels.size() != image.width * image.height * image.channels) {
    throw FormatError("pnm: pixel buffer does not match extents");
  }
  const std::string header = std::string(image.channels == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(image.width) + " " + std::to_string(image.height) +
                             "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

Image8 read_pnm(const std::filesystem::path& path) { return decode_pnm(read_file(path)); }

void write_pnm(const std::filesystem::path& path, const Image8& image) {
  write_file(path, encode_pnm(image));
}

Volume decode_volume(std::span<const std::uint8_t> bytes) {
  static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "VOL1", 4) != 0) {
    throw FormatError("volume: missing VOL1 magic");
  }
  Volume v;
  v.depth = load_u32(bytes.data() + 4);
  v.height = load_u32(bytes.data() + 8);
  v.width = load_u32(bytes.data() + 12);
  const std::size_t count = v.depth * v.height * v.width;
  if ((bytes.size() - 16) / 4 < count || bytes.size() - 16 != count * 4) {
    throw FormatError("volume: payload length does not match extents");
  }
  v.voxels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    v.voxels[i] = std::bit_cast<float>(load_u32(bytes.data() + 16 + 4 * i));
  }
  return v;
}

std::vector<std::uint8_t> encode_volume(const Volume& volume) {
  if (volume.voxels.size() != volume.depth * volume.height * volume.width) {
    throw FormatError("volume: voxel count does not match extents");
  }
  std::vector<std::uint8_t> out{'V', 'O', 'L', '1'};
  out.reserve(16 + 4 * volume.voxels.size());
  store_u32(out, static_cast<std::uint32_t>(volume.depth));
  store_u32(out, static_cast<std::uint32_t>(volume.height));
  store_u32(out, static_cast<std::uint32_t>(volume.width));
  for (float f : volume.voxels) store_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

Volume read_volume(const std::filesystem::path& path) { return decode_volume(read_file(path)); }

void write_volume(const std::filesystem::path& path, const Volume& volume) {
  write_file(path, encode_volume(volume));
}

GrayImage to_gray(const Image8& image) {
  GrayImage g{image.height, image.width, std::vector<double>(image.width * image.height)};
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < image.channels; ++c) acc += image.pixels[i * image.channels + c];
    g.values[i] = acc / (255.0 * static_cast<double>(image.channels));
  }
  return g;
}

Image8 to_image8(const GrayImage& image) {
  Image8 out{image.width, image.height, 1, std::vector<std::uint8_t>(image.values.size())};
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    const double v = std::clamp(image.values[i], 0.0, 1.0);
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PathError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PathError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw PathError("failed writing " + path.string());
}

}  // namespace dggx
