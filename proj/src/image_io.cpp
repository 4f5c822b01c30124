#include "april/image_io.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace april {

namespace {

std::uint32_t crc32(const unsigned char* data, std::size_t n, std::uint32_t crc = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc ^= 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

std::uint32_t adler32(const unsigned char* data, std::size_t n) {
  std::uint32_t a = 1, b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    a = (a + data[i]) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

void put_chunk(std::ofstream& out, const char type[4], const std::vector<unsigned char>& data) {
  std::vector<unsigned char> head;
  put_be32(head, static_cast<std::uint32_t>(data.size()));
  out.write(reinterpret_cast<const char*>(head.data()), 4);
  out.write(type, 4);
  if (!data.empty()) out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  std::uint32_t crc = crc32(reinterpret_cast<const unsigned char*>(type), 4);
  if (!data.empty()) crc = crc32(data.data(), data.size(), crc);
  std::vector<unsigned char> tail;
  put_be32(tail, crc);
  out.write(reinterpret_cast<const char*>(tail.data()), 4);
}

// zlib stream made of stored (uncompressed) DEFLATE blocks
std::vector<unsigned char> zlib_stored(const std::vector<unsigned char>& raw) {
  std::vector<unsigned char> z;
  z.push_back(0x78);
  z.push_back(0x01);
  std::size_t pos = 0;
  do {
    const std::size_t block = std::min<std::size_t>(raw.size() - pos, 65535);
    const bool final = pos + block == raw.size();
    z.push_back(final ? 1 : 0);
    z.push_back(static_cast<unsigned char>(block & 0xFF));
    z.push_back(static_cast<unsigned char>(block >> 8));
    z.push_back(static_cast<unsigned char>(~block & 0xFF));
    z.push_back(static_cast<unsigned char>((~block >> 8) & 0xFF));
    z.insert(z.end(), raw.begin() + static_cast<long>(pos), raw.begin() + static_cast<long>(pos + block));
    pos += block;
  } while (pos < raw.size());
  put_be32(z, adler32(raw.data(), raw.size()));
  return z;
}

void write_png(const std::string& path, int width, int height, int channels,
               const std::vector<unsigned char>& pixels) {
  if (static_cast<long>(pixels.size()) != static_cast<long>(width) * height * channels)
    throw std::invalid_argument("png: pixel buffer size does not match dimensions");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("png: cannot open '" + path + "' for writing");

  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  out.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<unsigned char> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(width));
  put_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);                                 // bit depth
  ihdr.push_back(channels == 3 ? 2 : 0);             // colour type
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(out, "IHDR", ihdr);

  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + static_cast<std::size_t>(width) * channels));
  for (int i = 0; i < height; ++i) {
    raw.push_back(0);  // filter: none
    const auto* row = pixels.data() + static_cast<std::size_t>(i) * width * channels;
    raw.insert(raw.end(), row, row + static_cast<std::size_t>(width) * channels);
  }
  put_chunk(out, "IDAT", zlib_stored(raw));
  put_chunk(out, "IEND", {});
  if (!out) throw std::runtime_error("png: write failed for '" + path + "'");
}

unsigned char to_byte(double v) {
  const double x = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<unsigned char>(x);
}

}  // namespace

void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<unsigned char>& rgb) {
  write_png(path, width, height, 3, rgb);
}

void write_png_gray(const std::string& path, int width, int height,
                    const std::vector<unsigned char>& gray) {
  write_png(path, width, height, 1, gray);
}

std::vector<unsigned char> to_rgb8(const Tensor& image) {
  if (image.ndim() != 3 || image.dim(2) != 3)
    throw std::invalid_argument("to_rgb8 expects an {H,W,3} tensor");
  std::vector<unsigned char> out(static_cast<std::size_t>(image.size()));
  for (long i = 0; i < image.size(); ++i) out[static_cast<std::size_t>(i)] = to_byte(image[i]);
  return out;
}

std::vector<unsigned char> to_gray8(const Tensor& map) {
  const bool ok = map.ndim() == 2 || (map.ndim() == 3 && map.dim(2) == 1);
  if (!ok) throw std::invalid_argument("to_gray8 expects an {H,W} or {H,W,1} tensor");
  std::vector<unsigned char> out(static_cast<std::size_t>(map.size()));
  for (long i = 0; i < map.size(); ++i) out[static_cast<std::size_t>(i)] = to_byte(map[i]);
  return out;
}

void save_png(const std::string& path, const Tensor& image) {
  write_png_rgb(path, image.dim(1), image.dim(0), to_rgb8(image));
}

void save_png_gray(const std::string& path, const Tensor& map) {
  write_png_gray(path, map.dim(1), map.dim(0), to_gray8(map));
}

}  // namespace april
