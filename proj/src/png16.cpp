#include "ebmri/png16.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>

namespace ebmri {

namespace {

std::uint32_t crc32(const std::uint8_t *data, std::size_t n, std::uint32_t crc = 0xffffffffu) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
  return crc;
}

void put_u32(std::vector<std::uint8_t> &v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 24));
  v.push_back(static_cast<std::uint8_t>(x >> 16));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}

void chunk(std::vector<std::uint8_t> &out, const char type[4],
           const std::vector<std::uint8_t> &payload) {
  put_u32(out, static_cast<std::uint32_t>(payload.size()));
  std::vector<std::uint8_t> body(type, type + 4);
  body.insert(body.end(), payload.begin(), payload.end());
  out.insert(out.end(), body.begin(), body.end());
  put_u32(out, crc32(body.data(), body.size()) ^ 0xffffffffu);
}

// zlib stream with stored (uncompressed) deflate blocks; enough for an
// archival image dump and keeps the writer dependency-free.
std::vector<std::uint8_t> zlib_store(const std::vector<std::uint8_t> &raw) {
  std::vector<std::uint8_t> z{0x78, 0x01};
  std::size_t pos = 0;
  do {
    const std::size_t n = std::min<std::size_t>(raw.size() - pos, 65535);
    const bool final = pos + n == raw.size();
    z.push_back(final ? 1 : 0);
    z.push_back(static_cast<std::uint8_t>(n & 0xff));
    z.push_back(static_cast<std::uint8_t>(n >> 8));
    z.push_back(static_cast<std::uint8_t>(~n & 0xff));
    z.push_back(static_cast<std::uint8_t>((~n >> 8) & 0xff));
    z.insert(z.end(), raw.begin() + static_cast<std::ptrdiff_t>(pos),
             raw.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
  } while (pos < raw.size());

  std::uint32_t a = 1, b = 0;
  for (std::uint8_t byte : raw) {
    a = (a + byte) % 65521;
    b = (b + a) % 65521;
  }
  put_u32(z, (b << 16) | a);
  return z;
}

} // namespace

void write_png16(const RealGrid &g, const std::string &path, double lo, double hi) {
  if (hi <= lo) {
    lo = 0.0;
    hi = max_abs(g);
    if (hi == 0.0) hi = 1.0;
  }

  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(g.rows()) * (1 + 2 * g.cols()));
  for (int r = 0; r < g.rows(); ++r) {
    raw.push_back(0); // filter: none
    for (int c = 0; c < g.cols(); ++c) {
      const double t = std::clamp((g(r, c) - lo) / (hi - lo), 0.0, 1.0);
      const auto v = static_cast<std::uint16_t>(std::lround(t * 65535.0));
      raw.push_back(static_cast<std::uint8_t>(v >> 8));
      raw.push_back(static_cast<std::uint8_t>(v & 0xff));
    }
  }

  std::vector<std::uint8_t> png{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(g.cols()));
  put_u32(ihdr, static_cast<std::uint32_t>(g.rows()));
  ihdr.push_back(16); // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  chunk(png, "IHDR", ihdr);
  chunk(png, "IDAT", zlib_store(raw));
  chunk(png, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write PNG: " + path);
  f.write(reinterpret_cast<const char *>(png.data()), static_cast<std::streamsize>(png.size()));
  if (!f) throw std::runtime_error("short PNG write: " + path);
}

} // namespace ebmri
