#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lanerob/common.hpp"

namespace lanerob {

/// Row-major 8-bit RGB image.
struct ImageFrame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  ImageFrame() = default;
  ImageFrame(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {
    if (w <= 0 || h <= 0) throw Error("image dimensions must be positive");
  }

  std::size_t index(int x, int y) const { return (static_cast<std::size_t>(y) * width + x) * 3; }
  std::uint8_t* at(int x, int y) { return pixels.data() + index(x, y); }
  const std::uint8_t* at(int x, int y) const { return pixels.data() + index(x, y); }

  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    auto* p = at(x, y);
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }

  bool valid() const { return width > 0 && height > 0 && pixels.size() == static_cast<std::size_t>(width) * height * 3; }
  friend bool operator==(const ImageFrame&, const ImageFrame&) = default;
};

/// Single-channel image with real-valued intensities in gray levels.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  const double* row(int y) const { return values.data() + static_cast<std::size_t>(y) * width; }
};

/// Per-pixel boolean mask (stored as bytes for cheap iteration).
struct PixelMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> on;

  PixelMask() = default;
  PixelMask(int w, int h) : width(w), height(h), on(static_cast<std::size_t>(w) * h, 0) {}

  bool at(int x, int y) const { return on[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v = true) { on[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : on) n += v != 0;
    return n;
  }
};

inline GrayImage to_gray(const ImageFrame& f) {
  GrayImage g(f.width, f.height);
  const std::size_t n = static_cast<std::size_t>(f.width) * f.height;
  for (std::size_t i = 0; i < n; ++i) {
    const auto* p = f.pixels.data() + 3 * i;
    g.values[i] = (static_cast<double>(p[0]) + p[1] + p[2]) / 3.0;
  }
  return g;
}

/// Quantizes a gray image into an RGB frame with equal channels.
inline ImageFrame gray_to_frame(const GrayImage& g) {
  ImageFrame f(g.width, g.height);
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    const auto v = static_cast<std::uint8_t>(std::lround(clamp_gray(g.values[i])));
    f.pixels[3 * i] = f.pixels[3 * i + 1] = f.pixels[3 * i + 2] = v;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Netpbm encoding (binary P5 / P6)

inline std::string encode_pgm(int width, int height, const std::vector<std::uint8_t>& gray) {
  if (gray.size() != static_cast<std::size_t>(width) * height) throw Error("pgm: sample count mismatch");
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(gray.data()), gray.size());
  return out;
}

/// Gray encoding of an RGB frame (channel mean, rounded).
inline std::string encode_pgm(const ImageFrame& f) {
  std::vector<std::uint8_t> g(static_cast<std::size_t>(f.width) * f.height);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto* p = f.pixels.data() + 3 * i;
    g[i] = static_cast<std::uint8_t>((p[0] + p[1] + p[2] + 1) / 3);
  }
  return encode_pgm(f.width, f.height, g);
}

inline std::string encode_ppm(const ImageFrame& f) {
  std::string out = "P6\n" + std::to_string(f.width) + " " + std::to_string(f.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(f.pixels.data()), f.pixels.size());
  return out;
}

namespace detail {

inline int read_pnm_int(std::istream& in) {
  int c = in.peek();
  while (c == ' ' || c == '\n' || c == '\r' || c == '\t' || c == '#') {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else {
      in.get();
    }
    c = in.peek();
  }
  int v = 0;
  if (!(in >> v)) throw Error("pnm: malformed header");
  return v;
}

}  // namespace detail

struct DecodedPnm {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> samples;
};

inline DecodedPnm decode_pnm(std::string_view data) {
  std::istringstream in{std::string(data)};
  std::string magic;
  in >> magic;
  DecodedPnm out;
  if (magic == "P5") {
    out.channels = 1;
  } else if (magic == "P6") {
    out.channels = 3;
  } else {
    throw Error("pnm: unsupported magic '" + magic + "'");
  }
  out.width = detail::read_pnm_int(in);
  out.height = detail::read_pnm_int(in);
  const int maxval = detail::read_pnm_int(in);
  if (out.width <= 0 || out.height <= 0 || maxval != 255) throw Error("pnm: unsupported dimensions or depth");
  in.get();  // single whitespace after maxval
  out.samples.resize(static_cast<std::size_t>(out.width) * out.height * out.channels);
  in.read(reinterpret_cast<char*>(out.samples.data()), static_cast<std::streamsize>(out.samples.size()));
  if (in.gcount() != static_cast<std::streamsize>(out.samples.size())) throw Error("pnm: truncated pixel data");
  return out;
}

inline ImageFrame decode_frame(std::string_view data) {
  auto pnm = decode_pnm(data);
  ImageFrame f(pnm.width, pnm.height);
  if (pnm.channels == 3) {
    f.pixels = std::move(pnm.samples);
  } else {
    for (std::size_t i = 0; i < pnm.samples.size(); ++i) {
      f.pixels[3 * i] = f.pixels[3 * i + 1] = f.pixels[3 * i + 2] = pnm.samples[i];
    }
  }
  return f;
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Base64 (RFC 4648, padded)

inline std::string base64_encode(std::string_view bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const auto n = (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16) |
                   (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8) |
                   static_cast<unsigned char>(bytes[i + 2]);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t n = static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16;
    if (rest == 2) n |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += rest == 2 ? kAlphabet[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

inline std::string base64_decode(std::string_view text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw Error("base64: length not a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::array<int, 4> v{};
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
      } else {
        v[k] = value(c);
        if (v[k] < 0 || pad > 0) throw Error("base64: invalid character");
      }
    }
    const std::uint32_t n = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out += static_cast<char>((n >> 16) & 0xff);
    if (pad < 2) out += static_cast<char>((n >> 8) & 0xff);
    if (pad < 1) out += static_cast<char>(n & 0xff);
  }
  return out;
}

}  // namespace lanerob
