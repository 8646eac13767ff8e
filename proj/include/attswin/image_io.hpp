#pragma once

// PGM/PPM reading (plain P2/P3 and binary P5/P6, maxval up to 255), P5/P6
// writing, and image resizing (bilinear for images, nearest for masks).

#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace attswin {

struct PnmImage {
  int width = 0, height = 0, channels = 1, maxval = 255;
  std::vector<std::uint8_t> data;  // row-major, channel-last
};

namespace pnm {

// Next header token, skipping whitespace and # comments.
inline std::string next_token(std::istream& is, const std::string& path) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = is.get();
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw std::runtime_error("truncated header in " + path);
  return tok;
}

inline int header_int(std::istream& is, const std::string& path) {
  const std::string tok = next_token(is, path);
  try {
    return std::stoi(tok);
  } catch (...) {
    throw std::runtime_error("bad header value '" + tok + "' in " + path);
  }
}

}  // namespace pnm

inline PnmImage read_pnm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open image: " + path);
  const std::string magic = pnm::next_token(is, path);
  const bool ascii = magic == "P2" || magic == "P3";
  const bool binary = magic == "P5" || magic == "P6";
  if (!ascii && !binary) throw std::runtime_error("unsupported format '" + magic + "' in " + path);
  PnmImage img;
  img.channels = (magic == "P3" || magic == "P6") ? 3 : 1;
  img.width = pnm::header_int(is, path);
  img.height = pnm::header_int(is, path);
  img.maxval = pnm::header_int(is, path);
  if (img.width <= 0 || img.height <= 0) throw std::runtime_error("bad image extents in " + path);
  if (img.maxval <= 0 || img.maxval > 255)
    throw std::runtime_error("unsupported maxval " + std::to_string(img.maxval) + " in " + path);
  const std::size_t n =
      static_cast<std::size_t>(img.width) * img.height * static_cast<std::size_t>(img.channels);
  img.data.resize(n);
  if (binary) {
    // a single whitespace byte separates the header from raster data
    is.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
      throw std::runtime_error("truncated raster data in " + path);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const int v = pnm::header_int(is, path);
      if (v < 0 || v > img.maxval) throw std::runtime_error("sample out of range in " + path);
      img.data[i] = static_cast<std::uint8_t>(v);
    }
  }
  return img;
}

inline void write_pgm(const std::string& path, int width, int height,
                      const std::vector<std::uint8_t>& data) {
  if (data.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("write_pgm: data size does not match extents");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "P5\n" << width << " " << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline void write_ppm(const std::string& path, int width, int height,
                      const std::vector<std::uint8_t>& data) {
  if (data.size() != static_cast<std::size_t>(width) * height * 3)
    throw std::invalid_argument("write_ppm: data size does not match extents");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "P6\n" << width << " " << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!os) throw std::runtime_error("write failed: " + path);
}

// Bilinear resize of a channel-last real image; sample centers align
// (src = (dst + 0.5) * in/out - 0.5, clamped).
inline std::vector<double> resize_bilinear(const std::vector<double>& img, int h, int w, int ch,
                                           int oh, int ow) {
  std::vector<double> out(static_cast<std::size_t>(oh) * ow * ch);
  const double sy = static_cast<double>(h) / oh;
  const double sx = static_cast<double>(w) / ow;
  for (int y = 0; y < oh; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::min(std::max(fy, 0.0), static_cast<double>(h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < ow; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::min(std::max(fx, 0.0), static_cast<double>(w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      for (int c = 0; c < ch; ++c) {
        auto at = [&](int yy, int xx) {
          return img[(static_cast<std::size_t>(yy) * w + xx) * ch + c];
        };
        const double top = at(y0, x0) * (1 - wx) + at(y0, x1) * wx;
        const double bot = at(y1, x0) * (1 - wx) + at(y1, x1) * wx;
        out[(static_cast<std::size_t>(y) * ow + x) * ch + c] = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

inline std::vector<std::uint8_t> resize_nearest(const std::vector<std::uint8_t>& img, int h, int w,
                                                int oh, int ow) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    int sy = static_cast<int>((y + 0.5) * h / oh);
    sy = std::min(sy, h - 1);
    for (int x = 0; x < ow; ++x) {
      int sx = static_cast<int>((x + 0.5) * w / ow);
      sx = std::min(sx, w - 1);
      out[static_cast<std::size_t>(y) * ow + x] = img[static_cast<std::size_t>(sy) * w + sx];
    }
  }
  return out;
}

}  // namespace attswin
