#include "freezelab/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "freezelab/error.hpp"

namespace freezelab {

void quantize(Image& img) {
  for (double& v : img.data) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

namespace {

// Reads one header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& in, const std::string& path) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(c);
  }
  if (tok.empty()) throw ParseError(path + ": truncated image header");
  return tok;
}

std::size_t header_number(std::istream& in, const std::string& path) {
  const std::string tok = header_token(in, path);
  std::size_t used = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(tok, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used != tok.size() || v == 0) throw ParseError(path + ": bad header value '" + tok + "'");
  return v;
}

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  if (header_token(in, path) != "P6") throw ParseError(path + ": not a binary PPM (P6)");
  Image img;
  img.width = header_number(in, path);
  img.height = header_number(in, path);
  const std::size_t maxval = header_number(in, path);
  if (maxval != 255) throw ParseError(path + ": only maxval 255 is supported");
  std::vector<unsigned char> bytes(img.width * img.height * 3);
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw ParseError(path + ": truncated pixel data");
  }
  img.data.resize(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

void write_ppm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(img.data[i], 0.0, 1.0) * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path);
}

Tensor preprocess(const Image& img, std::size_t size) {
  if (img.width == 0 || img.height == 0 || img.data.size() != img.width * img.height * 3) {
    throw ShapeError("preprocess: invalid image");
  }
  if (size == 0) throw ShapeError("preprocess: size must be positive");
  std::vector<double> out(3 * size * size);
  for (std::size_t y = 0; y < size; ++y) {
    const std::size_t sy = y * img.height / size;
    for (std::size_t x = 0; x < size; ++x) {
      const std::size_t sx = x * img.width / size;
      for (std::size_t c = 0; c < 3; ++c) {
        out[(c * size + y) * size + x] = (img.at(sx, sy, c) - kImageNetMean[c]) / kImageNetStd[c];
      }
    }
  }
  return Tensor(Shape{3, size, size}, std::move(out));
}

}  // namespace freezelab
