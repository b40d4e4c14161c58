#include "wfen/image.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace wfen {

namespace {

// Reads one header token, skipping whitespace and '#' comment lines.
std::string next_header_token(std::istream& in) {
  std::string tok;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c) && c != '#') {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (c == '#') in.unget();
  return tok;
}

int64_t parse_extent(const std::string& tok, const char* what) {
  check(!tok.empty(), std::string("ppm: missing ") + what);
  for (char ch : tok) check(std::isdigit(static_cast<unsigned char>(ch)) != 0,
                            std::string("ppm: malformed ") + what + " '" + tok + "'");
  try {
    return std::stoll(tok);
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("ppm: malformed ") + what + " '" + tok + "'");
  }
}

}  // namespace

ImageBuffer ppm_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "ppm: cannot open '" + path + "'");
  std::string magic = next_header_token(in);
  check(magic == "P6", "ppm: '" + path + "' is not a P6 stream");
  const int64_t w = parse_extent(next_header_token(in), "width");
  const int64_t h = parse_extent(next_header_token(in), "height");
  const int64_t maxval = parse_extent(next_header_token(in), "maxval");
  check(w > 0 && h > 0, "ppm: non-positive extents in '" + path + "'");
  check(maxval == 255, "ppm: unsupported maxval " + std::to_string(maxval) + " in '" + path +
                           "' (only 255 is handled)");
  // The header ends with exactly one whitespace byte, already consumed by the
  // token reader. Payload follows immediately.
  std::vector<unsigned char> bytes(static_cast<size_t>(w * h * 3));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  check(in.gcount() == static_cast<std::streamsize>(bytes.size()),
        "ppm: truncated pixel data in '" + path + "' (expected " + std::to_string(bytes.size()) +
            " bytes, got " + std::to_string(in.gcount()) + ")");
  ImageBuffer img(w, h);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const size_t p = static_cast<size_t>((y * w + x) * 3);
      img.set(0, y, x, byte_to_unit(bytes[p]));
      img.set(1, y, x, byte_to_unit(bytes[p + 1]));
      img.set(2, y, x, byte_to_unit(bytes[p + 2]));
    }
  }
  return img;
}

void ppm_write(const ImageBuffer& img, const std::string& path) {
  check(img.channels == 3, "ppm: expected 3 channels");
  check(img.width > 0 && img.height > 0, "ppm: empty image");
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "ppm: cannot write '" + path + "'");
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> bytes(static_cast<size_t>(img.width * img.height * 3));
  for (int64_t y = 0; y < img.height; ++y) {
    for (int64_t x = 0; x < img.width; ++x) {
      const size_t p = static_cast<size_t>((y * img.width + x) * 3);
      bytes[p] = unit_to_byte(img.at(0, y, x));
      bytes[p + 1] = unit_to_byte(img.at(1, y, x));
      bytes[p + 2] = unit_to_byte(img.at(2, y, x));
    }
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  check(out.good(), "ppm: write failure on '" + path + "'");
}

}  // namespace wfen
