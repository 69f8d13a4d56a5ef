#include "dcal/pnm.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dcal {

namespace {

int next_token(std::istream& in) {
  // Skips whitespace and '#' comments between header fields.
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v;
  if (!(in >> v)) throw std::runtime_error("pnm: malformed header");
  return v;
}

}  // namespace

ImageSample read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pnm: cannot open " + path);
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  int channels;
  if (magic == "P5")
    channels = 1;
  else if (magic == "P6")
    channels = 3;
  else
    throw std::runtime_error("pnm: unsupported magic '" + magic + "' in " + path);

  ImageSample img;
  img.channels = channels;
  img.width = next_token(in);
  img.height = next_token(in);
  const int maxval = next_token(in);
  if (maxval != 255) throw std::runtime_error("pnm: only 8-bit files supported");
  in.get();  // single whitespace after maxval

  const std::size_t count =
      static_cast<std::size_t>(img.width) * img.height * channels;
  std::string raw(count, '\0');
  in.read(raw.data(), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count)
    throw std::runtime_error("pnm: truncated pixel data in " + path);
  img.pixels.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    img.pixels[i] = static_cast<unsigned char>(raw[i]) / 255.0f;
  return img;
}

void write_pnm(const std::string& path, const ImageSample& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("pnm: channels must be 1 or 3");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("pnm: cannot write " + path);
  out << (img.channels == 1 ? "P5" : "P6") << "\n"
      << img.width << " " << img.height << "\n255\n";
  for (float v : img.pixels) {
    float c = std::min(1.0f, std::max(0.0f, v));
    out.put(static_cast<char>(std::lround(c * 255.0f)));
  }
  if (!out) throw std::runtime_error("pnm: write failed for " + path);
}

}  // namespace dcal
