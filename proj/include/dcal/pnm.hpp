#pragma once

#include <string>

#include "dcal/embedding.hpp"

namespace dcal {

// 8-bit binary PGM (P5) / PPM (P6). Pixel bytes map to [0,1] by /255.
ImageSample read_pnm(const std::string& path);
void write_pnm(const std::string& path, const ImageSample& img);

}  // namespace dcal
