#pragma once

#include <string>

#include "nightenh/image.hpp"

namespace nightenh {

// Reads an 8- or 16-bit PNG or a baseline JPEG. Integer samples are divided
// by the type maximum; no gamma transform is applied.
Image load_image(const std::string& path);

// Clamps to [0,1], quantizes to 8 bits (round half up) and writes a PNG.
void save_image(const Image& img, const std::string& path);

} // namespace nightenh
