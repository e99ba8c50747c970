#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dadiff/tensor.hpp"

namespace dadiff {

/// 8-bit RGB image, row-major HWC.
struct Image {
    int width = 0, height = 0;
    std::vector<std::uint8_t> rgb; // height*width*3

    std::uint8_t& at(int y, int x, int c) { return rgb[(y * width + x) * 3 + c]; }
    std::uint8_t at(int y, int x, int c) const { return rgb[(y * width + x) * 3 + c]; }
};

Image make_image(int width, int height);

void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

/// Square crop of size `size` centered at (cx, cy), as a (3,size,size)
/// tensor with values in [0,1]. Out-of-frame pixels are zero-padded.
Tensor crop_chw(const Image& img, double cx, double cy, int size);

} // namespace dadiff
