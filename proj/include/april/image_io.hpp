#pragma once

#include <string>
#include <vector>

#include "april/tensor.hpp"

namespace april {

// Minimal PNG output (8-bit RGB or grayscale, stored-block DEFLATE, no
// external compression library).  Lossless; files are larger than zlib
// output but decode everywhere.
void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<unsigned char>& rgb);
void write_png_gray(const std::string& path, int width, int height,
                    const std::vector<unsigned char>& gray);

// {H,W,3} image in [0,1] -> packed 8-bit RGB rows.
std::vector<unsigned char> to_rgb8(const Tensor& image);
// {H,W} or {H,W,1} map in [0,1] -> 8-bit gray; 0 is black, 1 is white.
std::vector<unsigned char> to_gray8(const Tensor& map);

void save_png(const std::string& path, const Tensor& image);      // RGB
void save_png_gray(const std::string& path, const Tensor& map);

}  // namespace april
