#ifndef DSRGAN_PNG_IO_HPP
#define DSRGAN_PNG_IO_HPP

#include <string>
#include <vector>

#include "dsrgan/image.hpp"

namespace dsrgan {

// 8-bit RGB PNG, fixed compression settings so identical pixels always
// produce identical bytes. Throws std::runtime_error with the path on
// failure.
void write_png_rgb8(const std::string& path, int width, int height,
                    const unsigned char* rgb);
void write_png(const std::string& path, const Image& img);

// Decodes an 8-bit PNG into RGB (gray and alpha variants are expanded /
// stripped). Returns false if the file is not a decodable PNG.
bool read_png(const std::string& path, Image* out);

}  // namespace dsrgan

#endif
