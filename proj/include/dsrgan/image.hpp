#ifndef DSRGAN_IMAGE_HPP
#define DSRGAN_IMAGE_HPP

#include <string>
#include <vector>

namespace dsrgan {

// RGB image with values in [0,1], row-major, channels interleaved.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.0) {}

  double& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  static Image filled(int w, int h, double r, double g, double b) {
    Image im(w, h);
    for (std::size_t i = 0; i < im.data.size(); i += 3) {
      im.data[i] = r;
      im.data[i + 1] = g;
      im.data[i + 2] = b;
    }
    return im;
  }
  bool same_size(const Image& o) const { return width == o.width && height == o.height; }
};

// BT.601 luma, replicated to all channels. Exact fixed point on already-gray
// pixels so the transform is bitwise idempotent.
Image to_grayscale(const Image& img);
double luma601(double r, double g, double b);

// H in degrees [0,360); S,V in [0,1]. Hue is 0 when S is 0.
void rgb_to_hsv(double r, double g, double b, double* h, double* s, double* v);
void hsv_to_rgb(double h, double s, double v, double* r, double* g, double* b);

Image center_crop_square(const Image& img);
Image resize_bilinear(const Image& img, int out_w, int out_h);

// 8-bit quantization: round(value * 255), clamped.
std::vector<unsigned char> quantize8(const Image& img);
Image from_bytes8(int w, int h, int channels, const unsigned char* bytes);

}  // namespace dsrgan

#endif
