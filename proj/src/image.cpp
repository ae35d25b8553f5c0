#include "dsrgan/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dsrgan {

double luma601(double r, double g, double b) {
  if (r == g && g == b) return r;  // exact fixed point for gray input
  double y = 0.299 * r + 0.587 * g + 0.114 * b;
  return std::clamp(y, 0.0, 1.0);
}

Image to_grayscale(const Image& img) {
  Image out(img.width, img.height);
  for (std::size_t i = 0; i < img.data.size(); i += 3) {
    const double y = luma601(img.data[i], img.data[i + 1], img.data[i + 2]);
    out.data[i] = out.data[i + 1] = out.data[i + 2] = y;
  }
  return out;
}

void rgb_to_hsv(double r, double g, double b, double* h, double* s, double* v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  *v = mx;
  *s = mx > 0.0 ? delta / mx : 0.0;
  if (delta <= 0.0) {
    *h = 0.0;
    return;
  }
  double hh;
  if (mx == r)
    hh = (g - b) / delta;
  else if (mx == g)
    hh = (b - r) / delta + 2.0;
  else
    hh = (r - g) / delta + 4.0;
  hh *= 60.0;
  if (hh < 0.0) hh += 360.0;
  if (hh >= 360.0) hh -= 360.0;
  *h = hh;
}

void hsv_to_rgb(double h, double s, double v, double* r, double* g, double* b) {
  h = std::fmod(h, 360.0);
  if (h < 0.0) h += 360.0;
  const double c = v * s;
  const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
  const double m = v - c;
  double rr = 0, gg = 0, bb = 0;
  if (h < 60) {
    rr = c; gg = x;
  } else if (h < 120) {
    rr = x; gg = c;
  } else if (h < 180) {
    gg = c; bb = x;
  } else if (h < 240) {
    gg = x; bb = c;
  } else if (h < 300) {
    rr = x; bb = c;
  } else {
    rr = c; bb = x;
  }
  *r = rr + m;
  *g = gg + m;
  *b = bb + m;
}

Image center_crop_square(const Image& img) {
  const int side = std::min(img.width, img.height);
  const int x0 = (img.width - side) / 2;
  const int y0 = (img.height - side) / 2;
  Image out(side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y + y0, x + x0, c);
  return out;
}

Image resize_bilinear(const Image& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw std::invalid_argument("resize_bilinear: empty target");
  Image out(out_w, out_h);
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1.0 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
        const double bot = (1.0 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
        out.at(y, x, c) = (1.0 - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

std::vector<unsigned char> quantize8(const Image& img) {
  std::vector<unsigned char> out(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double v = std::clamp(img.data[i], 0.0, 1.0);
    out[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  return out;
}

Image from_bytes8(int w, int h, int channels, const unsigned char* bytes) {
  Image out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const int src_c = channels == 1 ? 0 : c;
        out.at(y, x, c) =
            bytes[(static_cast<std::size_t>(y) * w + x) * channels + src_c] / 255.0;
      }
  return out;
}

}  // namespace dsrgan
