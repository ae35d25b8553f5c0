#include "dsrgan/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "dsrgan/png_io.hpp"

namespace fs = std::filesystem;

namespace dsrgan {

double VectorUniforms::next() {
  if (i_ >= v_->size())
    throw std::invalid_argument("latent vector too short: needs more than " +
                                std::to_string(v_->size()) + " components");
  const double u = 0.5 * ((*v_)[i_++] + 1.0);
  return std::clamp(u, 0.0, 0x1.fffffffffffffp-1);
}

std::string shape_kind_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::Circle: return "circle";
    case ShapeKind::Square: return "square";
    case ShapeKind::Triangle: return "triangle";
    case ShapeKind::Ellipse: return "ellipse";
  }
  return "?";
}

ShapeSpec sample_shape_spec(UniformSource& u, int resolution) {
  if (resolution < 24)
    throw std::invalid_argument("shape sampling needs resolution >= 24, got " +
                                std::to_string(resolution));
  ShapeSpec s;
  s.kind = static_cast<ShapeKind>(std::min(3, static_cast<int>(u.next() * 4.0)));
  s.scale = 0.2 + 0.6 * u.next();
  s.rotation = u.next() * 6.283185307179586;
  // bounding radius; the center range keeps a >= 2 pixel white margin
  const double radius = 0.5 * s.scale * resolution;
  const double lo = 2.0 + radius;
  const double hi = resolution - 2.0 - radius;
  s.cx = lo + (hi - lo) * u.next();
  s.cy = lo + (hi - lo) * u.next();
  return s;
}

RenderSpec sample_render_spec(UniformSource& u) {
  RenderSpec r;
  r.hue = u.next() * 360.0;
  r.sat = 0.5 + 0.5 * u.next();
  r.val = 0.5 + 0.5 * u.next();
  r.two_tone = u.next() < 0.25;
  r.hue2 = u.next() * 360.0;
  r.split_angle = u.next() * 3.141592653589793;
  return r;
}

bool point_in_shape(const ShapeSpec& s, double px, double py, int resolution) {
  const double dx = px - s.cx;
  const double dy = py - s.cy;
  const double radius = 0.5 * s.scale * resolution;
  const double cosr = std::cos(s.rotation);
  const double sinr = std::sin(s.rotation);
  const double lx = cosr * dx + sinr * dy;
  const double ly = -sinr * dx + cosr * dy;
  switch (s.kind) {
    case ShapeKind::Circle:
      return dx * dx + dy * dy <= radius * radius;
    case ShapeKind::Square: {
      const double h = radius / std::sqrt(2.0);
      return std::abs(lx) <= h && std::abs(ly) <= h;
    }
    case ShapeKind::Triangle: {
      // equilateral, circumradius = bounding radius
      constexpr double kThird = 2.0943951023931953;  // 2*pi/3
      double vx[3], vy[3];
      for (int i = 0; i < 3; ++i) {
        const double a = 1.5707963267948966 + i * kThird;
        vx[i] = radius * std::cos(a);
        vy[i] = radius * std::sin(a);
      }
      bool pos = false, neg = false;
      for (int i = 0; i < 3; ++i) {
        const int j = (i + 1) % 3;
        const double cross =
            (vx[j] - vx[i]) * (ly - vy[i]) - (vy[j] - vy[i]) * (lx - vx[i]);
        if (cross > 0) pos = true;
        if (cross < 0) neg = true;
      }
      return !(pos && neg);
    }
    case ShapeKind::Ellipse: {
      const double a = radius;
      const double b = 0.6 * radius;
      const double nx = lx / a, ny = ly / b;
      return nx * nx + ny * ny <= 1.0;
    }
  }
  return false;
}

Image render_shape(const ShapeSpec& shape, const RenderSpec& render, int resolution,
                   int supersample) {
  Image img = Image::filled(resolution, resolution, 1.0, 1.0, 1.0);
  double r1, g1, b1, r2, g2, b2;
  hsv_to_rgb(render.hue, render.sat, render.val, &r1, &g1, &b1);
  hsv_to_rgb(render.hue2, render.sat, render.val, &r2, &g2, &b2);
  const double radius = 0.5 * shape.scale * resolution;
  const int x0 = std::max(0, static_cast<int>(std::floor(shape.cx - radius - 1.0)));
  const int x1 = std::min(resolution - 1, static_cast<int>(std::ceil(shape.cx + radius + 1.0)));
  const int y0 = std::max(0, static_cast<int>(std::floor(shape.cy - radius - 1.0)));
  const int y1 = std::min(resolution - 1, static_cast<int>(std::ceil(shape.cy + radius + 1.0)));
  const double csplit = std::cos(render.split_angle);
  const double ssplit = std::sin(render.split_angle);
  const int ss = std::max(1, supersample);
  const double inv = 1.0 / (ss * ss);

  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      double ar = 0.0, ag = 0.0, ab = 0.0;
      int outside = 0;
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const double px = x + (sx + 0.5) / ss;
          const double py = y + (sy + 0.5) / ss;
          if (!point_in_shape(shape, px, py, resolution)) {
            ++outside;
            continue;
          }
          bool second = false;
          if (render.two_tone)
            second = csplit * (px - shape.cx) + ssplit * (py - shape.cy) >= 0.0;
          ar += second ? r2 : r1;
          ag += second ? g2 : g1;
          ab += second ? b2 : b1;
        }
      }
      img.at(y, x, 0) = (ar + outside) * inv;
      img.at(y, x, 1) = (ag + outside) * inv;
      img.at(y, x, 2) = (ab + outside) * inv;
    }
  }
  return img;
}

Sample make_target_sample(std::uint64_t seed, int resolution) {
  RngUniforms u(mix_seed(seed, 0x5a6d));
  Sample s;
  s.shape = sample_shape_spec(u, resolution);
  s.render = sample_render_spec(u);
  s.image = render_shape(s.shape, s.render, resolution);
  return s;
}

Image procedural_generate(const std::vector<double>& z_s, const std::vector<double>& z_r,
                          int resolution) {
  VectorUniforms us(z_s), ur(z_r);
  const ShapeSpec shape = sample_shape_spec(us, resolution);
  const RenderSpec render = sample_render_spec(ur);
  return render_shape(shape, render, resolution);
}

BuildResult build_dataset(const std::string& out_dir, int count, std::uint64_t seed,
                          int resolution, bool force) {
  if (count < 1) throw std::invalid_argument("build_dataset: count must be >= 1");
  fs::path root(out_dir);
  std::error_code ec;
  if (fs::exists(root) && !fs::is_empty(root, ec) && !force)
    throw std::runtime_error("output directory is not empty (use force to overwrite): " +
                             root.string());
  fs::create_directories(root / "target");
  fs::create_directories(root / "aux");

  const fs::path manifest_path = root / "manifest.csv";
  std::ofstream manifest(manifest_path);
  if (!manifest) throw std::runtime_error("cannot write manifest: " + manifest_path.string());

  char name[32];
  char line[512];
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = mix_seed(seed, 0xda7a, static_cast<std::uint64_t>(i));
    Sample smp = make_target_sample(s, resolution);
    std::snprintf(name, sizeof name, "%05d.png", i);
    const fs::path tpath = root / "target" / name;
    write_png(tpath, smp.image);

    // The stored auxiliary image is exactly the grayscale transform of the
    // stored (8-bit) target image.
    Image quantized = from_bytes8(resolution, resolution, 3, quantize8(smp.image).data());
    write_png(root / "aux" / name, to_grayscale(quantized));

    std::snprintf(line, sizeof line,
                  "%d,%llu,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", i,
                  static_cast<unsigned long long>(s), static_cast<int>(smp.shape.kind),
                  smp.shape.cx, smp.shape.cy, smp.shape.scale, smp.shape.rotation,
                  smp.render.hue, smp.render.sat, smp.render.val);
    manifest << line;
  }
  manifest.close();
  if (!manifest) throw std::runtime_error("manifest write failed: " + manifest_path.string());

  BuildResult res;
  res.count = count;
  res.manifest_path = manifest_path.string();
  res.target_dir = (root / "target").string();
  res.aux_dir = (root / "aux").string();
  return res;
}

std::vector<Image> ingest_folder(const std::string& path, int resolution, IngestReport* report) {
  if (!fs::is_directory(path)) throw std::runtime_error("not a directory: " + path);
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(path))
    if (e.is_regular_file()) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());

  IngestReport local;
  std::vector<Image> images;
  for (const auto& p : entries) {
    Image im;
    if (!read_png(p.string(), &im)) {
      std::cerr << "warning: skipping undecodable file " << p.string() << "\n";
      ++local.skipped;
      continue;
    }
    ++local.decoded;
    if (im.width != im.height) im = center_crop_square(im);
    if (im.width != resolution) im = resize_bilinear(im, resolution, resolution);
    images.push_back(std::move(im));
  }
  if (report) *report = local;
  if (images.empty()) throw std::runtime_error("no decodable images under " + path);
  return images;
}

}  // namespace dsrgan
