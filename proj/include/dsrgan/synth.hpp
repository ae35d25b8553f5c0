#ifndef DSRGAN_SYNTH_HPP
#define DSRGAN_SYNTH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dsrgan/image.hpp"
#include "dsrgan/rng.hpp"

namespace dsrgan {

enum class ShapeKind { Circle = 0, Square = 1, Triangle = 2, Ellipse = 3 };

// Geometry of one foreground shape, in continuous pixel coordinates. scale
// is the bounding diameter as a fraction of the image extent, in (0.2, 0.8);
// the shape always keeps at least a 2-pixel white margin to the border so
// the [250,255] background rule holds on every synthetic image.
struct ShapeSpec {
  ShapeKind kind = ShapeKind::Circle;
  double cx = 0.0, cy = 0.0;
  double scale = 0.5;
  double rotation = 0.0;
};

// Appearance painted over the shape. Saturation and value stay >= 0.5 so
// the foreground is always chromatic and clearly separated from the white
// background.
struct RenderSpec {
  double hue = 0.0;   // [0,360)
  double sat = 1.0;   // [0.5,1]
  double val = 1.0;   // [0.5,1]
  bool two_tone = false;
  double hue2 = 0.0;
  double split_angle = 0.0;
};

// Uniform [0,1) source; lets seeded sampling and latent-driven generation
// share one sampling path.
class UniformSource {
 public:
  virtual ~UniformSource() = default;
  virtual double next() = 0;
};

class RngUniforms : public UniformSource {
 public:
  explicit RngUniforms(std::uint64_t seed) : rng_(seed) {}
  double next() override { return rng_.uniform01(); }

 private:
  Rng rng_;
};

// Maps latent components from [-1,1] to [0,1); throws when exhausted.
class VectorUniforms : public UniformSource {
 public:
  explicit VectorUniforms(const std::vector<double>& v) : v_(&v) {}
  double next() override;

 private:
  const std::vector<double>* v_;
  std::size_t i_ = 0;
};

inline constexpr int kShapeUniforms = 5;   // kind, scale, rotation, cx, cy
inline constexpr int kRenderUniforms = 6;  // hue, sat, val, gate, hue2, split

ShapeSpec sample_shape_spec(UniformSource& u, int resolution);
RenderSpec sample_render_spec(UniformSource& u);

bool point_in_shape(const ShapeSpec& s, double px, double py, int resolution);

// Rasterizes the shape on a white canvas. supersample^2 coverage samples
// per pixel; anti-aliasing is confined to pixels crossing the outline.
Image render_shape(const ShapeSpec& shape, const RenderSpec& render, int resolution,
                   int supersample = 4);

struct Sample {
  Image image;
  ShapeSpec shape;
  RenderSpec render;
};

// Deterministic in seed; the same seed always yields bit-identical pixels.
Sample make_target_sample(std::uint64_t seed, int resolution);

// The analytically disentangled generator: z_s drives the ShapeSpec only,
// z_r the RenderSpec only, rendered directly without any network. Requires
// |z_s| >= kShapeUniforms and |z_r| >= kRenderUniforms.
Image procedural_generate(const std::vector<double>& z_s, const std::vector<double>& z_r,
                          int resolution);

struct BuildResult {
  int count = 0;
  std::string manifest_path;
  std::string target_dir;
  std::string aux_dir;
};

// Writes target/<i>.png, aux/<i>.png (the grayscale transform of the target)
// and manifest.csv. Refuses a non-empty out_dir unless force. Training never
// reads the manifest; the pairing exists only for bookkeeping.
BuildResult build_dataset(const std::string& out_dir, int count, std::uint64_t seed,
                          int resolution, bool force = false);

struct IngestReport {
  int decoded = 0;
  int skipped = 0;
};

// Loads every decodable PNG under path (sorted by filename), center-crops to
// square and resizes to resolution x resolution. Undecodable files are
// skipped with a warning. Throws if nothing decodes.
std::vector<Image> ingest_folder(const std::string& path, int resolution,
                                 IngestReport* report = nullptr);

std::string shape_kind_name(ShapeKind k);

}  // namespace dsrgan

#endif
