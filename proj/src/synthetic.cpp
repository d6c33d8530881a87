#include "signattack/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "signattack/errors.hpp"
#include "signattack/image.hpp"

namespace signattack {

namespace {

struct Rgb {
  double r, g, b;
};

// u, v are glyph-local coordinates in [-1, 1]
bool in_glyph(int class_idx, double u, double v) {
  switch (class_idx) {
    case 0: {  // octagon
      double au = std::abs(u), av = std::abs(v);
      return au <= 0.92 && av <= 0.92 && au + av <= 1.3;
    }
    case 1:  // disc
      return u * u + v * v <= 0.85;
    case 2:  // downward triangle
      return v >= -0.75 && std::abs(u) <= (0.95 - v) * 0.55;
    case 3:  // plate
      return std::abs(u) <= 0.72 && std::abs(v) <= 0.9;
    case 4:  // diamond
      return std::abs(u) + std::abs(v) <= 1.05;
    default:
      throw ConfigError("fixture class index out of range");
  }
}

// inner detail drawn on top of the glyph
bool in_detail(int class_idx, double u, double v) {
  switch (class_idx) {
    case 0: return std::abs(v) <= 0.22;                           // band
    case 1: return std::abs(u - v) <= 0.18 && u * u + v * v <= 0.6;  // diagonal bar
    case 2: return std::abs(u) <= 0.1 && v >= -0.35 && v <= 0.55;    // stem
    case 3: return (std::abs(v - 0.35) <= 0.12 || std::abs(v + 0.35) <= 0.12) && std::abs(u) <= 0.45;
    case 4: return std::abs(u) <= 0.14 && std::abs(v) <= 0.5;        // figure
    default: return false;
  }
}

Rgb glyph_color(int class_idx) {
  switch (class_idx) {
    case 0: return {0.78, 0.10, 0.12};
    case 1: return {0.12, 0.25, 0.80};
    case 2: return {0.85, 0.80, 0.75};
    case 3: return {0.92, 0.92, 0.88};
    case 4: return {0.95, 0.75, 0.15};
    default: return {0.5, 0.5, 0.5};
  }
}

Rgb detail_color(int class_idx) {
  switch (class_idx) {
    case 0: return {0.95, 0.95, 0.95};
    case 1: return {0.95, 0.95, 0.95};
    case 2: return {0.75, 0.08, 0.10};
    case 3: return {0.08, 0.08, 0.10};
    case 4: return {0.10, 0.08, 0.08};
    default: return {0.0, 0.0, 0.0};
  }
}

const char* kClassNames[] = {"stop", "keepRight", "yield", "speedLimit45", "pedestrianCrossing"};

}  // namespace

int fixture_class_limit() { return 5; }

std::vector<std::string> fixture_class_names(int classes) {
  if (classes < 1 || classes > fixture_class_limit())
    throw ConfigError("fixture supports 1.." + std::to_string(fixture_class_limit()) + " classes");
  return {kClassNames, kClassNames + classes};
}

Tensor render_sign(int class_idx, int side, Rng& rng, int variant) {
  if (class_idx < 0 || class_idx >= fixture_class_limit())
    throw ConfigError("fixture class index out of range");

  double cx = side / 2.0 + rng.uniform(-2.0, 2.0);
  double cy = side / 2.0 + rng.uniform(-2.0, 2.0);
  double radius = side * 0.5 * rng.uniform(0.72, 0.92);
  double brightness = variant == 0 ? rng.uniform(0.75, 1.1) : rng.uniform(0.55, 0.9);
  Rgb bg = variant == 0
               ? Rgb{rng.uniform(0.15, 0.5), rng.uniform(0.2, 0.55), rng.uniform(0.2, 0.55)}
               : Rgb{rng.uniform(0.45, 0.8), rng.uniform(0.45, 0.75), rng.uniform(0.35, 0.7)};
  Rgb fg = glyph_color(class_idx);
  Rgb dt = detail_color(class_idx);

  Tensor img(1, side, side, 3);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      double u = (x + 0.5 - cx) / radius;
      double v = (y + 0.5 - cy) / radius;
      Rgb col = bg;
      if (in_glyph(class_idx, u, v)) col = in_detail(class_idx, u, v) ? dt : fg;
      double noise_r = rng.normal() * 0.03;
      double noise_g = rng.normal() * 0.03;
      double noise_b = rng.normal() * 0.03;
      img.at(0, y, x, 0) = std::clamp(col.r * brightness + noise_r, 0.0, 1.0);
      img.at(0, y, x, 1) = std::clamp(col.g * brightness + noise_g, 0.0, 1.0);
      img.at(0, y, x, 2) = std::clamp(col.b * brightness + noise_b, 0.0, 1.0);
    }
  return img;
}

Tensor glyph_region(int class_idx, int side) {
  Tensor mask(1, side, side, 1);
  double c = side / 2.0;
  double radius = side * 0.5 * 0.82;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      double u = (x + 0.5 - c) / radius;
      double v = (y + 0.5 - c) / radius;
      mask.at(0, y, x, 0) = in_glyph(class_idx, u, v) ? 1.0 : 0.0;
    }
  return mask;
}

void write_sign_fixture(const std::string& root, const FixtureSpec& spec) {
  auto names = fixture_class_names(spec.classes);
  Rng base(spec.seed);
  for (int cls = 0; cls < spec.classes; ++cls) {
    std::filesystem::create_directories(std::filesystem::path(root) / names[cls]);
    for (int i = 0; i < spec.per_class; ++i) {
      Rng rng = base.fork(static_cast<std::uint64_t>(cls) * 1000003 + i);
      Tensor img = render_sign(cls, spec.side, rng, spec.variant);
      char name[32];
      std::snprintf(name, sizeof(name), "img_%04d.ppm", i);
      write_ppm(img, (std::filesystem::path(root) / names[cls] / name).string());
    }
  }
}

std::vector<LabeledImage> make_sign_images(const FixtureSpec& spec) {
  auto names = fixture_class_names(spec.classes);
  Rng base(spec.seed);
  std::vector<LabeledImage> out;
  for (int cls = 0; cls < spec.classes; ++cls)
    for (int i = 0; i < spec.per_class; ++i) {
      Rng rng = base.fork(static_cast<std::uint64_t>(cls) * 1000003 + i);
      LabeledImage img;
      img.pixels = render_sign(cls, spec.side, rng, spec.variant);
      img.label = cls;
      img.id = names[cls] + "#" + std::to_string(i);
      out.push_back(std::move(img));
    }
  return out;
}

std::vector<LabeledImage> make_blobs(int per_class, int side, std::uint64_t seed) {
  Rng base(seed);
  std::vector<LabeledImage> out;
  for (int cls = 0; cls < 2; ++cls)
    for (int i = 0; i < per_class; ++i) {
      Rng rng = base.fork(static_cast<std::uint64_t>(cls) * 7919 + i);
      double cx = side * (cls == 0 ? 0.3 : 0.7) + rng.uniform(-1.0, 1.0);
      double cy = side * (cls == 0 ? 0.3 : 0.7) + rng.uniform(-1.0, 1.0);
      double sigma = side * rng.uniform(0.10, 0.16);
      double amp = rng.uniform(0.7, 0.95);
      LabeledImage img;
      img.pixels = Tensor(1, side, side, 3);
      for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
          double d2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * sigma * sigma);
          double v = 0.1 + amp * std::exp(-d2) + rng.normal() * 0.02;
          for (int c = 0; c < 3; ++c) img.pixels.at(0, y, x, c) = std::clamp(v, 0.0, 1.0);
        }
      img.label = cls;
      img.id = "blob" + std::to_string(cls) + "#" + std::to_string(i);
      out.push_back(std::move(img));
    }
  return out;
}

}  // namespace signattack
