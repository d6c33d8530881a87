#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "signattack/data.hpp"
#include "signattack/rng.hpp"
#include "signattack/tensor.hpp"

namespace signattack {

// Deterministic sign-like image generator: five archetypes (octagon,
// disc, triangle, plate, diamond) with seeded pose, brightness and noise
// jitter. Stands in for real sign crops when no archive is mounted.
struct FixtureSpec {
  int classes = 5;
  int per_class = 120;
  int side = 32;
  std::uint64_t seed = 1;
  int variant = 0;  // 1 = shifted palette/lighting, a stand-in foreign domain
};

// Number of distinct archetypes available.
int fixture_class_limit();

// Class names in index order ("stop", "speedLimit45", ...).
std::vector<std::string> fixture_class_names(int classes);

// Renders one jittered sample of a class. variant 1 shifts background and
// lighting statistics.
Tensor render_sign(int class_idx, int side, Rng& rng, int variant = 0);

// Canonical glyph support of a class (no jitter), as a {0,1} mask.
Tensor glyph_region(int class_idx, int side);

// Writes a folder_per_class tree of .ppm files under root.
void write_sign_fixture(const std::string& root, const FixtureSpec& spec);

// Same images without touching disk.
std::vector<LabeledImage> make_sign_images(const FixtureSpec& spec);

// Two separable blob classes rendered as images; the classic sanity toy.
std::vector<LabeledImage> make_blobs(int per_class, int side, std::uint64_t seed);

}  // namespace signattack
