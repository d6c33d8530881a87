#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "signattack/attention.hpp"
#include "signattack/errors.hpp"
#include "signattack/nn.hpp"
#include "signattack/rng.hpp"
#include "signattack/synthetic.hpp"
#include "test_helpers.hpp"

using namespace signattack;

namespace {

AttentionMap make_map(const std::vector<double>& values, int h, int w, int cls,
                      const std::string& id) {
  AttentionMap m;
  m.weights = Tensor(1, h, w, 1);
  for (std::size_t i = 0; i < values.size(); ++i) m.weights[i] = values[i];
  m.class_index = cls;
  m.source_image_id = id;
  return m;
}

}  // namespace

TEST_CASE("every module obeys the residual identity and mask range") {
  AttentionNetworkSpec spec;
  spec.num_classes = 3;
  spec.input_side = 16;
  auto ran = AttentionNetwork::build(spec, 11, {});
  REQUIRE(ran.modules().size() == 6);
  for (auto* m : ran.modules()) m->set_capture(true);

  Rng rng(5);
  Tensor x(2, 16, 16, 3);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();
  ran.predict_batch(x);

  for (auto* m : ran.modules()) {
    const Tensor& t = m->last_trunk();
    const Tensor& mask = m->last_mask();
    const Tensor& h = m->last_combined();
    REQUIRE(t.size() > 0);
    REQUIRE(mask.same_shape(t));
    for (std::size_t i = 0; i < mask.size(); ++i) {
      CHECK(mask[i] >= 0.0);
      CHECK(mask[i] <= 1.0);
      CHECK(h[i] == (1.0 + mask[i]) * t[i]);  // machine-exact combine
    }
  }
}

TEST_CASE("saturated mask branches give H == T and H == 2T exactly") {
  Rng rng(6);
  nn::AttentionModule module(2, "relu", rng);
  module.set_capture(true);

  // the mask branch's output conv feeds a sigmoid; a huge bias saturates it
  std::vector<nn::ParamRef> params;
  module.collect_params(params);
  // out_conv bias is the last parameter tensor of the mask branch; locate by
  // shape: (1,1,1,channels) following the 1x1 conv weight of shape (1,1,C,.)
  // Simpler: drive every parameter to zero except that bias via name-free
  // search is brittle, so saturate by feeding the sigmoid directly:
  // zero all mask-branch parameters, then set the final conv bias.
  // collect_params order: pre, trunk..., mask(down/up units, out_conv w+b), post.
  // The out_conv bias is the parameter immediately before the post unit's
  // first conv weight; the post unit contributes 4 tensors (2 convs w+b).
  nn::ParamRef out_conv_bias = params[params.size() - 5];
  REQUIRE(out_conv_bias.value->size() == 2);  // one bias per channel

  Tensor x(1, 8, 8, 2);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();

  out_conv_bias.value->fill(-1e4);  // sigmoid -> 0
  module.forward(x);
  for (std::size_t i = 0; i < module.last_mask().size(); ++i) {
    CHECK(module.last_mask()[i] == 0.0);
    CHECK(module.last_combined()[i] == module.last_trunk()[i]);
  }

  out_conv_bias.value->fill(1e4);  // sigmoid -> 1
  module.forward(x);
  for (std::size_t i = 0; i < module.last_mask().size(); ++i) {
    CHECK(module.last_mask()[i] == 1.0);
    CHECK(module.last_combined()[i] == 2.0 * module.last_trunk()[i]);
  }
}

TEST_CASE("extract_maps returns one native-resolution map per image") {
  AttentionNetworkSpec spec;
  spec.num_classes = 2;
  spec.input_side = 16;
  auto ran = AttentionNetwork::build(spec, 3, {});

  auto images = make_blobs(3, 16, 17);
  CHECK_THROWS_AS(ran.extract_maps(images), Error);  // untrained

  ran.mark_trained();
  auto maps = ran.extract_maps(images);
  REQUIRE(maps.size() == images.size());
  for (std::size_t i = 0; i < maps.size(); ++i) {
    CHECK(maps[i].weights.h() == 4);  // two stride-2 transitions from 16
    CHECK(maps[i].weights.w() == 4);
    CHECK(maps[i].weights.c() == 1);
    CHECK(maps[i].class_index == images[i].label);
    CHECK(maps[i].source_image_id == images[i].id);
  }
  auto mask_maps = ran.extract_maps(images, true);
  for (const auto& m : mask_maps)
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
      CHECK(m.weights[i] >= 0.0);
      CHECK(m.weights[i] <= 1.0);
    }
}

TEST_CASE("select_representative: singleton, exact-mean member, and brute force") {
  auto single = make_map({0.1, 0.2, 0.3, 0.4}, 2, 2, 0, "only");
  CHECK(select_representative({single}).source_image_id == "only");

  std::vector<AttentionMap> trio = {
      make_map({0, 0, 0, 0}, 2, 2, 1, "zero"),
      make_map({1, 1, 1, 1}, 2, 2, 1, "one"),
      make_map({0.5, 0.5, 0.5, 0.5}, 2, 2, 1, "half"),
  };
  CHECK(select_representative(trio).source_image_id == "half");

  // 7 random 4x4 maps against an exhaustive argmin written in place
  Rng rng(23);
  std::vector<AttentionMap> maps;
  for (int k = 0; k < 7; ++k) {
    std::vector<double> vals(16);
    for (auto& v : vals) v = rng.uniform();
    maps.push_back(make_map(vals, 4, 4, 2, "m" + std::to_string(k)));
  }
  std::vector<double> avg(16, 0.0);
  for (const auto& m : maps)
    for (int i = 0; i < 16; ++i) avg[i] += m.weights[i] / maps.size();
  int best = -1;
  double best_d = 1e300;
  for (std::size_t k = 0; k < maps.size(); ++k) {
    double d = 0;
    for (int i = 0; i < 16; ++i) d += (avg[i] - maps[k].weights[i]) * (avg[i] - maps[k].weights[i]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  CHECK(select_representative(maps).source_image_id == maps[best].source_image_id);

  CHECK_THROWS_AS(select_representative({}), DataError);

  // exact ties go to the lowest source id
  std::vector<AttentionMap> tied = {make_map({0, 1}, 1, 2, 3, "b"), make_map({1, 0}, 1, 2, 3, "a")};
  CHECK(select_representative(tied).source_image_id == "a");
}

TEST_CASE("select_representative agrees with the oracle on lists up to length 50") {
  Rng rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 1 + static_cast<int>(rng.uniform_int(50));
    std::vector<AttentionMap> maps;
    for (int k = 0; k < n; ++k) {
      std::vector<double> vals(9);
      for (auto& v : vals) v = rng.uniform();
      maps.push_back(make_map(vals, 3, 3, 0, "id" + std::to_string(k)));
    }
    std::vector<double> avg(9, 0.0);
    for (const auto& m : maps)
      for (int i = 0; i < 9; ++i) avg[i] += m.weights[i] / n;
    int best = 0;
    double best_d = 1e300;
    for (int k = 0; k < n; ++k) {
      double d = 0;
      for (int i = 0; i < 9; ++i)
        d += (avg[i] - maps[k].weights[i]) * (avg[i] - maps[k].weights[i]);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    CHECK(select_representative(maps).source_image_id == maps[best].source_image_id);
  }
}

TEST_CASE("finalize_map resizes, normalizes, and handles the degenerate cases") {
  // already spanning [0,1] at native size: unchanged
  auto spanning = make_map({0.0, 1.0, 0.25, 0.75}, 2, 2, 0, "s");
  auto same = finalize_map(spanning, 2, 2);
  for (std::size_t i = 0; i < same.weights.size(); ++i)
    CHECK(same.weights[i] == doctest::Approx(spanning.weights[i]).epsilon(1e-15));

  // 2x2 anti-diagonal to 3x3: bilinear center is 0.5, endpoints survive
  auto anti = make_map({0, 1, 1, 0}, 2, 2, 0, "anti");
  auto up = finalize_map(anti, 3, 3);
  CHECK(up.weights.at(0, 1, 1, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(up.weights.min() == 0.0);
  CHECK(up.weights.max() == 1.0);

  // constants collapse to zero
  auto flat = make_map({0.4, 0.4, 0.4, 0.4}, 2, 2, 0, "flat");
  auto zeroed = finalize_map(flat, 4, 4);
  for (std::size_t i = 0; i < zeroed.weights.size(); ++i) CHECK(zeroed.weights[i] == 0.0);

  auto bad = make_map({0.1, std::nan(""), 0.3, 0.4}, 2, 2, 0, "nan");
  CHECK_THROWS_AS(finalize_map(bad, 4, 4), NumericError);
  CHECK_THROWS_AS(finalize_map(spanning, 1, 4), ConfigError);
}

TEST_CASE("finalized maps attain exact endpoints on non-constant input") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> vals(25);
    for (auto& v : vals) v = rng.uniform(-3, 3);
    auto m = finalize_map(make_map(vals, 5, 5, 0, "t"), 9, 9);
    CHECK(m.weights.min() == 0.0);
    CHECK(m.weights.max() == 1.0);
  }
}

TEST_CASE("attention network trains to perfect accuracy on separable blobs") {
  auto images = make_blobs(20, 16, 3);
  DatasetSplit data = split(images, 0.75, 5);
  AttentionNetworkSpec spec;
  spec.stage_module_counts = {1, 1, 1};
  spec.num_classes = 2;
  spec.input_side = 16;
  auto ran = AttentionNetwork::build(spec, 7, {"a", "b"});
  TrainLog log = ran.train(data, {30, 10, 2e-3, 9});
  CHECK(log.epochs.back().test_accuracy == doctest::Approx(1.0));
}

TEST_CASE("attention checkpoints and map archives round-trip") {
  test_helpers::TempDir dir("attention_io");
  AttentionNetworkSpec spec;
  spec.stage_module_counts = {1, 1};
  spec.num_classes = 2;
  spec.input_side = 16;
  auto ran = AttentionNetwork::build(spec, 5, {"u", "v"});
  ran.mark_trained();
  ran.save(dir.file("ran.bin"));
  auto back = AttentionNetwork::load(dir.file("ran.bin"));
  CHECK(back.weights_hash() == ran.weights_hash());
  CHECK(back.trained());
  CHECK(back.spec().stage_module_counts == spec.stage_module_counts);

  MapArchive archive;
  archive.class_names = {"u", "v"};
  archive.network_hash = "abc";
  archive.maps.push_back(make_map({0, 1, 0.5, 0.25}, 2, 2, 0, "m0"));
  archive.maps.push_back(make_map({1, 0, 0.5, 0.75}, 2, 2, 1, "m1"));
  save_map_archive(dir.file("maps.bin"), archive);
  MapArchive loaded = load_map_archive(dir.file("maps.bin"));
  CHECK(loaded.class_names == archive.class_names);
  CHECK(loaded.network_hash == "abc");
  REQUIRE(loaded.maps.size() == 2);
  for (int k = 0; k < 2; ++k)
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(loaded.maps[k].weights[i] == archive.maps[k].weights[i]);

  export_maps_as_images(loaded, dir.file("png"));
  CHECK(std::filesystem::exists(dir.path / "png" / "map_u.png"));
}

TEST_CASE("build_ran validates its spec") {
  AttentionNetworkSpec spec;
  spec.num_classes = 2;
  spec.stage_module_counts = {};
  CHECK_THROWS_AS(AttentionNetwork::build(spec, 1, {}), ConfigError);
  spec.stage_module_counts = {1, 0};
  CHECK_THROWS_AS(AttentionNetwork::build(spec, 1, {}), ConfigError);
  spec.stage_module_counts = {1};
  spec.last_stage_channels = 0;
  CHECK_THROWS_AS(AttentionNetwork::build(spec, 1, {}), ConfigError);
}
