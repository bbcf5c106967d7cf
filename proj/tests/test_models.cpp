#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "gridcast/error.hpp"
#include "gridcast/models/checkpoint.hpp"
#include "gridcast/models/model.hpp"

using namespace gridcast;
using models::BackboneConfig;
using models::Family;
using models::Model;
using nn::Tensor;

namespace {

Tensor random_input(nn::Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

BackboneConfig tiny(Family family) {
  BackboneConfig c;
  c.family = family;
  c.width = 2;
  // Family-specific fields only: the serialised form omits the other family's.
  if (family == Family::hrnet) c.stages = {{1, 1}, {2, 1}};
  else c.depth = 2;
  c.geo_embedding.dim = 1;
  c.in_channels = 3;
  c.out_frames = 1;
  c.out_channels = 2;
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "gridcast_test_models";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("parameter counts match a hand count") {
  // hrnet, widths {2, 4}, 3 input channels, 2 output planes, 4x4 grid:
  // stem 54+4, stage1 block 2*(36+4), transition 72+8, stage2 blocks 2*(36+4) + 2*(144+8),
  // fuse 1->0 8+4, fuse 0->1 72+8, head 12+2, embedding 16.
  CHECK(Model(tiny(Family::hrnet), 4, 4, 1).parameter_count() == 724);
  // unet depth 2: enc0 (54+4)+(36+4), enc1 (72+8)+(144+8), dec0 (108+4)+(36+4), head 4+2, embedding 16.
  CHECK(Model(tiny(Family::unet), 4, 4, 1).parameter_count() == 504);
  auto no_bn = tiny(Family::unet);
  no_bn.batch_norm = false;
  // Each conv trades its 2*out BN parameters for out biases: 2+2+4+4+2+2 = 16 fewer.
  CHECK(Model(no_bn, 4, 4, 1).parameter_count() == 504 - 16);
}

TEST_CASE("output shapes for both families") {
  for (auto family : {Family::hrnet, Family::unet}) {
    auto cfg = tiny(family);
    cfg.out_frames = 3;
    Model m(cfg, 8, 4, 2);
    auto y = m.predict(random_input({5, 2, 8, 4}, 3));
    CHECK(y.shape() == nn::Shape{5, 6, 8, 4});
    CHECK_THROWS_AS(m.predict(random_input({1, 3, 8, 4}, 3)), ShapeError);
    CHECK_THROWS_AS(m.predict(random_input({1, 2, 4, 4}, 3)), ShapeError);
  }
}

TEST_CASE("default backbone takes 207 feature channels plus an 8-channel embedding") {
  BackboneConfig cfg;
  CHECK(cfg.in_channels == 215);
  CHECK(cfg.geo_embedding.dim == 8);
  CHECK(cfg.feature_channels() == 207);
  CHECK(cfg.out_planes() == 54);
  Model m(cfg, 8, 8, 4);
  REQUIRE(m.geo_embedding() != nullptr);
  CHECK(m.geo_embedding()->table().value.shape() == nn::Shape{8, 8, 8});
  auto y = m.predict(random_input({1, 207, 8, 8}, 5));
  CHECK(y.shape() == nn::Shape{1, 54, 8, 8});

  FeatureBundle bundle;
  bundle.height = 8;
  bundle.width = 8;
  bundle.manifest.append("features", 207);
  bundle.input.assign(207 * 64, 0.5f);
  const auto joined = models::geo_embed_concat(bundle, *m.geo_embedding());
  CHECK(joined.channels() == 215);
  CHECK(joined.manifest.valid());
  CHECK(joined.manifest.find("geo_embedding").begin == 207);
  const auto table = m.geo_embedding()->read();
  CHECK(joined.plane(207)[9] == static_cast<float>(table[9]));
}

TEST_CASE("grid and configuration validation") {
  auto cfg = tiny(Family::hrnet);
  CHECK_THROWS_AS(Model(cfg, 5, 4, 1), ConfigError);  // one halving needs even dims
  cfg.stages = {{2, 1}, {1, 1}};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny(Family::hrnet);
  cfg.in_channels = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny(Family::unet);
  cfg.depth = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(models::parse_family("transformer"), ConfigError);
  CHECK(BackboneConfig::hrnet_w18().branch_widths() == std::vector<int>{18, 36, 72, 144});
  CHECK(BackboneConfig::hrnet_w48().branch_widths() == std::vector<int>{48, 96, 192, 384});
  auto unet = tiny(Family::unet);
  unet.depth = 3;
  CHECK(models::unet_decoder_in_channels(unet) == std::vector<int>{12, 6});
}

TEST_CASE("config JSON round trip") {
  auto cfg = tiny(Family::hrnet);
  cfg.activation = models::ActivationKind::leaky_relu(0.2);
  cfg.geo_embedding.max_norm = 1.5;
  ordered_json j = cfg;
  CHECK(j.get<BackboneConfig>() == cfg);
  ordered_json preset{{"preset", "hrnet_w48"}, {"in_channels", 215}};
  CHECK(preset.get<BackboneConfig>().width == 48);
  CHECK_THROWS_AS((ordered_json{{"preset", "resnet"}}.get<BackboneConfig>()), ConfigError);
}

TEST_CASE("zero weights give a constant head-bias output") {
  Model m(tiny(Family::hrnet), 4, 4, 6);
  m.set_training(false);
  double b0 = 0.0;
  for (auto* p : m.parameters()) {
    if (p->name == "head.weight") p->value.fill(0.0);
    if (p->name == "head.bias") {
      p->value[0] = 0.25;
      p->value[1] = -0.5;
      b0 = p->value[0];
    }
  }
  const auto y = m.predict(random_input({2, 2, 4, 4}, 7));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(y[(n * 2 + 0) * 16 + i] == b0);
      CHECK(y[(n * 2 + 1) * 16 + i] == -0.5);
    }
}

TEST_CASE("construction and prediction are deterministic per seed") {
  auto cfg = tiny(Family::unet);
  Model a(cfg, 4, 4, 9), b(cfg, 4, 4, 9), c(cfg, 4, 4, 10);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->value == pb[i]->value);
    if (!(pa[i]->value == pc[i]->value)) any_diff = true;
  }
  CHECK(any_diff);
  const auto x = random_input({2, 2, 4, 4}, 11);
  CHECK(a.predict(x) == b.predict(x));
}

TEST_CASE("embedding reads are renormalised but the table is not") {
  models::GeoEmbedding e(3, 2, 2, 0.1, 12);
  for (auto& v : e.table().value.data()) v *= 100.0;
  const auto raw = e.table().value;
  for (int id = 0; id < 4; ++id) {
    const auto v = e.lookup(id);
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    CHECK(std::sqrt(n2) <= 0.1 + 1e-12);
    // Direction preserved.
    CHECK(v[0] * raw[static_cast<std::size_t>(id)] > 0.0);
  }
  CHECK(e.table().value == raw);
  CHECK_THROWS_AS(e.lookup(4), ShapeError);
  CHECK_THROWS_AS(models::GeoEmbedding(2, 2, 2, -1.0, 1), ConfigError);
}

TEST_CASE("checkpoint round trip restores parameters, buffers and predictions") {
  auto cfg = tiny(Family::hrnet);
  cfg.geo_embedding.max_norm = 2.0;
  Model m(cfg, 4, 4, 13);
  // Move running stats off their initial values.
  m.set_training(true);
  const auto x = random_input({3, 2, 4, 4}, 14);
  m.predict(x);
  m.set_training(false);
  const auto before = m.predict(x);

  const auto path = temp_path("roundtrip.ckpt");
  models::save_checkpoint(path, m, {42, 3, 0.125, ordered_json{{"note", "x"}}});
  auto loaded = models::load_checkpoint(path);
  CHECK(loaded.meta.seed == 42);
  CHECK(loaded.meta.epoch == 3);
  CHECK(loaded.meta.metric == 0.125);
  CHECK(loaded.meta.extra["note"] == "x");
  CHECK(loaded.model.config() == cfg);
  const auto pa = m.parameters(), pb = loaded.model.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
  const auto ba = m.buffers(), bb = loaded.model.buffers();
  REQUIRE(ba.size() == bb.size());
  for (std::size_t i = 0; i < ba.size(); ++i) CHECK(*ba[i].second == *bb[i].second);
  loaded.model.set_training(false);
  CHECK(loaded.model.predict(x) == before);
}

TEST_CASE("corrupt checkpoints are rejected") {
  Model m(tiny(Family::unet), 4, 4, 15);
  const auto path = temp_path("corrupt.ckpt");
  models::save_checkpoint(path, m, {});
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 8);
  CHECK_THROWS_AS(models::load_checkpoint(path), Error);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "not a checkpoint";
  }
  CHECK_THROWS_AS(models::load_checkpoint(path), Error);
  CHECK_THROWS_AS(models::load_checkpoint(temp_path("missing.ckpt")), Error);
}
