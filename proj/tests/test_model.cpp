#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "poolformer/errors.hpp"
#include "poolformer/model.hpp"

using namespace poolformer;

namespace {

ModelConfig tiny(std::vector<std::size_t> pooling, std::vector<std::size_t> layers) {
  ModelConfig c;
  c.d = 8;
  c.d_rec = 8;
  c.pooling = std::move(pooling);
  c.layers = std::move(layers);
  c.dropout = 0.0;
  c.heads = 2;
  return c;
}

std::vector<std::uint8_t> random_tokens(SeededRng& rng, std::size_t n) {
  std::vector<std::uint8_t> t(n);
  for (auto& v : t) v = static_cast<std::uint8_t>(rng.below(256));
  return t;
}

// Moves every parameter (start vectors and head included) off its init.
void jitter(Poolformer& m, SeededRng& rng, double sd = 0.2) {
  for (auto& [name, p] : m.parameters()) {
    if (name.ends_with("lambda") || name.ends_with("theta")) continue;
    for (double& v : p->value.data()) v += sd * rng.normal();
  }
}

std::vector<double> vals(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("model: baseline layer count and flat base case") {
  ModelConfig base;
  CHECK(base.temporal_layer_count() == 36);
  const Poolformer m = Poolformer::build(base, 1);
  CHECK(m.count_inner(nn::InnerKind::rg_lru) == 36);
  CHECK(m.count_inner(nn::InnerKind::mlp) == 36);
  CHECK(m.magnitude_profile().size() == 36);
  MESSAGE("baseline parameter count: " << m.param_count());

  const Poolformer flat = Poolformer::build(tiny({}, {2}), 1);
  CHECK(flat.count_inner(nn::InnerKind::rg_lru) == 2);
  CHECK(flat.config().pooling_product() == 1);
  CHECK(flat.forward({1, 2, 3}, nullptr).shape() == Shape{3, 256});
}

TEST_CASE("model: config validation") {
  CHECK_THROWS_AS(Poolformer::build(tiny({2}, {1}), 0), ArgumentError);
  CHECK_THROWS_AS(Poolformer::build(tiny({2, 4}, {1, 1, 1, 1}), 0), ArgumentError);
  CHECK_THROWS_AS(Poolformer::build(tiny({1}, {1, 1}), 0), ArgumentError);
  ModelConfig c = tiny({2}, {1, 1});
  c.groups = 3;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = tiny({2}, {1, 1});
  c.d_rec = 7;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c.rglru_mode = nn::RgLruMode::real;
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("model: config text roundtrip") {
  ModelConfig c = tiny({2, 4}, {1, 2, 3});
  c.skip = SkipStyle::long_skip;
  c.placement = Placement::after;
  c.norm = nn::NormKind::rms;
  c.init_scale = 0.25;
  c.ring = nn::RingPreset::half;
  c.embedding = EmbeddingKind::learned;
  ConfigMap text;
  c.write_to(text);
  const ModelConfig back = ModelConfig::from_config(ConfigMap::parse(text.to_text()));
  ConfigMap again;
  back.write_to(again);
  CHECK(again.to_text() == text.to_text());
  CHECK_THROWS_AS(ModelConfig::from_config(ConfigMap::parse("model.skip = sideways")),
                  ArgumentError);
}

TEST_CASE("model: same seed gives identical parameters") {
  const ModelConfig c = tiny({2, 4}, {1, 1, 1});
  Poolformer a = Poolformer::build(c, 42);
  Poolformer b = Poolformer::build(c, 42);
  Poolformer other = Poolformer::build(c, 43);
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  const auto po = other.parameters();
  REQUIRE(pa.size() == pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK(vals(pa[i].param->value) == vals(pb[i].param->value));
    any_diff = any_diff || vals(pa[i].param->value) != vals(po[i].param->value);
  }
  CHECK(any_diff);
}

TEST_CASE("model: init scale 0 reduces to head(norm(embedding))") {
  for (auto emb : {EmbeddingKind::sinusoidal, EmbeddingKind::learned}) {
    ModelConfig c = tiny({2, 4}, {1, 1, 1});
    c.init_scale = 0.0;
    c.embedding = emb;
    Poolformer m = Poolformer::build(c, 3);
    SeededRng rng(9);
    const auto tokens = random_tokens(rng, 16);
    CHECK(vals(m.forward(tokens, nullptr)) == vals(Tensor({16, 256})));
    // Give the head and start vectors weights; residual branches still vanish.
    for (auto& [name, p] : m.parameters()) {
      if (name.starts_with("head") || name.ends_with("start")) {
        for (double& v : p->value.data()) v = rng.normal();
      }
    }
    const Tensor expect = m.head().forward(m.final_norm().forward(m.embed(tokens), nullptr), nullptr);
    CHECK(vals(m.forward(tokens, nullptr)) == vals(expect));
  }
}

TEST_CASE("model: causality through pooling") {
  SeededRng rng(2024);
  const std::vector<std::vector<std::size_t>> poolings{{2, 4}, {2}, {4, 4}, {}};
  for (int trial = 0; trial < 20; ++trial) {
    const auto& pool = poolings[trial % poolings.size()];
    std::vector<std::size_t> layers(pool.size() + 1, 1);
    ModelConfig c = tiny(pool, layers);
    if (trial % 3 == 1) c.skip = SkipStyle::long_skip;
    if (trial % 5 == 2) c.deepest_mixer = nn::InnerKind::attention;
    Poolformer m = Poolformer::build(c, 100 + trial);
    jitter(m, rng);
    const std::size_t s = 32;
    const auto tokens = random_tokens(rng, s);
    const std::size_t t = rng.below(s);
    auto perturbed = tokens;
    perturbed[t] = static_cast<std::uint8_t>(tokens[t] + 1 + rng.below(255));
    const Tensor a = m.forward(tokens, nullptr);
    const Tensor b = m.forward(perturbed, nullptr);
    bool prefix_same = true;
    for (std::size_t k = 0; k < t; ++k) {
      prefix_same = prefix_same && std::equal(a.row(k).begin(), a.row(k).end(), b.row(k).begin());
    }
    CHECK_MESSAGE(prefix_same, "trial " << trial << " t=" << t);
    CHECK(!std::equal(a.row(t).begin(), a.row(t).end(), b.row(t).begin()));
  }
}

TEST_CASE("model: shapes, batch independence, divisibility") {
  SeededRng rng(5);
  for (const auto& pool : std::vector<std::vector<std::size_t>>{{}, {2}, {2, 4}, {4, 4}}) {
    ModelConfig c = tiny(pool, std::vector<std::size_t>(pool.size() + 1, 1));
    Poolformer m = Poolformer::build(c, 1);
    jitter(m, rng);
    const std::size_t s = 2 * c.pooling_product() * 2;
    const auto row = random_tokens(rng, s);
    const Tensor out = m.forward_batch({row, row});
    CHECK(out.shape() == Shape{2, s, 256});
    CHECK(std::equal(out.data().begin(), out.data().begin() + s * 256,
                     out.data().begin() + s * 256));
  }
  const Poolformer m = Poolformer::build(tiny({2, 4}, {1, 1, 1}), 1);
  try {
    m.forward(std::vector<std::uint8_t>(12, 0), nullptr);
    FAIL("expected ArgumentError");
  } catch (const ArgumentError& e) {
    CHECK(std::string(e.what()).find("8") != std::string::npos);
  }
}

TEST_CASE("model: short and long skips agree at init scale 0") {
  ModelConfig c = tiny({2, 4}, {1, 1, 1});
  c.init_scale = 0.0;
  Poolformer a = Poolformer::build(c, 8);
  c.skip = SkipStyle::long_skip;
  Poolformer b = Poolformer::build(c, 8);
  SeededRng ra(1), rb(1);
  for (auto* m : {&a, &b}) {
    SeededRng& r = m == &a ? ra : rb;
    for (auto& [name, p] : m->parameters()) {
      if (name.starts_with("head")) {
        for (double& v : p->value.data()) v = r.normal();
      }
    }
  }
  SeededRng rng(4);
  const auto tokens = random_tokens(rng, 24);
  CHECK(vals(a.forward(tokens, nullptr)) == vals(b.forward(tokens, nullptr)));
}

TEST_CASE("model: eval determinism and dropout in training mode") {
  ModelConfig c = tiny({2}, {1, 1});
  c.dropout = 0.3;
  Poolformer m = Poolformer::build(c, 2);
  SeededRng rng(6);
  jitter(m, rng);
  const auto tokens = random_tokens(rng, 16);
  const Tensor a = m.forward(tokens, nullptr);
  CHECK(vals(a) == vals(m.forward(tokens, nullptr)));
  m.set_dropout(true, 77);
  const Tensor t1 = m.forward(tokens, nullptr);
  CHECK(vals(t1) != vals(a));
  CHECK(vals(t1) == vals(m.forward(tokens, nullptr)));
  m.set_dropout(true, 78);
  CHECK(vals(m.forward(tokens, nullptr)) != vals(t1));
  m.set_dropout(false, 0);
  CHECK(vals(m.forward(tokens, nullptr)) == vals(a));
}

TEST_CASE("model: streaming step matches full forward") {
  SeededRng rng(10);
  for (auto skip : {SkipStyle::short_skip, SkipStyle::long_skip}) {
    for (auto mixer : {nn::InnerKind::rg_lru, nn::InnerKind::attention}) {
      ModelConfig c = tiny({2, 4}, {1, 1, 1});
      c.skip = skip;
      c.deepest_mixer = mixer;
      Poolformer m = Poolformer::build(c, 12);
      jitter(m, rng);
      const auto tokens = random_tokens(rng, 24);
      const Tensor full = m.forward(tokens, nullptr);
      auto state = m.start_stream();
      double worst = 0;
      for (std::size_t k = 0; k < tokens.size(); ++k) {
        const auto logits = m.step(state, tokens[k]);
        for (std::size_t v = 0; v < 256; ++v) {
          worst = std::max(worst, std::abs(logits[v] - full.at(k, v)));
        }
      }
      CHECK(worst < 1e-10);
    }
  }
}

TEST_CASE("model: samplers") {
  ModelConfig c = tiny({2, 4}, {1, 1, 1});
  Poolformer m = Poolformer::build(c, 21);
  SeededRng jr(3);
  jitter(m, jr, 0.5);

  SeededRng r1(99), r2(99), r3(99);
  const auto stateful = sample_stateful(m, 32, 1.0, r1);
  const auto full = sample_full_forward(m, 32, 1.0, r2);
  CHECK(stateful.size() == 32);
  CHECK(stateful.front() == 128);
  CHECK(stateful == full);
  CHECK(sample_stateful(m, 32, 1.0, r3) == stateful);

  // temperature -> 0+ is greedy decoding
  SeededRng r4(5);
  const auto cold = sample_stateful(m, 16, 1e-9, r4);
  std::vector<std::uint8_t> greedy{128};
  auto state = m.start_stream();
  while (greedy.size() < 16) {
    const auto logits = m.step(state, greedy.back());
    greedy.push_back(static_cast<std::uint8_t>(
        std::max_element(logits.begin(), logits.end()) - logits.begin()));
  }
  CHECK(cold == greedy);

  SeededRng r5(1);
  CHECK_THROWS_AS(sample_stateful(m, 12, 1.0, r5), ArgumentError);
  CHECK_THROWS_AS(sample_stateful(m, 16, 0.0, r5), ArgumentError);
}

TEST_CASE("model: sample_token frequencies") {
  const std::vector<double> logits{0.0, std::log(3.0)};
  SeededRng rng(8);
  int ones = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) ones += sample_token(logits, 1.0, rng);
  CHECK(std::abs(ones / double(n) - 0.75) < 0.015);
}

TEST_CASE("model: magnitude profile at init") {
  ModelConfig c = tiny({2, 4}, {2, 1, 1});
  for (auto mode : {nn::RgLruMode::real, nn::RgLruMode::complex}) {
    c.rglru_mode = mode;
    const Poolformer m = Poolformer::build(c, 4);
    const auto prof = m.magnitude_profile();
    CHECK(prof.size() == 2 * 2 + 2 * 1 + 1);
    for (double v : prof) {
      CHECK(v >= 0.9);
      CHECK(v <= 0.99);
    }
  }
}

TEST_CASE("model: checkpoint roundtrip and corruption") {
  ModelConfig c = tiny({2, 4}, {1, 1, 1});
  c.embedding = EmbeddingKind::learned;
  c.skip = SkipStyle::long_skip;
  Poolformer m = Poolformer::build(c, 31);
  SeededRng rng(2);
  jitter(m, rng);
  const std::string path = temp_path("pf_model_roundtrip.ckpt");
  save_checkpoint(m, path);
  Poolformer back = load_checkpoint(path);
  CHECK(back.param_count() == m.param_count());
  CHECK(back.magnitude_profile() == m.magnitude_profile());
  const auto tokens = random_tokens(rng, 16);
  CHECK(vals(back.forward(tokens, nullptr)) == vals(m.forward(tokens, nullptr)));
  const auto pa = m.parameters();
  const auto pb = back.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(vals(pa[i].param->value) == vals(pb[i].param->value));
  }

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };
  write(bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  write(bad);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  bad = bytes;
  bad[8] = 9;  // version
  write(bad);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  write(bytes + "junk");
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_checkpoint(path), StateError);
}
