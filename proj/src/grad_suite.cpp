#include "poolformer/training.hpp"

namespace poolformer {

namespace {

// Parameters leave their structured init (unit gains, zero biases); the
// recurrence parameters keep their ring init.
template <class L>
void jitter(L& layer, SeededRng& rng) {
  layer.visit_params(
      [&](const std::string& name, Parameter& p) {
        if (name.ends_with("lambda") || name.ends_with("theta")) return;
        for (double& v : p.value.data()) v += 0.3 * rng.normal();
      },
      "");
}

template <class L>
SuiteRow check_layer(const std::string& kind, L layer, SeededRng& rng, std::size_t s, std::size_t d) {
  jitter(layer, rng);
  const Tensor x = gaussian_init(rng, {s, d}, 1.0);
  const GradCheckReport r = gradient_check(layer, x);
  return {kind, r.max_rel_error, r.passed()};
}

}  // namespace

std::vector<SuiteRow> run_gradient_suite(std::uint64_t seed) {
  using namespace nn;
  SeededRng rng(seed);
  std::vector<SuiteRow> rows;
  const std::size_t s = 8, d = 4;

  rows.push_back(check_layer("dense", Dense::make(d, 6, true, rng), rng, s, d));
  rows.push_back(check_layer("gelu", Gelu{}, rng, s, d));
  rows.push_back(check_layer("layer_norm", Norm::make(NormKind::layer, d), rng, s, d));
  rows.push_back(check_layer("rms_norm", Norm::make(NormKind::rms, d), rng, s, d));
  for (auto mode : {RgLruMode::real, RgLruMode::complex}) {
    for (std::size_t d_rec : {d, 2 * d}) {
      rows.push_back(check_layer("rg_lru_" + std::string(to_string(mode)) + "_drec" + std::to_string(d_rec),
                                 RgLru::make(mode, d, d_rec, rng, ring_range(RingPreset::small)), rng, 6, d));
    }
  }
  for (std::size_t g : {std::size_t{1}, std::size_t{2}, d}) {
    rows.push_back(check_layer("down_pool_G" + std::to_string(g), DownPool::make(2, g, d, rng), rng, s, d));
    rows.push_back(check_layer("up_pool_G" + std::to_string(g), UpPool::make(2, g, d, rng, 1.0), rng, s / 2, d));
  }
  rows.push_back(check_layer("attention_mha", CausalAttention::make(d, 2, false, rng), rng, s, d));
  rows.push_back(check_layer("attention_mqa", CausalAttention::make(d, 2, true, rng), rng, s, d));
  for (bool gated : {true, false}) {
    for (auto inner : {InnerKind::mlp, InnerKind::rg_lru, InnerKind::attention}) {
      ResBlockConfig rc;
      rc.gated = gated;
      rc.inner = inner;
      rc.d = d;
      rc.d_rec = d;
      rc.heads = 2;
      rows.push_back(check_layer(std::string("resblock_") + (gated ? "gated_" : "ungated_") +
                                     std::string(to_string(inner)),
                                 ResBlock::make(rc, rng), rng, s, d));
    }
  }

  ModelConfig mc;
  mc.d = 4;
  mc.d_rec = 4;
  mc.pooling = {2};
  mc.layers = {1, 1};
  mc.dropout = 0.0;
  mc.init_scale = 1.0;
  Poolformer model = Poolformer::build(mc, seed);
  for (auto& np : model.parameters()) {
    if (np.name.ends_with("lambda") || np.name.ends_with("theta")) continue;
    for (double& v : np.param->value.data()) v += 0.3 * rng.normal();
  }
  Sequence tokens(8);
  for (auto& t : tokens) t = static_cast<std::uint8_t>(rng.below(256));
  const GradCheckReport r = check_model_gradients(model, tokens);
  rows.push_back({"poolformer_nll", r.max_rel_error, r.passed()});
  return rows;
}

}  // namespace poolformer
