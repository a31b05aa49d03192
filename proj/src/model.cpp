#include "poolformer/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "poolformer/errors.hpp"

namespace poolformer {

using nn::InnerKind;
using nn::ResBlock;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

// ---------------------------------------------------------------- config

void ModelConfig::validate() const {
  if (vocab != 256) throw ArgumentError("model: vocabulary must be 256 (8-bit codes)");
  if (d == 0) throw ArgumentError("model: d must be positive");
  if (layers.size() != pooling.size() + 1) {
    throw ArgumentError("model: layer config needs " + std::to_string(pooling.size() + 1) +
                        " entries for " + std::to_string(pooling.size()) +
                        " pooling factors, got " + std::to_string(layers.size()));
  }
  for (std::size_t f : pooling) {
    if (f < 2) throw ArgumentError("model: every pooling factor must be >= 2");
  }
  if (embedding == EmbeddingKind::sinusoidal && d % 2 != 0) {
    throw ArgumentError("model: sinusoidal embedding needs an even d");
  }
  if (groups == 0 || d % groups != 0) throw ArgumentError("model: groups must divide d");
  if (d_rec == 0) throw ArgumentError("model: d_rec must be positive");
  if (rglru_mode == nn::RgLruMode::complex && d_rec % 2 != 0) {
    throw ArgumentError("model: complex rg-lru needs an even d_rec");
  }
  if (deepest_mixer == InnerKind::attention && (heads == 0 || d % heads != 0)) {
    throw ArgumentError("model: heads must divide d");
  }
  if (deepest_mixer == InnerKind::mlp) {
    throw ArgumentError("model: deepest mixer must be rg_lru or attention");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ArgumentError("model: dropout must be in [0, 1)");
  if (init_scale && *init_scale < 0.0) throw ArgumentError("model: init_scale must be >= 0");
}

std::size_t ModelConfig::pooling_product() const {
  std::size_t p = 1;
  for (std::size_t f : pooling) p *= f;
  return p;
}

std::size_t ModelConfig::temporal_layer_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) n += 2 * layers[i];
  return layers.empty() ? 0 : n + layers.back();
}

double ModelConfig::effective_init_scale() const {
  if (init_scale) return *init_scale;
  const std::size_t n = resblock_count();
  return n == 0 ? 1.0 : 1.0 / static_cast<double>(n);
}

const std::set<std::string>& ModelConfig::keys() {
  static const std::set<std::string> k{
      "model.vocab",       "model.d",          "model.d_rec",       "model.pooling",
      "model.layers",      "model.dropout",    "model.skip",        "model.placement",
      "model.norm",        "model.gated",      "model.deepest_mixer", "model.rglru_mode",
      "model.init_scale",  "model.ring",       "model.groups",      "model.heads",
      "model.multi_query", "model.embedding"};
  return k;
}

ModelConfig ModelConfig::from_config(const ConfigMap& c) {
  ModelConfig m;
  m.vocab = static_cast<std::size_t>(c.get_int("model.vocab", 256));
  m.d = static_cast<std::size_t>(c.get_int("model.d", static_cast<std::int64_t>(m.d)));
  m.d_rec = static_cast<std::size_t>(c.get_int("model.d_rec", static_cast<std::int64_t>(m.d_rec)));
  m.pooling = c.get_list("model.pooling", m.pooling);
  m.layers = c.get_list("model.layers", m.layers);
  m.dropout = c.get_double("model.dropout", m.dropout);
  const std::string skip = c.get_string("model.skip", "short");
  if (skip == "short") {
    m.skip = SkipStyle::short_skip;
  } else if (skip == "long") {
    m.skip = SkipStyle::long_skip;
  } else {
    throw ArgumentError("model.skip must be short or long, got '" + skip + "'");
  }
  const std::string placement = c.get_string("model.placement", "around");
  if (placement == "around") {
    m.placement = Placement::around;
  } else if (placement == "after") {
    m.placement = Placement::after;
  } else {
    throw ArgumentError("model.placement must be around or after, got '" + placement + "'");
  }
  m.norm = nn::parse_norm_kind(c.get_string("model.norm", "layer"));
  m.gated = c.get_bool("model.gated", m.gated);
  m.deepest_mixer = nn::parse_inner_kind(c.get_string("model.deepest_mixer", "rg_lru"));
  m.rglru_mode = nn::parse_rglru_mode(c.get_string("model.rglru_mode", "complex"));
  const std::string scale = c.get_string("model.init_scale", "auto");
  if (scale != "auto") m.init_scale = c.get_double("model.init_scale", 0.0);
  m.ring = nn::parse_ring_preset(c.get_string("model.ring", "small"));
  m.groups = static_cast<std::size_t>(c.get_int("model.groups", 1));
  m.heads = static_cast<std::size_t>(c.get_int("model.heads", 4));
  m.multi_query = c.get_bool("model.multi_query", false);
  const std::string emb = c.get_string("model.embedding", "sinusoidal");
  if (emb == "sinusoidal") {
    m.embedding = EmbeddingKind::sinusoidal;
  } else if (emb == "learned") {
    m.embedding = EmbeddingKind::learned;
  } else {
    throw ArgumentError("model.embedding must be sinusoidal or learned, got '" + emb + "'");
  }
  m.validate();
  return m;
}

void ModelConfig::write_to(ConfigMap& c) const {
  c.set("model.vocab", std::to_string(vocab));
  c.set("model.d", std::to_string(d));
  c.set("model.d_rec", std::to_string(d_rec));
  c.set("model.pooling", format_list(pooling));
  c.set("model.layers", format_list(layers));
  c.set("model.dropout", format_double(dropout));
  c.set("model.skip", skip == SkipStyle::short_skip ? "short" : "long");
  c.set("model.placement", placement == Placement::around ? "around" : "after");
  c.set("model.norm", std::string(nn::to_string(norm)));
  c.set("model.gated", gated ? "true" : "false");
  c.set("model.deepest_mixer", std::string(nn::to_string(deepest_mixer)));
  c.set("model.rglru_mode", std::string(nn::to_string(rglru_mode)));
  c.set("model.init_scale", init_scale ? format_double(*init_scale) : "auto");
  c.set("model.ring", std::string(nn::to_string(ring)));
  c.set("model.groups", std::to_string(groups));
  c.set("model.heads", std::to_string(heads));
  c.set("model.multi_query", multi_query ? "true" : "false");
  c.set("model.embedding", embedding == EmbeddingKind::sinusoidal ? "sinusoidal" : "learned");
}

// ---------------------------------------------------------------- stack

Tensor Stack::forward(const Tensor& x, Cache* cache) const {
  if (cache) cache->blocks.resize(blocks.size());
  Tensor h = x;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    h = blocks[i].forward(h, cache ? &cache->blocks[i] : nullptr);
  }
  return h;
}

Tensor Stack::backward(const Cache& cache, const Tensor& dy) {
  Tensor g = dy;
  for (std::size_t i = blocks.size(); i-- > 0;) g = blocks[i].backward(cache.blocks[i], g);
  return g;
}

void Stack::visit_params(const ParamVisitor& visit, const std::string& prefix) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].visit_params(visit, join_name(prefix, std::to_string(i)));
  }
}

Stack::State Stack::initial_state() const {
  State s;
  for (const auto& b : blocks) s.blocks.push_back(b.initial_state());
  return s;
}

std::vector<double> Stack::step(std::vector<double> x, State& state) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) x = blocks[i].step(x, state.blocks[i]);
  return x;
}

// ---------------------------------------------------------------- skip block

Tensor SkipBlock::forward(const Tensor& x, Cache* cache) const {
  if (is_leaf()) return deepest.forward(x, cache ? &cache->deepest : nullptr);
  if (x.rows() % factor != 0) {
    throw ArgumentError("skip block: length " + std::to_string(x.rows()) +
                        " is not a multiple of " + std::to_string(factor));
  }
  const std::size_t d = x.cols();
  const Tensor a = pre.forward(x, cache ? &cache->pre : nullptr);
  const Tensor p = down.forward(a, cache ? &cache->down : nullptr);
  Tensor shifted({p.rows(), d});
  std::copy(start.value.data().begin(), start.value.data().end(), shifted.row(0).begin());
  for (std::size_t i = 1; i < p.rows(); ++i) {
    std::copy(p.row(i - 1).begin(), p.row(i - 1).end(), shifted.row(i).begin());
  }
  if (cache) {
    cache->child.resize(1);
    cache->pooled_len = p.rows();
  }
  const Tensor z = child[0].forward(shifted, cache ? &cache->child[0] : nullptr);
  Tensor u = up.forward(z, cache ? &cache->up : nullptr);
  if (style == SkipStyle::short_skip) {
    u += a;
    return post.forward(u, cache ? &cache->post : nullptr);
  }
  Tensor y = post.forward(u, cache ? &cache->post : nullptr);
  y += x;
  return y;
}

Tensor SkipBlock::backward(const Cache& cache, const Tensor& dy) {
  if (is_leaf()) return deepest.backward(cache.deepest, dy);
  Tensor du = post.backward(cache.post, dy);
  const Tensor dz = up.backward(cache.up, du);
  const Tensor dshift = child[0].backward(cache.child[0], dz);
  const std::size_t d = dshift.cols();
  Tensor dp({cache.pooled_len, d});
  for (std::size_t c = 0; c < d; ++c) start.grad[c] += dshift.at(0, c);
  for (std::size_t i = 1; i < cache.pooled_len; ++i) {
    std::copy(dshift.row(i).begin(), dshift.row(i).end(), dp.row(i - 1).begin());
  }
  Tensor da = down.backward(cache.down, dp);
  if (style == SkipStyle::short_skip) {
    da += du;  // skip around down/inner/up
    return pre.backward(cache.pre, da);
  }
  Tensor dx = pre.backward(cache.pre, da);
  dx += dy;
  return dx;
}

void SkipBlock::visit_params(const ParamVisitor& visit, const std::string& prefix) {
  if (is_leaf()) {
    deepest.visit_params(visit, join_name(prefix, "deepest"));
    return;
  }
  pre.visit_params(visit, join_name(prefix, "pre"));
  down.visit_params(visit, join_name(prefix, "down"));
  visit(join_name(prefix, "start"), start);
  child[0].visit_params(visit, join_name(prefix, "inner"));
  up.visit_params(visit, join_name(prefix, "up"));
  post.visit_params(visit, join_name(prefix, "post"));
}

SkipBlock::State SkipBlock::initial_state() const {
  State s;
  if (is_leaf()) {
    s.deepest = deepest.initial_state();
    return s;
  }
  s.pre = pre.initial_state();
  s.post = post.initial_state();
  s.child.push_back(child[0].initial_state());
  return s;
}

std::vector<double> SkipBlock::step(const std::vector<double>& x, State& s) const {
  if (is_leaf()) return deepest.step(x, s.deepest);
  std::vector<double> a = pre.step(x, s.pre);
  const std::size_t phase = s.t % factor;
  if (phase == 0) {
    std::vector<double> pooled;
    if (s.t == 0) {
      pooled.assign(start.value.data().begin(), start.value.data().end());
    } else {
      Tensor rows({factor, x.size()});
      for (std::size_t i = 0; i < factor; ++i) {
        std::copy(s.buffer[i].begin(), s.buffer[i].end(), rows.row(i).begin());
      }
      pooled = down.pool_rows(rows);
    }
    s.buffer.clear();
    s.z = child[0].step(pooled, s.child[0]);
  }
  s.buffer.push_back(a);
  ++s.t;
  std::vector<double> u = up.expand_row(s.z, phase);
  if (style == SkipStyle::short_skip) {
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += a[i];
    return post.step(std::move(u), s.post);
  }
  std::vector<double> y = post.step(std::move(u), s.post);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
  return y;
}

// ---------------------------------------------------------------- model

namespace {

struct Builder {
  const ModelConfig& cfg;
  SeededRng root;
  double scale;
  std::uint64_t next_tag = 1;

  nn::ResBlock block(InnerKind kind, const std::string& path) {
    nn::ResBlockConfig rc;
    rc.gated = cfg.gated;
    rc.inner = kind;
    rc.norm = cfg.norm;
    rc.dropout = cfg.dropout;
    rc.init_scale = scale;
    rc.d = cfg.d;
    rc.d_rec = cfg.d_rec;
    rc.rglru_mode = cfg.rglru_mode;
    rc.ring = nn::ring_range(cfg.ring);
    rc.heads = cfg.heads;
    rc.multi_query = cfg.multi_query;
    SeededRng rng = root.split(path);
    return nn::ResBlock::make(rc, rng, next_tag++);
  }

  // `count` temporal layers, each a mixer block then an MLP block.
  Stack stack(std::size_t count, InnerKind mixer, const std::string& path) {
    Stack s;
    for (std::size_t i = 0; i < count; ++i) {
      s.blocks.push_back(block(mixer, path + "." + std::to_string(2 * i)));
      s.blocks.push_back(block(InnerKind::mlp, path + "." + std::to_string(2 * i + 1)));
    }
    return s;
  }

  SkipBlock level(std::size_t i) {
    const std::string path = "level" + std::to_string(i);
    SkipBlock b;
    b.style = cfg.skip;
    if (i == cfg.pooling.size()) {
      b.factor = 0;
      b.deepest = stack(cfg.layers[i], cfg.deepest_mixer, path + ".deepest");
      return b;
    }
    b.factor = cfg.pooling[i];
    const std::size_t l = cfg.layers[i];
    if (cfg.placement == Placement::around) {
      b.pre = stack(l, InnerKind::rg_lru, path + ".pre");
      b.post = stack(l, InnerKind::rg_lru, path + ".post");
    } else {
      b.post = stack(2 * l, InnerKind::rg_lru, path + ".post");
    }
    SeededRng down_rng = root.split(path + ".down");
    b.down = nn::DownPool::make(b.factor, cfg.groups, cfg.d, down_rng);
    SeededRng up_rng = root.split(path + ".up");
    b.up = nn::UpPool::make(b.factor, cfg.groups, cfg.d, up_rng, scale);
    b.start = Parameter(Tensor({cfg.d}));
    b.child.push_back(level(i + 1));
    return b;
  }
};

template <class F>
void walk_blocks(SkipBlock& b, F& f) {
  if (b.is_leaf()) {
    for (auto& r : b.deepest.blocks) f(r);
    return;
  }
  for (auto& r : b.pre.blocks) f(r);
  walk_blocks(b.child[0], f);
  for (auto& r : b.post.blocks) f(r);
}

template <class F>
void walk_blocks(const SkipBlock& b, F& f) {
  if (b.is_leaf()) {
    for (const auto& r : b.deepest.blocks) f(r);
    return;
  }
  for (const auto& r : b.pre.blocks) f(r);
  walk_blocks(b.child[0], f);
  for (const auto& r : b.post.blocks) f(r);
}

}  // namespace

template <class F>
void Poolformer::for_each_resblock(F&& f) {
  walk_blocks(body_, f);
}

template <class F>
void Poolformer::for_each_resblock(F&& f) const {
  walk_blocks(body_, f);
}

Poolformer Poolformer::build(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Poolformer m;
  m.cfg_ = cfg;
  Builder b{cfg, SeededRng(seed), cfg.effective_init_scale()};
  m.body_ = b.level(0);
  if (cfg.embedding == EmbeddingKind::sinusoidal) {
    m.sin_table_ = nn::sinusoidal_table(cfg.d);
  } else {
    SeededRng rng = b.root.split("embedding");
    m.embedding_ = Parameter(gaussian_init(rng, {cfg.vocab, cfg.d}, 1.0));
  }
  m.final_norm_ = nn::Norm::make(cfg.norm, cfg.d);
  SeededRng head_rng = b.root.split("head");
  m.head_ = nn::Dense::make(cfg.d, cfg.vocab, true, head_rng, b.scale);
  return m;
}

Tensor Poolformer::embed(const std::vector<std::uint8_t>& tokens) const {
  const Tensor& table = cfg_.embedding == EmbeddingKind::sinusoidal ? sin_table_ : embedding_.value;
  Tensor x({tokens.size(), cfg_.d});
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    const auto row = table.row(tokens[k]);
    std::copy(row.begin(), row.end(), x.row(k).begin());
  }
  return x;
}

Tensor Poolformer::forward(const std::vector<std::uint8_t>& tokens, Cache* cache) const {
  const std::size_t p = cfg_.pooling_product();
  if (tokens.empty() || tokens.size() % p != 0) {
    throw ArgumentError("sequence length " + std::to_string(tokens.size()) +
                        " must be a positive multiple of the pooling product " +
                        std::to_string(p));
  }
  const Tensor x = embed(tokens);
  const Tensor h = body_.forward(x, cache ? &cache->body : nullptr);
  const Tensor n = final_norm_.forward(h, cache ? &cache->final_norm : nullptr);
  Tensor logits = head_.forward(n, cache ? &cache->head : nullptr);
  if (cache) cache->tokens = tokens;
  return logits;
}

void Poolformer::backward(const Cache& cache, const Tensor& dlogits) {
  const Tensor dn = head_.backward(cache.head, dlogits);
  const Tensor dh = final_norm_.backward(cache.final_norm, dn);
  const Tensor dx = body_.backward(cache.body, dh);
  if (cfg_.embedding == EmbeddingKind::learned) {
    for (std::size_t k = 0; k < cache.tokens.size(); ++k) {
      for (std::size_t c = 0; c < cfg_.d; ++c) {
        embedding_.grad.at(cache.tokens[k], c) += dx.at(k, c);
      }
    }
  }
}

Tensor Poolformer::forward_batch(const std::vector<std::vector<std::uint8_t>>& batch) const {
  if (batch.empty()) throw ArgumentError("forward_batch: empty batch");
  const std::size_t s = batch.front().size();
  Tensor out({batch.size(), s, cfg_.vocab});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].size() != s) throw ArgumentError("forward_batch: ragged batch");
    const Tensor l = forward(batch[b], nullptr);
    std::copy(l.data().begin(), l.data().end(), out.data().begin() + b * s * cfg_.vocab);
  }
  return out;
}

void Poolformer::visit_params(const ParamVisitor& visit) {
  if (cfg_.embedding == EmbeddingKind::learned) visit("embedding", embedding_);
  body_.visit_params(visit, "body");
  final_norm_.visit_params(visit, "final_norm");
  head_.visit_params(visit, "head");
}

std::vector<NamedParameter> Poolformer::parameters() {
  std::vector<NamedParameter> out;
  visit_params([&](const std::string& name, Parameter& p) { out.push_back({name, &p}); });
  return out;
}

std::size_t Poolformer::param_count() const {
  std::size_t n = 0;
  const_cast<Poolformer*>(this)->visit_params(
      [&](const std::string&, Parameter& p) { n += p.value.size(); });
  return n;
}

void Poolformer::zero_grad() {
  visit_params([](const std::string&, Parameter& p) { p.zero_grad(); });
}

std::vector<double> Poolformer::magnitude_profile() const {
  std::vector<double> out;
  for_each_resblock([&](const ResBlock& b) {
    if (const auto* r = b.rglru()) out.push_back(r->mean_magnitude());
  });
  return out;
}

std::vector<std::vector<nn::cplx>> Poolformer::coefficients() const {
  std::vector<std::vector<nn::cplx>> out;
  for_each_resblock([&](const ResBlock& b) {
    if (const auto* r = b.rglru()) out.push_back(r->base_coefficients());
  });
  return out;
}

std::size_t Poolformer::count_inner(InnerKind kind) const {
  std::size_t n = 0;
  for_each_resblock([&](const ResBlock& b) { n += b.cfg.inner == kind ? 1 : 0; });
  return n;
}

void Poolformer::set_dropout(bool training, std::uint64_t seed) {
  for_each_resblock([&](ResBlock& b) { b.dropout_mode = {training, seed}; });
}

void Poolformer::set_scan(nn::ScanMode mode, std::size_t workers) {
  for_each_resblock([&](ResBlock& b) {
    if (auto* r = std::get_if<nn::RgLru>(&b.inner)) {
      r->scan = mode;
      r->scan_workers = workers;
    }
  });
}

Poolformer::StreamState Poolformer::start_stream() const {
  return StreamState{body_.initial_state(), 0};
}

std::vector<double> Poolformer::step(StreamState& state, std::uint8_t token) const {
  const Tensor& table = cfg_.embedding == EmbeddingKind::sinusoidal ? sin_table_ : embedding_.value;
  const auto row = table.row(token);
  const std::vector<double> h = body_.step(std::vector<double>(row.begin(), row.end()), state.body);
  const Tensor n = final_norm_.forward(Tensor({1, cfg_.d}, h), nullptr);
  const Tensor logits = head_.forward(n, nullptr);
  ++state.t;
  return {logits.data().begin(), logits.data().end()};
}

// ---------------------------------------------------------------- sampling

std::uint8_t sample_token(std::span<const double> logits, double temperature, SeededRng& rng) {
  if (!(temperature > 0.0)) throw ArgumentError("sampling temperature must be > 0");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp((logits[i] - mx) / temperature);
    total += w[i];
  }
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    if (u < acc) return static_cast<std::uint8_t>(i);
  }
  // u landed on the rounding slack at the top; take the last nonzero weight
  for (std::size_t i = w.size(); i-- > 0;) {
    if (w[i] > 0) return static_cast<std::uint8_t>(i);
  }
  return 0;
}

namespace {

void check_sample_length(const Poolformer& model, std::size_t length) {
  const std::size_t p = model.config().pooling_product();
  if (length == 0 || length % p != 0) {
    throw ArgumentError("sample length " + std::to_string(length) +
                        " must be a positive multiple of " + std::to_string(p));
  }
}

}  // namespace

std::vector<std::uint8_t> sample_stateful(const Poolformer& model, std::size_t length,
                                          double temperature, SeededRng& rng,
                                          std::uint8_t first) {
  check_sample_length(model, length);
  std::vector<std::uint8_t> seq{first};
  auto state = model.start_stream();
  while (seq.size() < length) {
    const auto logits = model.step(state, seq.back());
    seq.push_back(sample_token(logits, temperature, rng));
  }
  return seq;
}

std::vector<std::uint8_t> sample_full_forward(const Poolformer& model, std::size_t length,
                                              double temperature, SeededRng& rng,
                                              std::uint8_t first) {
  check_sample_length(model, length);
  std::vector<std::uint8_t> seq{first};
  while (seq.size() < length) {
    std::vector<std::uint8_t> padded = seq;
    padded.resize(length, first);  // causal: padding cannot reach row seq.size()-1
    const Tensor logits = model.forward(padded, nullptr);
    seq.push_back(sample_token(logits.row(seq.size() - 1), temperature, rng));
  }
  return seq;
}

// ---------------------------------------------------------------- checkpoints

namespace {

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}
  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what, pos_);
    }
  }
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(Poolformer& model, const std::string& path) {
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  ConfigMap cfg;
  model.config().write_to(cfg);
  const std::string text = cfg.to_text();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  const auto params = model.parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, p] : params) {
    const Tensor& t = p->value;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t dim : t.shape()) put<std::uint64_t>(out, dim);
    for (double v : t.data()) {
      if (t.dtype() == DType::f32) {
        put<float>(out, static_cast<float>(v));
      } else {
        put<double>(out, v);
      }
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ArgumentError("cannot write checkpoint " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw ArgumentError("failed writing checkpoint " + path);
}

Poolformer load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw StateError("checkpoint not found: " + path);
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(std::move(data));
  if (r.bytes(sizeof kCheckpointMagic, "magic") !=
      std::string(kCheckpointMagic, sizeof kCheckpointMagic)) {
    throw FormatError("not a checkpoint (bad magic)", 0);
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 8);
  }
  const auto text_len = r.get<std::uint32_t>("config length");
  const std::size_t text_at = r.pos();
  const std::string text = r.bytes(text_len, "config");
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_config(ConfigMap::parse(text, "checkpoint config"));
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("bad embedded config: ") + e.what(), text_at);
  }
  Poolformer model = Poolformer::build(cfg, 0);
  std::map<std::string, Parameter*> by_name;
  for (auto& np : model.parameters()) by_name[np.name] = np.param;

  const auto count = r.get<std::uint32_t>("tensor count");
  if (count != by_name.size()) {
    throw FormatError("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                          std::to_string(by_name.size()),
                      r.pos());
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.pos();
    const auto name_len = r.get<std::uint32_t>("name length");
    const std::string name = r.bytes(name_len, "name");
    const auto dtype_byte = r.get<std::uint8_t>("dtype");
    if (dtype_byte > 1) throw FormatError("bad dtype for " + name, at);
    const DType dtype = static_cast<DType>(dtype_byte);
    const auto ndim = r.get<std::uint32_t>("rank");
    Shape shape(ndim);
    for (auto& dim : shape) dim = static_cast<std::size_t>(r.get<std::uint64_t>("dims"));
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("unexpected tensor " + name, at);
    Parameter& p = *it->second;
    if (shape != p.value.shape()) {
      throw FormatError("shape mismatch for " + name + ": " + to_string(shape) + " vs " +
                            to_string(p.value.shape()),
                        at);
    }
    std::vector<double> values(element_count(shape));
    for (double& v : values) {
      v = dtype == DType::f32 ? static_cast<double>(r.get<float>("payload"))
                              : r.get<double>("payload");
    }
    p.value = Tensor(shape, std::move(values), dtype);
    p.grad = Tensor::zeros_like(p.value);
    by_name.erase(it);
  }
  if (!r.done()) throw FormatError("trailing bytes after last tensor", r.pos());
  return model;
}

}  // namespace poolformer
