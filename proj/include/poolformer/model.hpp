#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "poolformer/config.hpp"
#include "poolformer/layers.hpp"

namespace poolformer {

enum class SkipStyle { short_skip, long_skip };
enum class Placement { around, after };
enum class EmbeddingKind { sinusoidal, learned };

struct ModelConfig {
  std::size_t vocab = 256;
  std::size_t d = 128;
  std::size_t d_rec = 256;
  std::vector<std::size_t> pooling{2, 4, 4, 5};
  std::vector<std::size_t> layers{4, 4, 4, 4, 4};
  double dropout = 0.2;
  SkipStyle skip = SkipStyle::short_skip;
  Placement placement = Placement::around;
  nn::NormKind norm = nn::NormKind::layer;
  bool gated = true;
  nn::InnerKind deepest_mixer = nn::InnerKind::rg_lru;
  nn::RgLruMode rglru_mode = nn::RgLruMode::complex;
  std::optional<double> init_scale;  // default 1 / resblock_count()
  nn::RingPreset ring = nn::RingPreset::small;
  std::size_t groups = 1;
  std::size_t heads = 4;
  bool multi_query = false;
  EmbeddingKind embedding = EmbeddingKind::sinusoidal;

  void validate() const;
  std::size_t pooling_product() const;
  /// Temporal-mixing layers: 2 l_i per SkipBlock plus the deepest l_{n+1}.
  std::size_t temporal_layer_count() const;
  /// Each temporal layer is a temporal ResBlock followed by an MLP ResBlock.
  std::size_t resblock_count() const { return 2 * temporal_layer_count(); }
  double effective_init_scale() const;

  /// Reads model.* keys; missing keys keep the defaults above.
  static ModelConfig from_config(const ConfigMap& cfg);
  void write_to(ConfigMap& cfg) const;
  static const std::set<std::string>& keys();
};

/// Residual stack of ResBlocks.
struct Stack {
  struct Cache {
    std::vector<nn::ResBlock::Cache> blocks;
  };
  struct State {
    std::vector<nn::ResBlock::State> blocks;
  };
  std::vector<nn::ResBlock> blocks;

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Cache& cache, const Tensor& dy);
  void visit_params(const ParamVisitor& visit, const std::string& prefix);
  State initial_state() const;
  std::vector<double> step(std::vector<double> x, State& state) const;
};

/// pre -> down -> shift -> inner -> up -> post with a residual skip. The
/// pooled stream is delayed by one pooled step (position 0 sees `start`), so
/// the up-pooled rows F*i .. F*i+F-1 depend only on inputs before F*i.
/// factor == 0 marks the deepest level, which is just the `deepest` stack.
struct SkipBlock {
  struct Cache;
  struct State;

  SkipStyle style = SkipStyle::short_skip;
  std::size_t factor = 2;
  Stack pre, post;
  nn::DownPool down;
  nn::UpPool up;
  Parameter start;                // [D]
  std::vector<SkipBlock> child;   // one nested level, empty at the leaf
  Stack deepest;                  // leaf only

  bool is_leaf() const { return factor == 0; }

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Cache& cache, const Tensor& dy);
  void visit_params(const ParamVisitor& visit, const std::string& prefix);
  State initial_state() const;
  std::vector<double> step(const std::vector<double>& x, State& state) const;
};

struct SkipBlock::Cache {
  Stack::Cache pre, post;
  nn::DownPool::Cache down;
  nn::UpPool::Cache up;
  std::vector<SkipBlock::Cache> child;
  Stack::Cache deepest;
  std::size_t pooled_len = 0;
};

struct SkipBlock::State {
  Stack::State pre, post;
  std::vector<std::vector<double>> buffer;
  std::vector<double> z;
  std::size_t t = 0;
  std::vector<SkipBlock::State> child;
  Stack::State deepest;
};

class Poolformer {
 public:
  struct Cache {
    std::vector<std::uint8_t> tokens;
    SkipBlock::Cache body;
    nn::Norm::Cache final_norm;
    nn::Dense::Cache head;
  };
  struct StreamState {
    SkipBlock::State body;
    std::size_t t = 0;
  };

  Poolformer() = default;
  static Poolformer build(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const nn::Norm& final_norm() const { return final_norm_; }
  const nn::Dense& head() const { return head_; }
  /// Token embeddings [S x D].
  Tensor embed(const std::vector<std::uint8_t>& tokens) const;

  /// Logits [S x vocab] for one sequence; row k scores token k+1.
  Tensor forward(const std::vector<std::uint8_t>& tokens, Cache* cache) const;
  /// Accumulates parameter gradients from dL/dlogits.
  void backward(const Cache& cache, const Tensor& dlogits);
  /// Logits [B x S x vocab].
  Tensor forward_batch(const std::vector<std::vector<std::uint8_t>>& batch) const;

  void visit_params(const ParamVisitor& visit);
  std::vector<NamedParameter> parameters();
  std::size_t param_count() const;
  void zero_grad();

  /// Mean |a| per RG-LRU layer in execution order.
  std::vector<double> magnitude_profile() const;
  /// All base coefficients a per RG-LRU layer, execution order.
  std::vector<std::vector<nn::cplx>> coefficients() const;
  std::size_t count_inner(nn::InnerKind kind) const;

  void set_dropout(bool training, std::uint64_t seed);
  void set_scan(nn::ScanMode mode, std::size_t workers);

  StreamState start_stream() const;
  /// Feeds one token and returns the logits for the next one.
  std::vector<double> step(StreamState& state, std::uint8_t token) const;

 private:
  template <class F>
  void for_each_resblock(F&& f);
  template <class F>
  void for_each_resblock(F&& f) const;

  ModelConfig cfg_;
  Tensor sin_table_;
  Parameter embedding_;  // learned table [vocab x D]
  SkipBlock body_;
  nn::Norm final_norm_;
  nn::Dense head_;
};

std::vector<std::uint8_t> sample_stateful(const Poolformer& model, std::size_t length,
                                          double temperature, SeededRng& rng,
                                          std::uint8_t first = 128);
/// Re-runs the full forward for every token; slow reference for sample_stateful.
std::vector<std::uint8_t> sample_full_forward(const Poolformer& model, std::size_t length,
                                              double temperature, SeededRng& rng,
                                              std::uint8_t first = 128);
/// Draws from softmax(logits / temperature).
std::uint8_t sample_token(std::span<const double> logits, double temperature, SeededRng& rng);

inline constexpr char kCheckpointMagic[8] = {'P', 'F', 'M', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(Poolformer& model, const std::string& path);
Poolformer load_checkpoint(const std::string& path);

}  // namespace poolformer
