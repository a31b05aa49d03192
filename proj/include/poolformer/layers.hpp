#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "poolformer/parameter.hpp"
#include "poolformer/rng.hpp"
#include "poolformer/tensor.hpp"

// Sequence layers work on one sequence at a time: x is [S x D].
namespace poolformer::nn {

using cplx = std::complex<double>;

enum class NormKind { layer, rms, none };
enum class InnerKind { mlp, rg_lru, attention };
enum class RgLruMode { real, complex };
enum class RingPreset { small, half, full, full_circle };
enum class ScanMode { sequential, blelloch };

NormKind parse_norm_kind(std::string_view s);
InnerKind parse_inner_kind(std::string_view s);
RgLruMode parse_rglru_mode(std::string_view s);
RingPreset parse_ring_preset(std::string_view s);
std::string_view to_string(NormKind k);
std::string_view to_string(InnerKind k);
std::string_view to_string(RgLruMode m);
std::string_view to_string(RingPreset p);
using poolformer::to_string;

double sigmoid(double z);
double gelu(double x);
double gelu_grad(double x);

/// cos half then sin half, frequencies 1 / 10000^(j / (D/2)).
std::vector<double> sinusoidal_embed(std::uint8_t code, std::size_t d);
/// [256 x D] table of sinusoidal_embed rows.
Tensor sinusoidal_table(std::size_t d);

/// Closed-form recurrent layer sizes: elman 3D^2+2D, lstm 8D^2+4D, gru 6D^2+3D, rglru 2D^2+3D.
std::size_t count_rnn_params(std::string_view kind, std::size_t d);

// ---------------------------------------------------------------- dense

struct Dense {
  struct Cache {
    Tensor x;
  };
  Parameter w;  // [in x out]
  Parameter b;  // [out], empty when bias-free
  bool has_bias = true;

  Dense() = default;
  /// Weights ~ N(0, scale / in), zero bias.
  static Dense make(std::size_t in, std::size_t out, bool bias, SeededRng& rng, double scale = 1.0);
  std::size_t in() const { return w.value.dim(0); }
  std::size_t out() const { return w.value.dim(1); }

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Cache& cache, const Tensor& dy);
  void visit_params(const ParamVisitor& visit, const std::string& prefix);
};

struct Gelu {
  struct Cache {
    Tensor x;
  };
  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Cache& cache, const Tensor& dy);
  void visit_params(const ParamVisitor&, const std::string&) {}
};

// ---------------------------------------------------------------- norms

struct Norm {
  struct Cache {
    Tensor xhat;                  // normalized input
    std::vector<double> inv_std;  // per row
  };
  NormKind kind = NormKind::layer;
  double eps = 1e-6;
  Parameter gamma;  // [D] (absent for none)
  Parameter beta;   // [D] (layer only)

  Norm() = default;
  static Norm make(NormKind kind, std::size_t d, double eps = 1e-6);
  std::size_t param_count() const { return gamma.value.size() + beta.value.size(); }

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Cache& cache, const Tensor& dy);
  void visit_params(const ParamVisitor& visit, const std::string& prefix);
};

// ---------------------------------------------------------------- RG-LRU

struct RingRange {
  double mag_lo = 0.9;
  double mag_hi = 0.99;
  double phase_lo = 0.0;
  double phase_hi = 0.0;
};

RingRange ring_range(RingPreset preset);

struct RingSample {
  std::vector<double> lambda;  // logits with sigmoid(lambda) = |a|
  std::vector<double> theta;
};

/// |a| = sqrt(U[lo^2, hi^2]) so that |a|^2 is uniform; theta ~ U[phase_lo, phase_hi].
RingSample ring_init(SeededRng& rng, std::size_t n, const RingRange& range);

struct RgLru {
  static constexpr double kC = 8.0;

  struct Cache {
    Tensor x;
    std::vector<double> r, gate_i;  // [S x N]
    std::vector<cplx> xt;           // value path as complex [S x N]
    std::vector<cplx> a, m, h;      // [S x N]
  };
  struct State {
    std::vector<cplx> h;
  };

  RgLruMode mode = RgLruMode::complex;
  std::size_t d_in = 0;
  std::size_t d_rec = 0;
  ScanMode scan = ScanMode::sequential;
  std::size_t scan_workers = 1;

  Parameter w_a, b_a, w_x, b_x;  // d_in -> N
  Parameter w_v;                 // d_in -> d_rec, only when d_in != d_rec
  Parameter lambda;              // [N]
  Parameter theta;               // [N], complex mode only

  RgLru() = default;
  static RgLru make(RgLruMode mode, std::size_t d_in, std::size_t d_rec, SeededRng& rng,
                    const RingRange& ring = {});

  std::size_t states() const { return mode == RgLruMode::complex ? d_rec / 2 : d_rec; }
  bool has_value_proj() const { return !w_v.value.empty(); }
  /// Base coefficient a = sigmoid(lambda) exp(i wrap(theta)).
  std::vector<cplx> base_coefficients() const;
  double mean_magnitude() const;

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Cache& cache, const Tensor& dy);
  void visit_params(const ParamVisitor& visit, const std::string& prefix);

  State initial_state() const { return State{std::vector<cplx>(states())}; }
  std::vector<double> step(std::span<const double> x, State& state) const;
};

// ---------------------------------------------------------------- pooling

/// Block-diagonal strided convolution. Weights [F x G x bs x bs] with bs = D / G,
/// block (i, g) maps input features g*bs.. to output features g*bs..
struct DownPool {
  struct Cache {
    Tensor x;
  };
  std::size_t factor = 2;
  std::size_t groups = 1;
  std::size_t d = 0;
  Parameter w;

  DownPool() = default;
  static DownPool make(std::size_t factor, std::size_t groups, std::size_t d, SeededRng& rng);
  std::size_t block() const { return d / groups; }

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Cache& cache, const Tensor& dy);
  void visit_params(const ParamVisitor& visit, const std::string& prefix);
  /// One pooled token from F consecutive rows stacked as [F x D].
  std::vector<double> pool_rows(const Tensor& rows) const;
};

struct UpPool {
  struct Cache {
    Tensor x;
  };
  std::size_t factor = 2;
  std::size_t groups = 1;
  std::size_t d = 0;
  Parameter w;

  UpPool() = default;
  /// Weights ~ N(0, scale / bs).
  static UpPool make(std::size_t factor, std::size_t groups, std::size_t d, SeededRng& rng,
                     double scale);
  std::size_t block() const { return d / groups; }

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Cache& cache, const Tensor& dy);
  void visit_params(const ParamVisitor& visit, const std::string& prefix);
  /// Output row `phase` (0..F-1) produced from one pooled token.
  std::vector<double> expand_row(std::span<const double> z, std::size_t phase) const;
};

// ---------------------------------------------------------------- attention

struct CausalAttention {
  struct Cache {
    Tensor x, q, k, v, o;
    std::vector<Tensor> probs;  // per head [S x S]
  };
  struct State {
    std::vector<double> k, v;  // appended rows, [t x kv_dim]
    std::size_t t = 0;
  };

  std::size_t d = 0;
  std::size_t heads = 1;
  bool multi_query = false;
  Parameter w_q, w_k, w_v, w_o;

  CausalAttention() = default;
  static CausalAttention make(std::size_t d, std::size_t heads, bool multi_query, SeededRng& rng);
  std::size_t head_dim() const { return d / heads; }
  std::size_t kv_dim() const { return multi_query ? head_dim() : d; }

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Cache& cache, const Tensor& dy);
  void visit_params(const ParamVisitor& visit, const std::string& prefix);

  State initial_state() const { return {}; }
  std::vector<double> step(std::span<const double> x, State& state) const;
};

// ---------------------------------------------------------------- resblock

struct ResBlockConfig {
  bool gated = true;
  InnerKind inner = InnerKind::rg_lru;
  NormKind norm = NormKind::layer;
  double dropout = 0.0;
  double init_scale = 1.0;
  std::size_t d = 0;
  std::size_t d_rec = 0;  // rg_lru only
  RgLruMode rglru_mode = RgLruMode::complex;
  RingRange ring{};
  std::size_t heads = 1;
  bool multi_query = false;
};

/// Dropout masks are a pure function of (seed, tag, element), so repeated
/// forwards under the same mode see the same mask.
struct DropoutMode {
  bool training = false;
  std::uint64_t seed = 0;
};

struct ResBlock {
  using Inner = std::variant<Dense, RgLru, CausalAttention>;
  struct Cache {
    Norm::Cache norm;
    Tensor xn;
    std::variant<Dense::Cache, RgLru::Cache, CausalAttention::Cache> inner;
    Tensor inner_out;
    Dense::Cache gate;
    Tensor gate_pre;
    Dense::Cache out;
    Tensor mix;  // input to the final dense
    std::vector<double> mask;
  };
  struct State {
    std::variant<std::monostate, RgLru::State, CausalAttention::State> inner;
  };

  ResBlockConfig cfg;
  Norm norm;
  Inner inner;
  Dense gate;  // gated only
  Dense out;
  std::uint64_t tag = 0;
  DropoutMode dropout_mode;

  ResBlock() = default;
  static ResBlock make(const ResBlockConfig& cfg, SeededRng& rng, std::uint64_t tag = 0);
  std::size_t inner_out_dim() const;
  const RgLru* rglru() const { return std::get_if<RgLru>(&inner); }

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Cache& cache, const Tensor& dy);
  void visit_params(const ParamVisitor& visit, const std::string& prefix);

  State initial_state() const;
  /// Eval-mode single-token update.
  std::vector<double> step(std::span<const double> x, State& state) const;
};

}  // namespace poolformer::nn
