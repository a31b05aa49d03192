#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "poolformer/config.hpp"
#include "poolformer/gradcheck.hpp"
#include "poolformer/model.hpp"

namespace poolformer {

using Sequence = std::vector<std::uint8_t>;

/// Mean negative log2-likelihood of `targets` under softmax(logits). Logits are
/// [N x V] or [B x S x V] with N = B*S targets. If `dlogits` is given it
/// receives d(mean bits)/d(logits).
double nll_bits(const Tensor& logits, std::span<const std::uint8_t> targets,
                Tensor* dlogits = nullptr);

/// Eval-mode NLL of one sequence: row k of the logits scores token k+1.
double sequence_nll_bits(const Poolformer& model, const Sequence& seq);
/// Token-weighted mean over a set of sequences.
double dataset_nll_bits(const Poolformer& model, const std::vector<Sequence>& seqs);

/// Mean NLL over the batch; adds its gradient into the model's parameters.
/// With a dropout seed each sequence gets its own training-mode mask; the
/// model is left in eval mode afterwards.
double accumulate_batch_gradient(Poolformer& model, const std::vector<const Sequence*>& batch,
                                 std::optional<std::uint64_t> dropout_seed = std::nullopt);

/// Linear warmup to `base` over `warmup` steps, then constant.
double lr_at(std::size_t step, double base = 0.002, std::size_t warmup = 1000);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Adam with bias correction and decoupled weight decay (lr * wd * p).
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}
  /// Throws EvaluationError naming the parameter if any gradient is not finite.
  void step(const std::vector<NamedParameter>& params, double lr);
  std::size_t steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

/// shadow <- decay * shadow + (1 - decay) * params, shadow starting at the
/// parameters it was constructed from.
class Ema {
 public:
  Ema(double decay, const std::vector<NamedParameter>& params);
  void update(const std::vector<NamedParameter>& params);
  void copy_to(const std::vector<NamedParameter>& params) const;
  const std::vector<Tensor>& shadow() const { return shadow_; }
  double decay() const { return decay_; }

 private:
  double decay_;
  std::vector<Tensor> shadow_;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;    // 0: no limit
  std::size_t warmup = 1000;
  double lr = 0.002;
  AdamWConfig adam;
  double ema_decay = 0.999;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;   // steps between evaluations; 0: once per epoch
  std::size_t crop_length = 0;  // random aligned training windows; 0: whole sequences
  std::string out_dir;          // empty: no files written
  bool verbose = false;

  void validate() const;
  static TrainConfig from_config(const ConfigMap& cfg);
  void write_to(ConfigMap& cfg) const;
  static const std::set<std::string>& keys();
};

struct LogRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0.0;
  double train_nll_bits = 0.0;  // mean training-batch NLL since the previous row
  double val_nll_bits = 0.0;    // EMA weights; NaN without a validation set
  double wall_seconds = 0.0;    // cumulative training time, evaluation excluded
};

struct TrainResult {
  std::vector<LogRow> log;
  double best_val_nll_bits = 0.0;
  std::size_t steps = 0;
  Poolformer ema_model;  // EMA weights at the end of training
};

using LogCallback = std::function<void(const LogRow&)>;

/// Trains in place. With out_dir set, writes train_log.csv, best.ckpt (EMA
/// weights at the best validation point) and last.ckpt (raw weights).
TrainResult train(Poolformer& model, const std::vector<Sequence>& train_set,
                  const std::vector<Sequence>& val_set, const TrainConfig& cfg,
                  const LogCallback& on_row = {});

std::string log_csv_header();
std::string log_csv_row(const LogRow& row);

/// Finite-difference check of the NLL gradient for every model parameter.
GradCheckReport check_model_gradients(Poolformer& model, const Sequence& tokens,
                                      double tol = kGradCheckTolerance);

struct SuiteRow {
  std::string kind;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Gradient checks over every layer kind on small random shapes (S <= 8,
/// D <= 8), ending with a tiny pooled model under the NLL.
std::vector<SuiteRow> run_gradient_suite(std::uint64_t seed = 0);

}  // namespace poolformer
