#include "poolformer/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>

#include "poolformer/errors.hpp"

namespace poolformer {

namespace {

// NLL over the first `rows` rows of a [.. x V] logit matrix.
double nll_rows(const Tensor& logits, std::size_t rows, std::span<const std::uint8_t> targets,
                Tensor* dlogits) {
  const std::size_t v = logits.shape().back();
  if (targets.size() != rows) {
    throw ArgumentError("nll: " + std::to_string(targets.size()) + " targets for " +
                        std::to_string(rows) + " logit rows");
  }
  if (rows == 0) throw ArgumentError("nll: no targets");
  if (dlogits) *dlogits = Tensor(logits.shape());
  const auto& data = logits.data();
  const double inv = 1.0 / (static_cast<double>(rows) * std::numbers::ln2);
  double total = 0.0;
  for (std::size_t n = 0; n < rows; ++n) {
    const std::size_t t = targets[n];
    if (t >= v) throw ArgumentError("nll: target " + std::to_string(t) + " outside vocabulary");
    const double* row = data.data() + n * v;
    const double mx = *std::max_element(row, row + v);
    double sum = 0.0;
    for (std::size_t j = 0; j < v; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    total += lse - row[t];
    if (dlogits) {
      double* g = dlogits->data().data() + n * v;
      for (std::size_t j = 0; j < v; ++j) g[j] = std::exp(row[j] - lse) * inv;
      g[t] -= inv;
    }
  }
  return total / (static_cast<double>(rows) * std::numbers::ln2);
}

std::span<const std::uint8_t> shifted_targets(const Sequence& seq) {
  if (seq.size() < 2) throw ArgumentError("nll: sequences need at least 2 tokens");
  return std::span<const std::uint8_t>(seq).subspan(1);
}

}  // namespace

double nll_bits(const Tensor& logits, std::span<const std::uint8_t> targets, Tensor* dlogits) {
  if (logits.rank() != 2 && logits.rank() != 3) {
    throw ArgumentError("nll: logits must be [N x V] or [B x S x V]");
  }
  return nll_rows(logits, logits.size() / logits.shape().back(), targets, dlogits);
}

double sequence_nll_bits(const Poolformer& model, const Sequence& seq) {
  const auto targets = shifted_targets(seq);
  return nll_rows(model.forward(seq, nullptr), targets.size(), targets, nullptr);
}

double dataset_nll_bits(const Poolformer& model, const std::vector<Sequence>& seqs) {
  if (seqs.empty()) throw ArgumentError("nll: empty dataset");
  double bits = 0.0;
  double count = 0.0;
  for (const auto& s : seqs) {
    const double n = static_cast<double>(s.size() - 1);
    bits += sequence_nll_bits(model, s) * n;
    count += n;
  }
  return bits / count;
}

double accumulate_batch_gradient(Poolformer& model, const std::vector<const Sequence*>& batch,
                                 std::optional<std::uint64_t> dropout_seed) {
  if (batch.empty()) throw ArgumentError("empty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sequence& seq = *batch[i];
    if (dropout_seed) model.set_dropout(true, mix64(*dropout_seed + i));
    Poolformer::Cache cache;
    const Tensor logits = model.forward(seq, &cache);
    const auto targets = shifted_targets(seq);
    Tensor d;
    total += nll_rows(logits, targets.size(), targets, &d);
    d *= scale;
    model.backward(cache, d);
  }
  model.set_dropout(false, 0);
  return total * scale;
}

double lr_at(std::size_t step, double base, std::size_t warmup) {
  if (warmup == 0 || step >= warmup) return base;
  return base * static_cast<double>(step) / static_cast<double>(warmup);
}

// ---------------------------------------------------------------- AdamW

void AdamW::step(const std::vector<NamedParameter>& params, double lr) {
  for (const auto& [name, p] : params) {
    const auto& g = p->grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw EvaluationError("non-finite gradient in " + name + "[" + std::to_string(i) +
                              "] at optimizer step " + std::to_string(t_));
      }
    }
  }
  if (m_.empty()) {
    for (const auto& np : params) {
      m_.push_back(Tensor::zeros_like(np.param->value));
      v_.push_back(Tensor::zeros_like(np.param->value));
    }
  }
  if (m_.size() != params.size()) throw StateError("AdamW: parameter set changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k].param->value.data();
    const auto& g = params[k].param->grad.data();
    auto m = m_[k].data();
    auto v = v_[k].data();
    if (m.size() != w.size()) throw StateError("AdamW: shape changed for " + params[k].name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[i]);
    }
  }
}

// ---------------------------------------------------------------- EMA

Ema::Ema(double decay, const std::vector<NamedParameter>& params) : decay_(decay) {
  if (!(decay >= 0.0 && decay <= 1.0)) throw ArgumentError("ema decay must be in [0, 1]");
  for (const auto& np : params) shadow_.push_back(np.param->value);
}

void Ema::update(const std::vector<NamedParameter>& params) {
  if (params.size() != shadow_.size()) throw StateError("EMA: parameter set changed");
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto s = shadow_[k].data();
    const auto& w = params[k].param->value.data();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = decay_ * s[i] + (1.0 - decay_) * w[i];
  }
}

void Ema::copy_to(const std::vector<NamedParameter>& params) const {
  if (params.size() != shadow_.size()) throw StateError("EMA: parameter set changed");
  for (std::size_t k = 0; k < params.size(); ++k) params[k].param->value = shadow_[k];
}

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  if (batch_size == 0) throw ArgumentError("train.batch_size must be >= 1");
  if (epochs == 0 && max_steps == 0) throw ArgumentError("train.epochs must be >= 1");
  if (lr < 0.0) throw ArgumentError("train.lr must be >= 0");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw ArgumentError("train.ema_decay must be in [0, 1]");
  if (adam.beta1 < 0 || adam.beta1 >= 1 || adam.beta2 < 0 || adam.beta2 >= 1) {
    throw ArgumentError("train.beta1/beta2 must be in [0, 1)");
  }
}

const std::set<std::string>& TrainConfig::keys() {
  static const std::set<std::string> k{
      "train.batch_size", "train.epochs",      "train.max_steps", "train.warmup",
      "train.lr",         "train.beta1",       "train.beta2",     "train.eps",
      "train.weight_decay", "train.ema_decay", "train.eval_every", "train.crop_length",
      "train.verbose"};
  return k;
}

TrainConfig TrainConfig::from_config(const ConfigMap& c) {
  TrainConfig t;
  t.batch_size = c.get_u64("train.batch_size", t.batch_size);
  t.epochs = c.get_u64("train.epochs", t.epochs);
  t.max_steps = c.get_u64("train.max_steps", t.max_steps);
  t.warmup = c.get_u64("train.warmup", t.warmup);
  t.lr = c.get_double("train.lr", t.lr);
  t.adam.beta1 = c.get_double("train.beta1", t.adam.beta1);
  t.adam.beta2 = c.get_double("train.beta2", t.adam.beta2);
  t.adam.eps = c.get_double("train.eps", t.adam.eps);
  t.adam.weight_decay = c.get_double("train.weight_decay", t.adam.weight_decay);
  t.ema_decay = c.get_double("train.ema_decay", t.ema_decay);
  t.eval_every = c.get_u64("train.eval_every", t.eval_every);
  t.crop_length = c.get_u64("train.crop_length", t.crop_length);
  t.verbose = c.get_bool("train.verbose", t.verbose);
  t.validate();
  return t;
}

void TrainConfig::write_to(ConfigMap& c) const {
  c.set("train.batch_size", std::to_string(batch_size));
  c.set("train.epochs", std::to_string(epochs));
  c.set("train.max_steps", std::to_string(max_steps));
  c.set("train.warmup", std::to_string(warmup));
  c.set("train.lr", format_double(lr));
  c.set("train.beta1", format_double(adam.beta1));
  c.set("train.beta2", format_double(adam.beta2));
  c.set("train.eps", format_double(adam.eps));
  c.set("train.weight_decay", format_double(adam.weight_decay));
  c.set("train.ema_decay", format_double(ema_decay));
  c.set("train.eval_every", std::to_string(eval_every));
  c.set("train.crop_length", std::to_string(crop_length));
  c.set("train.verbose", verbose ? "true" : "false");
}

// ---------------------------------------------------------------- loop

std::string log_csv_header() { return "epoch,step,lr,train_nll_bits,val_nll_bits,wall_seconds"; }

std::string log_csv_row(const LogRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%zu,%.8g,%.6f,%.6f,%.3f", r.epoch, r.step, r.lr,
                r.train_nll_bits, r.val_nll_bits, r.wall_seconds);
  return buf;
}

TrainResult train(Poolformer& model, const std::vector<Sequence>& train_set,
                  const std::vector<Sequence>& val_set, const TrainConfig& cfg,
                  const LogCallback& on_row) {
  cfg.validate();
  if (train_set.empty()) throw ArgumentError("training set is empty");
  const std::size_t p = model.config().pooling_product();
  if (cfg.crop_length % p != 0) {
    throw ArgumentError("train.crop_length must be a multiple of " + std::to_string(p));
  }
  for (const auto& s : train_set) {
    if (s.size() < 2 || s.size() % p != 0) {
      throw ArgumentError("training sequence length " + std::to_string(s.size()) +
                          " is not a multiple of " + std::to_string(p));
    }
  }

  const auto params = model.parameters();
  AdamW opt(cfg.adam);
  Ema ema(cfg.ema_decay, params);
  Poolformer eval_model = model;
  const auto eval_params = eval_model.parameters();

  std::ofstream csv;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    csv.open(std::filesystem::path(cfg.out_dir) / "train_log.csv", std::ios::trunc);
    if (!csv) throw ArgumentError("cannot write training log in " + cfg.out_dir);
    csv << log_csv_header() << '\n';
  }

  const SeededRng root(cfg.seed);
  TrainResult result;
  result.best_val_nll_bits = std::numeric_limits<double>::infinity();
  std::size_t step = 0;
  double train_sum = 0.0;
  std::size_t train_count = 0;
  double wall = 0.0;
  std::size_t last_eval_step = std::numeric_limits<std::size_t>::max();

  using clock = std::chrono::steady_clock;
  auto started = clock::now();

  auto evaluate = [&](std::size_t epoch) {
    wall += std::chrono::duration<double>(clock::now() - started).count();
    ema.copy_to(eval_params);
    LogRow row;
    row.epoch = epoch;
    row.step = step;
    row.lr = lr_at(step, cfg.lr, cfg.warmup);
    row.train_nll_bits = train_count ? train_sum / static_cast<double>(train_count)
                                     : std::numeric_limits<double>::quiet_NaN();
    row.val_nll_bits = val_set.empty() ? std::numeric_limits<double>::quiet_NaN()
                                       : dataset_nll_bits(eval_model, val_set);
    row.wall_seconds = wall;
    const double score = val_set.empty() ? row.train_nll_bits : row.val_nll_bits;
    if (score < result.best_val_nll_bits) {
      result.best_val_nll_bits = score;
      if (!cfg.out_dir.empty()) {
        save_checkpoint(eval_model, (std::filesystem::path(cfg.out_dir) / "best.ckpt").string());
      }
    }
    result.log.push_back(row);
    if (csv.is_open()) csv << log_csv_row(row) << '\n' << std::flush;
    if (cfg.verbose) std::fprintf(stderr, "%s\n", log_csv_row(row).c_str());
    if (on_row) on_row(row);
    train_sum = 0.0;
    train_count = 0;
    last_eval_step = step;
    started = clock::now();
  };

  std::vector<std::size_t> order(train_set.size());
  std::vector<Sequence> crops;
  std::vector<const Sequence*> batch;
  bool done = false;
  std::size_t epoch = 0;
  const std::size_t epochs = cfg.epochs == 0 ? std::numeric_limits<std::size_t>::max() : cfg.epochs;
  while (!done && epoch < epochs) {
    ++epoch;
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    SeededRng shuffle = root.split("shuffle").split(epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.below(i)]);
    }
    for (std::size_t begin = 0; begin < order.size() && !done; begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      batch.clear();
      crops.clear();
      crops.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const Sequence& s = train_set[order[i]];
        if (cfg.crop_length > 0 && cfg.crop_length < s.size()) {
          SeededRng r = root.split("crop").split(step * cfg.batch_size + (i - begin));
          const std::size_t off = p * r.below((s.size() - cfg.crop_length) / p + 1);
          crops.emplace_back(s.begin() + static_cast<std::ptrdiff_t>(off),
                             s.begin() + static_cast<std::ptrdiff_t>(off + cfg.crop_length));
          batch.push_back(&crops.back());
        } else {
          batch.push_back(&s);
        }
      }
      model.zero_grad();
      const std::uint64_t dseed = mix64(cfg.seed ^ mix64(step + 1));
      const double loss = accumulate_batch_gradient(
          model, batch, model.config().dropout > 0 ? std::optional(dseed) : std::nullopt);
      opt.step(params, lr_at(step, cfg.lr, cfg.warmup));
      ema.update(params);
      ++step;
      train_sum += loss;
      ++train_count;
      if (cfg.eval_every > 0 && step % cfg.eval_every == 0) evaluate(epoch);
      if (cfg.max_steps > 0 && step >= cfg.max_steps) done = true;
    }
    if (cfg.eval_every == 0 && last_eval_step != step) evaluate(epoch);
  }
  if (last_eval_step != step) evaluate(epoch);

  if (!cfg.out_dir.empty()) {
    save_checkpoint(model, (std::filesystem::path(cfg.out_dir) / "last.ckpt").string());
  }
  result.steps = step;
  result.ema_model = std::move(eval_model);
  return result;
}

GradCheckReport check_model_gradients(Poolformer& model, const Sequence& tokens, double tol) {
  model.set_dropout(false, 0);
  const auto params = model.parameters();
  model.zero_grad();
  accumulate_batch_gradient(model, {&tokens});

  // NLL(theta) - NLL(theta0), evaluated relative to the base logits so the
  // central difference does not cancel two numbers near 8 bits.
  const auto targets = shifted_targets(tokens);
  const std::size_t rows = targets.size();
  const Tensor base = model.forward(tokens, nullptr);
  const std::size_t v = base.cols();
  Tensor p0({rows, v});
  for (std::size_t n = 0; n < rows; ++n) {
    const auto row = base.row(n);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double x : row) sum += std::exp(x - mx);
    for (std::size_t j = 0; j < v; ++j) p0.at(n, j) = std::exp(row[j] - mx) / sum;
  }
  auto loss = [&] {
    const Tensor l = model.forward(tokens, nullptr);
    double total = 0.0;
    for (std::size_t n = 0; n < rows; ++n) {
      double acc = 0.0;
      for (std::size_t j = 0; j < v; ++j) acc += p0.at(n, j) * std::expm1(l.at(n, j) - base.at(n, j));
      total += std::log1p(acc) - (l.at(n, targets[n]) - base.at(n, targets[n]));
    }
    return total / (static_cast<double>(rows) * std::numbers::ln2);
  };
  GradCheckReport report;
  report.tolerance = tol;
  check_parameters(report, loss, params);
  return report;
}

}  // namespace poolformer
