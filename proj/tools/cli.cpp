#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "poolformer/data.hpp"
#include "poolformer/errors.hpp"
#include "poolformer/metrics.hpp"
#include "poolformer/model.hpp"
#include "poolformer/training.hpp"

namespace poolformer::cli {

namespace fs = std::filesystem;

namespace {

struct Run {
  std::string command;
  ConfigMap cfg;
  std::uint64_t seed = 0;
  fs::path out;
};

const std::set<std::string>& run_keys() {
  static const std::set<std::string> k{
      "run.seed",          "run.checkpoint",     "data.dir",           "data.kind",
      "data.classes",      "data.count",         "data.length",        "data.sample_rate",
      "data.encoding",     "data.wav",           "data.chunk",         "sample.count",
      "sample.length",     "sample.temperature", "sample.full_forward", "eval.split",
      "eval.samples",      "eval.classifier_epochs"};
  return k;
}

std::set<std::string> known_keys() {
  std::set<std::string> all = run_keys();
  all.insert(ModelConfig::keys().begin(), ModelConfig::keys().end());
  all.insert(TrainConfig::keys().begin(), TrainConfig::keys().end());
  return all;
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw ArgumentError("cannot write " + p.string());
  out << text;
}

void write_effective_config(const Run& run, ConfigMap cfg) {
  cfg.set("run.seed", std::to_string(run.seed));
  write_text(run.out / "config.txt", cfg.to_text());
}

std::string require_key(const ConfigMap& cfg, const std::string& key) {
  const std::string v = cfg.get_string(key, "");
  if (v.empty()) throw ArgumentError(key + " is required for this command");
  return v;
}

data::Encoding encoding_of(const ConfigMap& cfg) {
  return data::parse_encoding(cfg.get_string("data.encoding", "mu_law"));
}

bool has_model_keys(const ConfigMap& cfg) {
  return std::any_of(cfg.values().begin(), cfg.values().end(),
                     [](const auto& kv) { return kv.first.starts_with("model."); });
}

Poolformer load_model(const Run& run) {
  Poolformer model = load_checkpoint(require_key(run.cfg, "run.checkpoint"));
  if (has_model_keys(run.cfg)) {
    ConfigMap want, have;
    ModelConfig::from_config(run.cfg).write_to(want);
    model.config().write_to(have);
    for (const auto& [k, v] : want.values()) {
      if (run.cfg.has(k) && have.get_string(k, "") != v) {
        throw ArgumentError("config sets " + k + " = " + v + " but the checkpoint has " +
                            have.get_string(k, "?"));
      }
    }
  }
  return model;
}

// ---------------------------------------------------------------- commands

int cmd_generate(const Run& run) {
  const std::string kind = run.cfg.get_string("data.kind", "synthetic");
  std::vector<data::Example> examples;
  if (kind == "synthetic") {
    data::SyntheticSpec spec;
    spec.classes = run.cfg.get_u64("data.classes", spec.classes);
    spec.count = run.cfg.get_u64("data.count", spec.count);
    spec.length = run.cfg.get_u64("data.length", spec.length);
    spec.sample_rate = run.cfg.get_double("data.sample_rate", spec.sample_rate);
    spec.seed = run.seed;
    if (run.cfg.has("model.pooling")) {
      const std::size_t p = ModelConfig::from_config(run.cfg).pooling_product();
      if (spec.length % p != 0) {
        throw ArgumentError("data.length " + std::to_string(spec.length) +
                            " is not a multiple of the pooling product " + std::to_string(p));
      }
    }
    examples = data::generate_synthetic(spec);
  } else if (kind == "wav") {
    const std::size_t chunk = run.cfg.get_u64("data.chunk", run.cfg.get_u64("data.length", 1024));
    const auto enc = encoding_of(run.cfg);
    const auto seqs = data::ingest_wav(require_key(run.cfg, "data.wav"), chunk, enc);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      data::Example e;
      e.split = data::split_for(i);
      e.tokens = seqs[i];
      examples.push_back(std::move(e));
    }
  } else {
    throw ArgumentError("data.kind must be synthetic or wav, got '" + kind + "'");
  }
  data::write_dataset(run.out.string(), examples);
  write_effective_config(run, run.cfg);
  std::cout << "wrote " << examples.size() << " sequences to " << run.out.string() << '\n';
  return kExitOk;
}

int cmd_train(const Run& run) {
  const data::Dataset ds = data::load_dataset(require_key(run.cfg, "data.dir"));
  const ModelConfig mc = ModelConfig::from_config(run.cfg);
  TrainConfig tc = TrainConfig::from_config(run.cfg);
  tc.seed = run.seed;
  tc.out_dir = run.out.string();
  ConfigMap effective = run.cfg;
  mc.write_to(effective);
  tc.write_to(effective);
  write_effective_config(run, effective);

  Poolformer model = Poolformer::build(mc, run.seed);
  std::cout << "parameters " << model.param_count() << '\n' << log_csv_header() << '\n';
  const TrainResult r = train(model, ds.split("train"), ds.split("val"), tc,
                              [](const LogRow& row) { std::cout << log_csv_row(row) << std::endl; });
  std::cout << "steps " << r.steps << " best " << r.best_val_nll_bits << " bits\n";
  return kExitOk;
}

int cmd_sample(const Run& run) {
  const Poolformer model = load_model(run);
  const std::size_t count = run.cfg.get_u64("sample.count", 1);
  const std::size_t length = run.cfg.get_u64("sample.length", run.cfg.get_u64("data.length", 1024));
  const double temperature = run.cfg.get_double("sample.temperature", 1.0);
  const bool full = run.cfg.get_bool("sample.full_forward", false);
  const auto enc = encoding_of(run.cfg);
  const auto rate = static_cast<std::uint32_t>(run.cfg.get_double("data.sample_rate", 8000.0));
  const fs::path dir = run.out / "samples";
  fs::create_directories(dir);
  write_effective_config(run, run.cfg);
  const SeededRng root = SeededRng(run.seed).split("sample");
  for (std::size_t i = 0; i < count; ++i) {
    SeededRng rng = root.split(i);
    const auto seq = full ? sample_full_forward(model, length, temperature, rng)
                          : sample_stateful(model, length, temperature, rng);
    char name[32];
    std::snprintf(name, sizeof name, "sample_%03zu", i);
    data::write_tokens((dir / (std::string(name) + ".u8")).string(), seq);
    data::Wav wav;
    wav.sample_rate = rate;
    for (double x : data::decode_all(seq, enc)) wav.samples.push_back(data::unit_to_pcm(x));
    data::write_wav((dir / (std::string(name) + ".wav")).string(), wav);
  }
  std::cout << "wrote " << count << " samples to " << dir.string() << '\n';
  return kExitOk;
}

std::vector<data::Sequence> load_sample_set(const std::string& spec, const data::Dataset& ds) {
  if (spec.starts_with("split:")) return ds.split(spec.substr(6));
  std::vector<fs::path> files;
  for (const auto& f : fs::directory_iterator(spec)) {
    if (f.path().extension() == ".u8") files.push_back(f.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<data::Sequence> out;
  for (const auto& f : files) out.push_back(data::read_tokens(f.string()));
  return out;
}

int cmd_evaluate(const Run& run) {
  const data::Dataset ds = data::load_dataset(require_key(run.cfg, "data.dir"));
  const auto enc = encoding_of(run.cfg);
  std::vector<std::pair<std::string, double>> report;

  if (!run.cfg.get_string("run.checkpoint", "").empty()) {
    const Poolformer model = load_model(run);
    const std::string split = run.cfg.get_string("eval.split", "test");
    const auto seqs = ds.split(split);
    if (seqs.empty()) throw ArgumentError("dataset has no '" + split + "' sequences");
    report.emplace_back("nll_bits", dataset_nll_bits(model, seqs));
  }

  const std::string samples = run.cfg.get_string("eval.samples", "");
  if (!samples.empty()) {
    auto decode_set = [&](const std::vector<data::Sequence>& seqs) {
      std::vector<std::vector<double>> w;
      for (const auto& s : seqs) w.push_back(data::decode_all(s, enc));
      return w;
    };
    const auto train_w = decode_set(ds.split("train"));
    const auto train_y = ds.labels("train");
    std::size_t classes = 2;
    for (std::size_t y : train_y) classes = std::max(classes, y + 1);
    metrics::ClassifierConfig cc;
    cc.classes = classes;
    cc.sample_rate = run.cfg.get_double("data.sample_rate", 8000.0);
    cc.epochs = run.cfg.get_u64("eval.classifier_epochs", cc.epochs);
    cc.seed = run.seed;
    metrics::TinyClassifier clf(cc);
    clf.fit(train_w, train_y);

    std::vector<std::vector<double>> held_w;
    std::vector<std::size_t> held_y;
    for (const std::string split : {"val", "test"}) {
      for (auto& w : decode_set(ds.split(split))) held_w.push_back(std::move(w));
      for (auto y : ds.labels(split)) held_y.push_back(y);
    }
    if (!held_w.empty()) report.emplace_back("classifier_accuracy", clf.accuracy(held_w, held_y));

    const auto gen = clf.classify(decode_set(load_sample_set(samples, ds)));
    const auto ref = clf.classify(train_w);
    std::vector<double> marginal(classes, 0.0);
    for (std::size_t y : train_y) marginal[y] += 1.0 / static_cast<double>(train_y.size());
    report.emplace_back("n_samples", static_cast<double>(gen.probs.rows()));
    report.emplace_back("fid", metrics::frechet_distance(metrics::fit_gaussian(gen.features),
                                                         metrics::fit_gaussian(ref.features)));
    report.emplace_back("is", metrics::inception_score(gen.probs));
    const auto aux = metrics::modified_is_and_am(gen.probs, marginal);
    report.emplace_back("mis", aux.mis);
    report.emplace_back("am", aux.am);
  }
  if (report.empty()) throw ArgumentError("evaluate needs run.checkpoint and/or eval.samples");

  std::string kv, header, row;
  for (const auto& [k, v] : report) {
    kv += k + "=" + format_double(v) + "\n";
    header += (header.empty() ? "" : ",") + k;
    row += (row.empty() ? "" : ",") + format_double(v);
  }
  write_text(run.out / "metrics.txt", kv);
  write_text(run.out / "metrics.csv", header + "\n" + row + "\n");
  write_effective_config(run, run.cfg);
  std::cout << kv;
  return kExitOk;
}

int cmd_gradcheck(const Run& run) {
  const auto rows = run_gradient_suite(run.seed);
  std::string csv = "kind,max_rel_error,passed\n";
  bool ok = true;
  for (const auto& r : rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-26s %.3e  %s\n", r.kind.c_str(), r.max_rel_error,
                  r.passed ? "PASS" : "FAIL");
    std::cout << line;
    csv += r.kind + "," + format_double(r.max_rel_error) + "," + (r.passed ? "1" : "0") + "\n";
    ok = ok && r.passed;
  }
  write_text(run.out / "gradcheck.csv", csv);
  return ok ? kExitOk : kExitFailure;
}

int cmd_inspect(const Run& run) {
  const Poolformer model = run.cfg.get_string("run.checkpoint", "").empty()
                               ? Poolformer::build(ModelConfig::from_config(run.cfg), run.seed)
                               : load_model(run);
  const auto profile = model.magnitude_profile();
  std::string prof = "layer,mean_abs_a\n";
  for (std::size_t i = 0; i < profile.size(); ++i) {
    prof += std::to_string(i) + "," + format_double(profile[i]) + "\n";
  }
  std::string coef = "layer,index,re,im\n";
  const auto coeffs = model.coefficients();
  for (std::size_t l = 0; l < coeffs.size(); ++l) {
    for (std::size_t j = 0; j < coeffs[l].size(); ++j) {
      coef += std::to_string(l) + "," + std::to_string(j) + "," + format_double(coeffs[l][j].real()) +
              "," + format_double(coeffs[l][j].imag()) + "\n";
    }
  }
  write_text(run.out / "magnitude_profile.csv", prof);
  write_text(run.out / "coefficients.csv", coef);
  write_effective_config(run, run.cfg);
  std::cout << "parameters " << model.param_count() << "\nrg_lru_layers " << profile.size() << '\n'
            << prof;
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"poolformer: hierarchical RG-LRU audio model"};
  app.require_subcommand(1);
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out = "poolformer_out";
  std::vector<std::string> sets;
  const std::vector<std::string> names{"generate-data", "train", "sample", "evaluate", "gradcheck", "inspect"};
  for (const auto& name : names) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "key = value config file")->required();
    sub->add_option("--seed", seed, "seed for every random stream")->each([&](const std::string&) {
      seed_given = true;
    });
    sub->add_option("--out", out, "output directory");
    sub->add_option("--set", sets, "override, key=value (repeatable)");
  }

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitArgument;
  }

  try {
    Run run;
    run.command = app.get_subcommands().front()->get_name();
    run.cfg = ConfigMap::load(config_path);
    for (const auto& s : sets) run.cfg.set_override(s);
    run.cfg.reject_unknown(known_keys());
    run.seed = seed_given ? seed : run.cfg.get_u64("run.seed", 0);
    run.out = out;
    if (run.command == "generate-data") return cmd_generate(run);
    if (run.command == "train") return cmd_train(run);
    if (run.command == "sample") return cmd_sample(run);
    if (run.command == "evaluate") return cmd_evaluate(run);
    if (run.command == "gradcheck") return cmd_gradcheck(run);
    return cmd_inspect(run);
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitArgument;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace poolformer::cli
