#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "poolformer/config.hpp"

using namespace poolformer;
using poolformer::cli::run_cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const char* name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "run.cfg";
  std::ofstream(p) << text;
  return p;
}

const char* kTiny =
    "data.classes = 2\n"
    "data.count = 16\n"
    "data.length = 256\n"
    "model.d = 8\n"
    "model.d_rec = 8\n"
    "model.pooling = 2\n"
    "model.layers = 1, 1\n"
    "model.dropout = 0\n"
    "train.batch_size = 2\n"
    "train.max_steps = 4\n"
    "train.warmup = 1\n"
    "train.verbose = false\n"
    "sample.count = 2\n"
    "sample.length = 256\n"
    "eval.classifier_epochs = 60\n";

int run(std::vector<std::string> args) { return run_cli(args); }

std::map<std::string, double> read_metrics(const fs::path& p) {
  std::map<std::string, double> m;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    m[line.substr(0, eq)] = std::stod(line.substr(eq + 1));
  }
  return m;
}

}  // namespace

TEST_CASE("cli: generate, train, sample, evaluate") {
  const fs::path root = scratch("pf_cli_pipeline");
  const std::string cfg = write_config(root, kTiny).string();
  const std::string data = (root / "data").string();

  REQUIRE(run({"generate-data", "--config", cfg, "--seed", "5", "--out", data}) == 0);
  CHECK(fs::exists(root / "data" / "manifest.txt"));

  const std::string ds = "data.dir=" + data;
  REQUIRE(run({"train", "--config", cfg, "--seed", "5", "--out", (root / "train").string(), "--set", ds}) == 0);
  for (const char* f : {"best.ckpt", "last.ckpt", "train_log.csv", "config.txt"}) {
    CHECK(fs::exists(root / "train" / f));
  }
  // the echoed config reproduces the run
  REQUIRE(run({"train", "--config", (root / "train" / "config.txt").string(), "--out",
               (root / "train2").string()}) == 0);
  CHECK(slurp(root / "train" / "last.ckpt") == slurp(root / "train2" / "last.ckpt"));

  const std::string ck = "run.checkpoint=" + (root / "train" / "best.ckpt").string();
  REQUIRE(run({"sample", "--config", cfg, "--out", (root / "gen").string(), "--set", ck}) == 0);
  CHECK(fs::file_size(root / "gen" / "samples" / "sample_001.u8") == 256);
  CHECK(fs::exists(root / "gen" / "samples" / "sample_001.wav"));

  REQUIRE(run({"evaluate", "--config", cfg, "--out", (root / "eval").string(), "--set", ds, "--set", ck,
               "--set", "eval.samples=" + (root / "gen" / "samples").string()}) == 0);
  const auto m = read_metrics(root / "eval" / "metrics.txt");
  for (const char* k : {"nll_bits", "fid", "is", "mis", "am", "n_samples", "classifier_accuracy"}) {
    CHECK(m.count(k) == 1);
  }
  CHECK(m.at("n_samples") == 2);
  CHECK(m.at("nll_bits") > 0);
  CHECK(m.at("is") >= 1.0);
  CHECK(m.at("is") <= 2.0);
  CHECK(fs::exists(root / "eval" / "metrics.csv"));

  // a model key that disagrees with the checkpoint is an argument error
  CHECK(run({"sample", "--config", cfg, "--out", (root / "gen").string(), "--set", ck, "--set",
             "model.d=16"}) == cli::kExitArgument);
  fs::remove_all(root);
}

TEST_CASE("cli: evaluating the training split against itself") {
  const fs::path root = scratch("pf_cli_self");
  const std::string cfg = write_config(root, kTiny).string();
  const std::string data = (root / "data").string();
  REQUIRE(run({"generate-data", "--config", cfg, "--out", data}) == 0);
  REQUIRE(run({"evaluate", "--config", cfg, "--out", (root / "eval").string(), "--set", "data.dir=" + data,
               "--set", "eval.samples=split:train"}) == 0);
  const auto m = read_metrics(root / "eval" / "metrics.txt");
  CHECK(m.at("fid") < 0.01);
  CHECK(m.count("nll_bits") == 0);
  fs::remove_all(root);
}

TEST_CASE("cli: exit codes") {
  const fs::path root = scratch("pf_cli_codes");
  const std::string cfg = write_config(root, kTiny).string();
  const std::string out = (root / "out").string();

  CHECK(run({"--help"}) == cli::kExitOk);
  CHECK(run({}) == cli::kExitArgument);
  CHECK(run({"frobnicate", "--config", cfg}) == cli::kExitArgument);
  CHECK(run({"inspect"}) == cli::kExitArgument);
  CHECK(run({"inspect", "--config", cfg, "--seed", "x"}) == cli::kExitArgument);
  CHECK(run({"inspect", "--config", (root / "none.cfg").string()}) == cli::kExitArgument);
  CHECK(run({"inspect", "--config", cfg, "--set", "model.colour=red"}) == cli::kExitArgument);
  CHECK(run({"inspect", "--config", cfg, "--out", out, "--set", "model.d=many"}) == cli::kExitArgument);
  CHECK(!fs::exists(out));  // nothing written by a failed command
  CHECK(run({"inspect", "--config", cfg, "--set", "model.layers=1"}) == cli::kExitArgument);
  CHECK(run({"generate-data", "--config", cfg, "--out", out, "--set", "data.kind=mp3"}) == cli::kExitArgument);
  CHECK(run({"generate-data", "--config", cfg, "--out", out, "--set", "data.length=255"}) == cli::kExitArgument);
  CHECK(run({"train", "--config", cfg, "--out", out}) == cli::kExitArgument);  // no data.dir
  CHECK(run({"train", "--config", cfg, "--out", out, "--set", "data.dir=" + (root / "nope").string()}) ==
        cli::kExitFailure);
  CHECK(run({"sample", "--config", cfg, "--out", out}) == cli::kExitArgument);  // no checkpoint
  CHECK(run({"sample", "--config", cfg, "--out", out, "--set",
             "run.checkpoint=" + (root / "missing.ckpt").string()}) == cli::kExitFailure);
  std::ofstream(root / "junk.ckpt") << "not a checkpoint";
  CHECK(run({"sample", "--config", cfg, "--out", out, "--set",
             "run.checkpoint=" + (root / "junk.ckpt").string()}) == cli::kExitFormat);
  std::ofstream(root / "bad.wav") << "RIFX....";
  CHECK(run({"generate-data", "--config", cfg, "--out", out, "--set", "data.kind=wav", "--set",
             "data.wav=" + (root / "bad.wav").string()}) == cli::kExitFormat);
  std::ofstream(root / "broken.cfg") << "model.d 8\n";
  CHECK(run({"inspect", "--config", (root / "broken.cfg").string()}) == cli::kExitArgument);
  fs::remove_all(root);
}

TEST_CASE("cli: inspect a baseline build") {
  const fs::path root = scratch("pf_cli_inspect");
  const std::string cfg = write_config(root, "").string();
  REQUIRE(run({"inspect", "--config", cfg, "--out", root.string()}) == 0);
  std::istringstream in(slurp(root / "magnitude_profile.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "layer,mean_abs_a");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const double v = std::stod(line.substr(line.find(',') + 1));
    CHECK(v >= 0.9);
    CHECK(v <= 0.99);
    ++rows;
  }
  CHECK(rows == 36);
  CHECK(fs::exists(root / "coefficients.csv"));
  fs::remove_all(root);
}

TEST_CASE("cli: wav ingestion and deterministic data") {
  const fs::path root = scratch("pf_cli_wav");
  const std::string cfg = write_config(root, kTiny).string();
  REQUIRE(run({"generate-data", "--config", cfg, "--seed", "9", "--out", (root / "a").string()}) == 0);
  REQUIRE(run({"generate-data", "--config", cfg, "--seed", "9", "--out", (root / "b").string()}) == 0);
  CHECK(slurp(root / "a" / "tokens" / "00003.u8") == slurp(root / "b" / "tokens" / "00003.u8"));
  REQUIRE(run({"generate-data", "--config", cfg, "--seed", "10", "--out", (root / "c").string()}) == 0);
  CHECK(slurp(root / "a" / "tokens" / "00003.u8") != slurp(root / "c" / "tokens" / "00003.u8"));

  // a hand-built 16-bit mono file, 10 chunks of 256
  {
    std::vector<std::uint8_t> bytes{'R', 'I', 'F', 'F', 0, 0, 0, 0, 'W', 'A', 'V', 'E'};
    auto u32 = [&](std::uint32_t v) {
      for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    auto u16 = [&](std::uint16_t v) {
      bytes.push_back(static_cast<std::uint8_t>(v));
      bytes.push_back(static_cast<std::uint8_t>(v >> 8));
    };
    for (char c : std::string("fmt ")) bytes.push_back(static_cast<std::uint8_t>(c));
    u32(16), u16(1), u16(1), u32(8000), u32(16000), u16(2), u16(16);
    for (char c : std::string("data")) bytes.push_back(static_cast<std::uint8_t>(c));
    const std::uint32_t n = 256 * 10;
    u32(2 * n);
    for (std::uint32_t i = 0; i < n; ++i) u16(static_cast<std::uint16_t>((i * 37) % 2000));
    std::ofstream(root / "in.wav", std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                          static_cast<std::streamsize>(bytes.size()));
  }
  REQUIRE(run({"generate-data", "--config", cfg, "--out", (root / "w").string(), "--set", "data.kind=wav",
               "--set", "data.wav=" + (root / "in.wav").string()}) == 0);
  const std::string manifest = slurp(root / "w" / "manifest.txt");
  CHECK(std::count(manifest.begin(), manifest.end(), '\n') == 10);
  CHECK(manifest.find("val") != std::string::npos);
  fs::remove_all(root);
}

TEST_CASE("cli: gradcheck table") {
  const fs::path root = scratch("pf_cli_grad");
  const std::string cfg = write_config(root, "").string();
  CHECK(run({"gradcheck", "--config", cfg, "--out", root.string()}) == 0);
  const std::string csv = slurp(root / "gradcheck.csv");
  CHECK(csv.find("poolformer_nll") != std::string::npos);
  CHECK(csv.find(",0\n") == std::string::npos);
  fs::remove_all(root);
}
