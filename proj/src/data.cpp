#include "poolformer/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "poolformer/dsp.hpp"
#include "poolformer/errors.hpp"
#include "poolformer/rng.hpp"

namespace poolformer::data {

namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StateError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArgumentError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArgumentError("failed writing " + path);
}

std::uint32_t le32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

std::uint16_t le16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | b[at + 1] << 8);
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

}  // namespace

// ---------------------------------------------------------------- WAV

Wav parse_wav(std::span<const std::uint8_t> b) {
  if (b.size() < 12) throw FormatError("file too short for a RIFF header", b.size());
  if (!tag_is(b, 0, "RIFF")) throw FormatError("missing RIFF tag", 0);
  if (!tag_is(b, 8, "WAVE")) throw FormatError("missing WAVE tag", 8);
  Wav wav;
  bool have_fmt = false;
  std::size_t at = 12;
  while (at + 8 <= b.size()) {
    const std::uint32_t size = le32(b, at + 4);
    const std::size_t body = at + 8;
    if (size > b.size() - body) throw FormatError("chunk runs past end of file", at);
    if (tag_is(b, at, "fmt ")) {
      if (size < 16) throw FormatError("fmt chunk shorter than 16 bytes", at);
      if (le16(b, body) != 1) throw FormatError("not linear PCM (format tag != 1)", body);
      if (le16(b, body + 2) != 1) throw FormatError("only mono is supported", body + 2);
      wav.sample_rate = le32(b, body + 4);
      if (wav.sample_rate == 0) throw FormatError("zero sample rate", body + 4);
      if (le16(b, body + 14) != 16) {
        throw FormatError("unsupported bit depth " + std::to_string(le16(b, body + 14)), body + 14);
      }
      have_fmt = true;
    } else if (tag_is(b, at, "data")) {
      if (!have_fmt) throw FormatError("data chunk before fmt chunk", at);
      if (size % 2 != 0) throw FormatError("odd data size for 16-bit samples", at + 4);
      wav.samples.resize(size / 2);
      for (std::size_t i = 0; i < wav.samples.size(); ++i) {
        wav.samples[i] = static_cast<std::int16_t>(le16(b, body + 2 * i));
      }
      return wav;
    }
    at = body + size + (size & 1);  // chunks are word aligned
  }
  throw FormatError(have_fmt ? "no data chunk" : "no fmt chunk", at);
}

Wav read_wav(const std::string& path) {
  const auto bytes = slurp(path);
  return parse_wav(bytes);
}

std::vector<std::uint8_t> serialize_wav(const Wav& wav) {
  const auto data_bytes = static_cast<std::uint32_t>(wav.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  for (char c : std::string("RIFF")) out.push_back(static_cast<std::uint8_t>(c));
  put32(out, 36 + data_bytes);
  for (char c : std::string("WAVEfmt ")) out.push_back(static_cast<std::uint8_t>(c));
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, wav.sample_rate);
  put32(out, wav.sample_rate * 2);
  put16(out, 2);
  put16(out, 16);
  for (char c : std::string("data")) out.push_back(static_cast<std::uint8_t>(c));
  put32(out, data_bytes);
  for (std::int16_t s : wav.samples) put16(out, static_cast<std::uint16_t>(s));
  return out;
}

void write_wav(const std::string& path, const Wav& wav) { dump(path, serialize_wav(wav)); }

double pcm_to_unit(std::int16_t s) { return static_cast<double>(s) / 32768.0; }

std::int16_t unit_to_pcm(double x) {
  const double v = std::round(x * 32768.0);
  return static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0));
}

// ---------------------------------------------------------------- encoding

Encoding parse_encoding(const std::string& s) {
  if (s == "mu_law" || s == "mulaw" || s == "mu-law") return Encoding::mu_law;
  if (s == "linear") return Encoding::linear;
  throw ArgumentError("unknown encoding '" + s + "' (mu_law or linear)");
}

std::uint8_t encode(double x, Encoding e) {
  return e == Encoding::mu_law ? dsp::mu_law_encode(x) : dsp::linear_encode(x);
}

double decode(std::uint8_t code, Encoding e) {
  return e == Encoding::mu_law ? dsp::mu_law_decode(code) : dsp::linear_decode(code);
}

Sequence encode_all(std::span<const double> x, Encoding e) {
  Sequence out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = encode(x[i], e);
  return out;
}

std::vector<double> decode_all(std::span<const std::uint8_t> codes, Encoding e) {
  std::vector<double> out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) out[i] = decode(codes[i], e);
  return out;
}

std::vector<Sequence> ingest_wav(const std::string& path, std::size_t chunk, Encoding e) {
  if (chunk == 0) throw ArgumentError("chunk length must be positive");
  const Wav wav = read_wav(path);
  std::vector<Sequence> out;
  for (std::size_t start = 0; start + chunk <= wav.samples.size(); start += chunk) {
    Sequence s(chunk);
    for (std::size_t i = 0; i < chunk; ++i) s[i] = encode(pcm_to_unit(wav.samples[start + i]), e);
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------- synthetic set

void SyntheticSpec::validate() const {
  if (classes < 2 || classes > 6) throw ArgumentError("data.classes must be in [2, 6]");
  if (count < classes) throw ArgumentError("data.count must be at least data.classes");
  if (length < 16) throw ArgumentError("data.length must be >= 16");
  if (sample_rate < 2 * (class_frequency(classes - 1) * 1.1 + 200)) {
    throw ArgumentError("data.sample_rate too low for the class frequencies");
  }
}

double class_frequency(std::size_t k) { return 300.0 + 600.0 * static_cast<double>(k); }

std::string split_for(std::size_t index_in_class) {
  switch (index_in_class % 8) {
    case 6:
      return "val";
    case 7:
      return "test";
    default:
      return "train";
  }
}

std::vector<Example> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const SeededRng root(spec.seed);
  std::vector<Example> out;
  out.reserve(spec.count);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < spec.count; ++i) {
    SeededRng rng = root.split(i);
    Example ex;
    ex.label = i % spec.classes;
    ex.split = split_for(i / spec.classes);
    const double f = class_frequency(ex.label) * rng.uniform(0.97, 1.03);
    const double phase = rng.uniform(0.0, two_pi);
    const double amp = rng.uniform(0.4, 0.8);
    const double fm = rng.uniform(20.0, 40.0);  // modulation rate
    const double mphase = rng.uniform(0.0, two_pi);
    ex.wave.resize(spec.length);
    for (std::size_t n = 0; n < spec.length; ++n) {
      const double t = static_cast<double>(n) / spec.sample_rate;
      const double mod = std::sin(two_pi * fm * t + mphase);
      double v = 0.0;
      switch (ex.label % 3) {
        case 0:
          v = std::sin(two_pi * f * t + phase);
          break;
        case 1:
          v = (1.0 + 0.5 * mod) / 1.5 * std::sin(two_pi * f * t + phase);
          break;
        default:
          v = std::sin(two_pi * f * t + phase + 2.0 * std::cos(two_pi * fm * t + mphase));
          break;
      }
      ex.wave[n] = amp * v;
    }
    ex.tokens = encode_all(ex.wave, Encoding::mu_law);
    out.push_back(std::move(ex));
  }
  return out;
}

// ---------------------------------------------------------------- on disk

void write_tokens(const std::string& path, const Sequence& tokens) { dump(path, tokens); }

Sequence read_tokens(const std::string& path) { return slurp(path); }

void write_dataset(const std::string& dir, const std::vector<Example>& examples) {
  fs::create_directories(fs::path(dir) / "tokens");
  std::ostringstream manifest;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "tokens/%05zu.u8", i);
    write_tokens((fs::path(dir) / name).string(), examples[i].tokens);
    manifest << name << ' ' << examples[i].split << ' ' << examples[i].label << '\n';
  }
  const std::string text = manifest.str();
  dump((fs::path(dir) / kManifestName).string(),
       std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Dataset load_dataset(const std::string& dir) {
  const fs::path manifest = fs::path(dir) / kManifestName;
  std::ifstream in(manifest);
  if (!in) throw StateError("no dataset manifest at " + manifest.string());
  Dataset ds;
  ds.dir = dir;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_at = offset;
    offset += line.size() + 1;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ManifestEntry e;
    long long label = -1;
    if (!(ls >> e.path >> e.split >> label) || label < 0) {
      throw FormatError("manifest line is not 'path split label': " + line, line_at);
    }
    if (e.split != "train" && e.split != "val" && e.split != "test") {
      throw FormatError("unknown split '" + e.split + "'", line_at);
    }
    e.label = static_cast<std::size_t>(label);
    ds.sequences.push_back(read_tokens((fs::path(dir) / e.path).string()));
    ds.entries.push_back(std::move(e));
  }
  return ds;
}

std::vector<Sequence> Dataset::split(const std::string& name) const {
  std::vector<Sequence> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split == name) out.push_back(sequences[i]);
  }
  return out;
}

std::vector<std::size_t> Dataset::labels(const std::string& name) const {
  std::vector<std::size_t> out;
  for (const auto& e : entries) {
    if (e.split == name) out.push_back(e.label);
  }
  return out;
}

}  // namespace poolformer::data
