#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace poolformer::data {

using Sequence = std::vector<std::uint8_t>;

// ---------------------------------------------------------------- WAV

struct Wav {
  std::uint32_t sample_rate = 8000;
  std::vector<std::int16_t> samples;
};

/// RIFF/WAVE, 16-bit PCM, mono. Throws FormatError with the byte offset of the
/// first problem.
Wav parse_wav(std::span<const std::uint8_t> bytes);
Wav read_wav(const std::string& path);
std::vector<std::uint8_t> serialize_wav(const Wav& wav);
void write_wav(const std::string& path, const Wav& wav);

/// PCM16 <-> [-1, 1). Conversion to PCM rounds and saturates.
double pcm_to_unit(std::int16_t s);
std::int16_t unit_to_pcm(double x);

// ---------------------------------------------------------------- encoding

enum class Encoding { mu_law, linear };
Encoding parse_encoding(const std::string& s);

std::uint8_t encode(double x, Encoding e);
double decode(std::uint8_t code, Encoding e);
Sequence encode_all(std::span<const double> x, Encoding e);
std::vector<double> decode_all(std::span<const std::uint8_t> codes, Encoding e);

/// Cuts the file into floor(S / chunk) encoded chunks; the remainder is dropped.
std::vector<Sequence> ingest_wav(const std::string& path, std::size_t chunk, Encoding e);

// ---------------------------------------------------------------- synthetic set

struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t count = 64;
  std::size_t length = 1024;
  double sample_rate = 8000.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Nominal carrier of class k. Families cycle sine, AM, FM.
double class_frequency(std::size_t k);

struct Example {
  std::size_t label = 0;
  std::string split;  // train, val or test
  std::vector<double> wave;
  Sequence tokens;    // mu-law codes of `wave`
};

/// Example i has label i % K. Within a class, every 8th item goes to val and
/// the one after it to test (split_for).
std::vector<Example> generate_synthetic(const SyntheticSpec& spec);
std::string split_for(std::size_t index_in_class);

// ---------------------------------------------------------------- on disk

struct ManifestEntry {
  std::string path;  // relative to the dataset directory
  std::string split;
  std::size_t label = 0;
};

struct Dataset {
  std::string dir;
  std::vector<ManifestEntry> entries;
  std::vector<Sequence> sequences;  // parallel to entries

  std::vector<Sequence> split(const std::string& name) const;
  std::vector<std::size_t> labels(const std::string& name) const;
};

inline constexpr const char* kManifestName = "manifest.txt";

/// Writes tokens/NNNNN.u8 (raw codes) and manifest.txt ("path split label").
void write_dataset(const std::string& dir, const std::vector<Example>& examples);
Dataset load_dataset(const std::string& dir);

void write_tokens(const std::string& path, const Sequence& tokens);
Sequence read_tokens(const std::string& path);

}  // namespace poolformer::data
