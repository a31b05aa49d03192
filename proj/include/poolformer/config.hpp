#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace poolformer {

/// Flat `key = value` settings. Lines starting with '#' and blank lines are
/// ignored. Keys keep their section prefix (model.d, train.lr, ...).
class ConfigMap {
 public:
  static ConfigMap parse(std::string_view text, std::string_view origin = "config");
  static ConfigMap load(const std::string& path);

  /// Applies one `key=value` override.
  void set_override(std::string_view assignment);
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void merge(const ConfigMap& other);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::size_t> get_list(const std::string& key,
                                    const std::vector<std::size_t>& fallback) const;

  /// Throws ArgumentError naming the first key not in `known`.
  void reject_unknown(const std::set<std::string>& known) const;

  /// Canonical text: sorted `key = value` lines.
  std::string to_text() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::string format_list(const std::vector<std::size_t>& v);
/// Round-trippable decimal form of a double.
std::string format_double(double v);

}  // namespace poolformer
