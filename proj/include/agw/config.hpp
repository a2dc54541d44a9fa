#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace agw {

/// INI-style run configuration: `[section]` headers, `key = value` lines,
/// `;` or `#` comments. Keys may themselves contain dots (`ETH.extent`).
class Config {
 public:
  /// Throws InvalidConfig naming the offending line.
  static Config parse(std::string_view text);
  static Config load(const std::filesystem::path& path);

  /// Applies "section.key=value". `battery.<dim>` is shorthand for the
  /// dimension's `use` key (battery.schemes=3 sets [schemes] use).
  void apply_override(std::string_view assignment);
  void set(std::string_view section, std::string_view key, std::string_view value);

  bool has_section(std::string_view section) const;
  /// Throws InvalidConfig "missing section [name]".
  void require_section(std::string_view section) const;

  std::optional<std::string> find(std::string_view section, std::string_view key) const;
  /// Throws InvalidConfig "missing key [section] key".
  std::string get(std::string_view section, std::string_view key) const;
  std::string get_or(std::string_view section, std::string_view key, std::string_view fallback) const;

  double get_double(std::string_view section, std::string_view key) const;
  double get_double_or(std::string_view section, std::string_view key, double fallback) const;
  long long get_int(std::string_view section, std::string_view key) const;
  long long get_int_or(std::string_view section, std::string_view key, long long fallback) const;
  bool get_bool_or(std::string_view section, std::string_view key, bool fallback) const;
  /// Comma-separated list with blank items removed.
  std::vector<std::string> get_list(std::string_view section, std::string_view key) const;
  std::vector<double> get_doubles(std::string_view section, std::string_view key) const;

  /// Sorted `[section]` / `key=value` text; equal configs give equal text.
  std::string canonical() const;
  std::uint64_t hash() const;

 private:
  std::map<std::string, std::map<std::string, std::string>, std::less<>> sections_;
};

/// "[section] key" for diagnostics.
std::string config_key(std::string_view section, std::string_view key);

}  // namespace agw
