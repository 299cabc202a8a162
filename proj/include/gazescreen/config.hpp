#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ptree.hpp>

namespace gazescreen {

/// Sectioned `key = value` text. Keys outside any section live in the
/// section named "". Lookup failures and malformed values raise
/// ErrorCode::InvalidConfig naming the section, key and source.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::istream& in, std::string_view source = "<config>");
  static KeyValueConfig parse_string(std::string_view text, std::string_view source = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  std::vector<std::string> sections() const;
  std::vector<std::string> keys(std::string_view section) const;
  bool has_section(std::string_view section) const;
  std::optional<std::string> get(std::string_view section, std::string_view key) const;
  void set(std::string_view section, std::string_view key, std::string_view value);

  std::string get_string(std::string_view section, std::string_view key, std::string_view fallback) const;
  double get_double(std::string_view section, std::string_view key, double fallback) const;
  std::int64_t get_int(std::string_view section, std::string_view key, std::int64_t fallback) const;
  std::uint64_t get_uint(std::string_view section, std::string_view key, std::uint64_t fallback) const;
  bool get_bool(std::string_view section, std::string_view key, bool fallback) const;

  /// Rejects keys in `section` that are not listed in `allowed`.
  void require_known_keys(std::string_view section, std::span<const std::string_view> allowed) const;

  const std::string& source() const { return source_; }

  /// Serialized form; sections in insertion order.
  std::string to_text() const;

 private:
  [[noreturn]] void bad_value(std::string_view section, std::string_view key, std::string_view value,
                              std::string_view expected) const;

  boost::property_tree::ptree tree_;
  std::string source_ = "<config>";
};

}  // namespace gazescreen
