#include "gazescreen/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <fmt/format.h>

#include "gazescreen/error.hpp"

namespace gazescreen {

namespace pt = boost::property_tree;

namespace {

const pt::ptree* find_section(const pt::ptree& tree, std::string_view section) {
  if (section.empty()) return &tree;
  const auto it = tree.find(std::string(section));
  return it == tree.not_found() ? nullptr : &it->second;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, std::string_view source) {
  KeyValueConfig cfg;
  cfg.source_ = std::string(source);
  try {
    pt::ini_parser::read_ini(in, cfg.tree_);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorCode::InvalidConfig, fmt::format("{}:{}: {}", source, e.line(), e.message()));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::parse_string(std::string_view text, std::string_view source) {
  std::istringstream in{std::string(text)};
  return parse(in, source);
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::InvalidConfig, fmt::format("cannot open config '{}'", path.string()));
  return parse(in, path.string());
}

std::vector<std::string> KeyValueConfig::sections() const {
  std::vector<std::string> out;
  for (const auto& [name, child] : tree_) {
    if (!child.empty()) out.push_back(name);
  }
  return out;
}

std::vector<std::string> KeyValueConfig::keys(std::string_view section) const {
  std::vector<std::string> out;
  const pt::ptree* node = find_section(tree_, section);
  if (node == nullptr) return out;
  for (const auto& [name, child] : *node) {
    if (child.empty()) out.push_back(name);
  }
  return out;
}

bool KeyValueConfig::has_section(std::string_view section) const {
  return find_section(tree_, section) != nullptr;
}

std::optional<std::string> KeyValueConfig::get(std::string_view section, std::string_view key) const {
  const pt::ptree* node = find_section(tree_, section);
  if (node == nullptr) return std::nullopt;
  const auto it = node->find(std::string(key));
  if (it == node->not_found() || !it->second.empty()) return std::nullopt;
  return it->second.data();
}

void KeyValueConfig::set(std::string_view section, std::string_view key, std::string_view value) {
  if (section.empty()) {
    tree_.put(pt::ptree::path_type(std::string(key), '\0'), std::string(value));
    return;
  }
  auto it = tree_.find(std::string(section));
  if (it == tree_.not_found()) {
    tree_.push_back({std::string(section), pt::ptree()});
    it = tree_.find(std::string(section));
  }
  it->second.put(pt::ptree::path_type(std::string(key), '\0'), std::string(value));
}

void KeyValueConfig::bad_value(std::string_view section, std::string_view key, std::string_view value,
                               std::string_view expected) const {
  fail(ErrorCode::InvalidConfig,
       fmt::format("{}: [{}] {} = '{}' is not {}", source_, section, key, value, expected));
}

std::string KeyValueConfig::get_string(std::string_view section, std::string_view key,
                                       std::string_view fallback) const {
  auto v = get(section, key);
  return v ? *v : std::string(fallback);
}

double KeyValueConfig::get_double(std::string_view section, std::string_view key, double fallback) const {
  const auto v = get(section, key);
  if (!v) return fallback;
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) bad_value(section, key, *v, "a number");
  return out;
}

std::int64_t KeyValueConfig::get_int(std::string_view section, std::string_view key, std::int64_t fallback) const {
  const auto v = get(section, key);
  if (!v) return fallback;
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) bad_value(section, key, *v, "an integer");
  return out;
}

std::uint64_t KeyValueConfig::get_uint(std::string_view section, std::string_view key, std::uint64_t fallback) const {
  const auto v = get(section, key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) bad_value(section, key, *v, "a non-negative integer");
  return out;
}

bool KeyValueConfig::get_bool(std::string_view section, std::string_view key, bool fallback) const {
  const auto v = get(section, key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  bad_value(section, key, *v, "a boolean");
}

void KeyValueConfig::require_known_keys(std::string_view section, std::span<const std::string_view> allowed) const {
  for (const auto& key : keys(section)) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      fail(ErrorCode::InvalidConfig, fmt::format("{}: unknown key '{}' in section [{}]", source_, key, section));
    }
  }
}

std::string KeyValueConfig::to_text() const {
  std::ostringstream out;
  pt::ini_parser::write_ini(out, tree_);
  return out.str();
}

}  // namespace gazescreen
