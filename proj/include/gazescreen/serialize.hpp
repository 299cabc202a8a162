#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gazescreen/matrix.hpp"

namespace gazescreen {

/// Line-oriented text container: every line is `name value...`. Doubles use
/// the shortest round-trip form, so save -> load is bit-exact.
class TextWriter {
 public:
  explicit TextWriter(std::ostream& out) : out_(out) {}

  void word(std::string_view name, std::string_view value);
  void number(std::string_view name, double value);
  void integer(std::string_view name, std::int64_t value);
  /// `name count v0 v1 ...`
  void values(std::string_view name, std::span<const double> values);
  void matrix(std::string_view name, const Matrix& m);

 private:
  std::ostream& out_;
};

class TextReader {
 public:
  TextReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  std::string word(std::string_view name);
  double number(std::string_view name);
  std::int64_t integer(std::string_view name);
  std::vector<double> values(std::string_view name);
  Vector vector(std::string_view name);
  Matrix matrix(std::string_view name);

  /// Name of the next line without consuming it.
  std::string peek_name();

  [[noreturn]] void malformed(const std::string& what) const;

 private:
  std::string token();
  void expect(std::string_view name);
  double parse_double(const std::string& tok);
  std::int64_t parse_int(const std::string& tok);

  std::istream& in_;
  std::string source_;
};

}  // namespace gazescreen
