#include "gazescreen/serialize.hpp"

#include <charconv>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "gazescreen/error.hpp"
#include "gazescreen/io.hpp"

namespace gazescreen {

void TextWriter::word(std::string_view name, std::string_view value) { out_ << name << ' ' << value << '\n'; }

void TextWriter::number(std::string_view name, double value) { out_ << name << ' ' << shortest(value) << '\n'; }

void TextWriter::integer(std::string_view name, std::int64_t value) { out_ << name << ' ' << value << '\n'; }

void TextWriter::values(std::string_view name, std::span<const double> values) {
  std::string line(name);
  line += ' ';
  line += std::to_string(values.size());
  for (double v : values) {
    line += ' ';
    append_shortest(line, v);
  }
  line += '\n';
  out_ << line;
}

void TextWriter::matrix(std::string_view name, const Matrix& m) {
  out_ << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  std::string line;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    line.clear();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) line += ' ';
      append_shortest(line, m(r, c));
    }
    line += '\n';
    out_ << line;
  }
}

std::string TextReader::token() {
  std::string tok;
  if (!(in_ >> tok)) malformed("unexpected end of input");
  return tok;
}

void TextReader::expect(std::string_view name) {
  const std::string tok = token();
  if (tok != name) malformed(fmt::format("expected '{}', found '{}'", name, tok));
}

double TextReader::parse_double(const std::string& tok) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) malformed(fmt::format("bad number '{}'", tok));
  return v;
}

std::int64_t TextReader::parse_int(const std::string& tok) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) malformed(fmt::format("bad integer '{}'", tok));
  return v;
}

std::string TextReader::word(std::string_view name) {
  expect(name);
  return token();
}

double TextReader::number(std::string_view name) {
  expect(name);
  return parse_double(token());
}

std::int64_t TextReader::integer(std::string_view name) {
  expect(name);
  return parse_int(token());
}

std::vector<double> TextReader::values(std::string_view name) {
  expect(name);
  const std::int64_t n = parse_int(token());
  if (n < 0) malformed("negative length");
  std::vector<double> out(static_cast<std::size_t>(n));
  for (double& v : out) v = parse_double(token());
  return out;
}

Vector TextReader::vector(std::string_view name) {
  const auto v = values(name);
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Matrix TextReader::matrix(std::string_view name) {
  expect(name);
  const std::int64_t rows = parse_int(token());
  const std::int64_t cols = parse_int(token());
  if (rows < 0 || cols < 0) malformed("negative matrix shape");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = parse_double(token());
  }
  return m;
}

std::string TextReader::peek_name() {
  in_ >> std::ws;
  const auto pos = in_.tellg();
  std::string tok;
  in_ >> tok;
  in_.clear();
  in_.seekg(pos);
  return tok;
}

void TextReader::malformed(const std::string& what) const {
  fail(ErrorCode::MalformedRow, fmt::format("{}: {}", source_, what));
}

}  // namespace gazescreen
