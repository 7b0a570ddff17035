#include "narl/text_io.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "narl/errors.hpp"

namespace narl::text {

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return ec == std::errc() ? std::string(buf, end) : format_double(v, 17);
}

std::string format_double(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

double parse_double(std::string_view token, std::size_t line) {
  double v = 0.0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end || token.empty()) {
    throw ParseError("expected a real number, got '" + std::string(token) + "'", line);
  }
  return v;
}

std::size_t parse_size(std::string_view token, std::size_t line) {
  std::size_t v = 0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end || token.empty()) {
    throw ParseError("expected a non-negative integer, got '" + std::string(token) + "'", line);
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

TokenReader::TokenReader(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) {
      tokens_.push_back(tok);
      lines_.push_back(number);
    }
  }
  line_ = number;
}

bool TokenReader::at_end() { return pos_ >= tokens_.size(); }

std::string TokenReader::next() {
  if (at_end()) throw ParseError("unexpected end of file", line_);
  line_ = lines_[pos_];
  return tokens_[pos_++];
}

void TokenReader::expect(std::string_view token) {
  const auto got = next();
  if (got != token) throw ParseError("expected '" + std::string(token) + "', got '" + got + "'", line_);
}

double TokenReader::next_double() {
  const auto tok = next();
  return parse_double(tok, line_);
}

std::size_t TokenReader::next_size() {
  const auto tok = next();
  return parse_size(tok, line_);
}

}  // namespace narl::text
