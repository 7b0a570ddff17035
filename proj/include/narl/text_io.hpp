#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace narl::text {

/// 17 significant digits; parses back to the identical double.
std::string format_double(double v);
/// Fixed significant-digit formatting (%.<digits>g).
std::string format_double(double v, int digits);

/// Whole-token parses; throw ParseError carrying `line`.
double parse_double(std::string_view token, std::size_t line);
std::size_t parse_size(std::string_view token, std::size_t line);

std::vector<std::string_view> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

std::ofstream open_for_write(const std::filesystem::path& path);
std::ifstream open_for_read(const std::filesystem::path& path);

/// Whitespace-separated token stream over a text file, tracking line numbers.
class TokenReader {
 public:
  explicit TokenReader(const std::filesystem::path& path);

  std::string next();
  void expect(std::string_view token);
  double next_double();
  std::size_t next_size();
  std::size_t line() const { return line_; }
  bool at_end();

 private:
  std::vector<std::string> tokens_;
  std::vector<std::size_t> lines_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

}  // namespace narl::text
