// Small string helpers shared by the file parsers.  Internal header.
#ifndef CADV_TEXT_UTIL_HPP
#define CADV_TEXT_UTIL_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cadv::detail {

bool is_identifier(std::string_view s);
/// DSL keywords plus the dataset's label column.
bool is_reserved_word(std::string_view s);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);
/// Whole-token parse; rejects trailing garbage and non-finite values.
std::optional<double> parse_double(std::string_view s);

std::vector<std::string_view> split_lines(std::string_view text);
std::string_view trim(std::string_view s);
std::string_view strip_comment(std::string_view line);
std::vector<std::string_view> split_ws(std::string_view s);
std::vector<std::string_view> split_csv(std::string_view s);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

} // namespace cadv::detail

#endif
