#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace surgrep::io {

/// Calls `fn(record, line_number)` for each non-blank line; throws ParseError
/// on lines that are not JSON objects.
void for_each_record(std::istream& in,
                     const std::function<void(const nlohmann::json&, std::size_t)>& fn);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

std::string read_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Annotation files under `path`: the file itself, or every *.jsonl in the
/// directory in lexicographic order.
std::vector<std::filesystem::path> list_record_files(const std::filesystem::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t v);

}  // namespace surgrep::io
