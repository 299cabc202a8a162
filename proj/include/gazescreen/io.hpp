#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace gazescreen {

/// Appends the shortest decimal text that parses back to exactly `v`.
void append_shortest(std::string& out, double v);
std::string shortest(double v);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

/// Hex SHA-1 of "blob <size>\0<contents>", the same id git assigns to a file.
std::string git_blob_hash(std::string_view contents);

}  // namespace gazescreen
