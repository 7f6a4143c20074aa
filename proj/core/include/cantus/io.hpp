// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cantus {

std::string read_file(const std::string& path);

/// Writes to `path.tmp` then renames over `path`. Throws IoError.
void write_file_atomic(const std::string& path, std::string_view contents);

// Shortest representation that parses back to the same double.
std::string format_double(double value);
bool parse_double(std::string_view text, double& out);
bool parse_int(std::string_view text, long long& out);

std::vector<std::string_view> split_whitespace(std::string_view line);
std::vector<std::string_view> split_char(std::string_view line, char sep);
std::string_view trim(std::string_view s);

}  // namespace cantus
