#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace avglemma {

using Json = nlohmann::json;

/// Sorted keys, two-space indent, trailing newline; non-finite numbers become null.
std::string canonical_json(const Json& j);

/// Shortest round-trip decimal form of a double.
std::string format_double(double x);

/// RFC 4180 table: fields containing a comma, quote or newline are quoted.
std::string to_csv(const std::vector<std::string>& header,
                   const std::vector<std::vector<std::string>>& rows);

/// Two-column, space-separated plot data.
std::string to_plot(const std::vector<double>& x, const std::vector<double>& y);

/// Writes via a temporary file and rename. Throws Error naming the path.
void write_atomic(const std::filesystem::path& path, const std::string& content);

std::uint64_t fnv1a64(const std::string& bytes);

/// Hash of the canonical config without the "output" and "threads" keys.
std::string config_hash(const Json& config);

}  // namespace avglemma
