#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace patchmem::text {

std::vector<std::string_view> split_lines(std::string_view s);
std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);
bool ends_with(std::string_view s, std::string_view suffix);
bool contains(std::string_view s, std::string_view needle);

/// Lower-cased alphanumeric tokens ([A-Za-z0-9_]+).
std::vector<std::string> tokenize(std::string_view s);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string hex_digest(std::string_view s);

/// Caps `s` to `max_chars`, keeping head and tail around an explicit marker.
/// The result never exceeds `max_chars`.
std::string cap_head_tail(std::string_view s, std::size_t max_chars);

/// Caps `s` to `max_chars` keeping the head, with a truncation marker.
std::string cap_head(std::string_view s, std::size_t max_chars);

/// Number of (possibly overlapping) occurrences of `needle` in `s`.
std::size_t count_occurrences(std::string_view s, std::string_view needle);

bool looks_binary(std::string_view bytes);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace patchmem::text
