#include "patchmem/timestamp.hpp"

#include <cctype>

namespace patchmem {

std::string CveTimestamp::to_string() const {
  return std::to_string(year) + "-" + std::to_string(sequence);
}

std::optional<CveTimestamp> parse_timestamp(std::string_view id) {
  auto digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
  for (std::size_t i = 0; i + 4 <= id.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(id[i])) != 'c' ||
        std::tolower(static_cast<unsigned char>(id[i + 1])) != 'v' ||
        std::tolower(static_cast<unsigned char>(id[i + 2])) != 'e' || id[i + 3] != '-')
      continue;
    // The segment must not be glued to a preceding letter ("xcve-...").
    if (i > 0 && std::isalpha(static_cast<unsigned char>(id[i - 1]))) continue;
    std::size_t p = i + 4;
    std::size_t year_begin = p;
    while (p < id.size() && digit(id[p])) ++p;
    if (p - year_begin != 4 || p >= id.size() || id[p] != '-') continue;
    std::size_t seq_begin = ++p;
    while (p < id.size() && digit(id[p]) && p - seq_begin < 18) ++p;
    if (p == seq_begin) continue;
    CveTimestamp ts;
    ts.year = std::stoll(std::string(id.substr(year_begin, 4)));
    ts.sequence = std::stoll(std::string(id.substr(seq_begin, p - seq_begin)));
    return ts;
  }
  return std::nullopt;
}

}  // namespace patchmem
