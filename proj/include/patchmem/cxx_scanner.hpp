#pragma once

// Lightweight C/C++ front end for symbol indexing. It is not a compiler: it
// tokenizes, tracks scopes, and recognizes the declaration shapes that matter
// for localization (function definitions and their parameters, variable and
// member declarations, types, enumerators, macros). Every other identifier
// occurrence is a use.

#include <string>
#include <string_view>
#include <vector>

namespace patchmem {

enum class SiteKind { Definition, Use };

std::string_view to_string(SiteKind kind);

namespace cxx {

enum class TokenKind { Identifier, Keyword, Number, String, Punct };

struct Token {
  TokenKind kind = TokenKind::Punct;
  std::string text;
  int line = 0;
  // Inside a preprocessor directive or an inactive #else/#elif branch; such
  // tokens yield sites but do not take part in scope tracking.
  bool directive = false;
  bool macro_name = false;  // the NAME of `#define NAME`
};

/// Throws Error(SyntaxError) on unterminated comments or literals.
std::vector<Token> tokenize(std::string_view source);

struct ScannedSite {
  std::string symbol;
  int line = 0;
  SiteKind kind = SiteKind::Use;
  bool is_call = false;     // identifier immediately followed by '('
  std::string param_of;     // owning function for parameter definitions

  bool operator==(const ScannedSite&) const = default;
  auto operator<=>(const ScannedSite&) const = default;
};

/// Scans one translation unit. Sites are sorted and unique.
/// Throws Error(SyntaxError) on unbalanced braces, parentheses or brackets.
std::vector<ScannedSite> scan(std::string_view source);

/// Grammar-less fallback: every identifier-shaped word is a use.
std::vector<ScannedSite> scan_lexical(std::string_view source);

bool is_keyword(std::string_view word);

}  // namespace cxx
}  // namespace patchmem
