#include "patchmem/cxx_scanner.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <unordered_set>

#include "patchmem/error.hpp"

namespace patchmem {

std::string_view to_string(SiteKind kind) {
  return kind == SiteKind::Definition ? "definition" : "use";
}

namespace cxx {
namespace {

const std::unordered_set<std::string_view>& keywords() {
  static const std::unordered_set<std::string_view> kw = {
      "alignas", "alignof", "asm", "auto", "bool", "break", "case", "catch", "char",
      "char8_t", "char16_t", "char32_t", "class", "co_await", "co_return", "co_yield",
      "concept", "const", "consteval", "constexpr", "constinit", "const_cast", "continue",
      "decltype", "default", "delete", "do", "double", "dynamic_cast", "else", "enum",
      "explicit", "export", "extern", "false", "final", "float", "for", "friend", "goto",
      "if", "inline", "int", "long", "mutable", "namespace", "new", "noexcept", "nullptr",
      "operator", "override", "private", "protected", "public", "register",
      "reinterpret_cast", "requires", "restrict", "return", "short", "signed", "sizeof",
      "static", "static_assert", "static_cast", "struct", "switch", "template", "this",
      "thread_local", "throw", "true", "try", "typedef", "typeid", "typename", "union",
      "unsigned", "using", "virtual", "void", "volatile", "wchar_t", "while", "_Bool",
      "_Complex", "_Atomic", "_Noreturn", "_Static_assert", "_Thread_local", "_Alignas",
      "_Alignof", "_Generic", "__attribute__", "__declspec", "__inline", "__restrict",
      "__extension__", "__asm__", "__volatile__"};
  return kw;
}

// Keywords that can be part of a declaration's type.
bool is_type_keyword(std::string_view w) {
  static const std::unordered_set<std::string_view> kw = {
      "auto", "bool", "char", "char8_t", "char16_t", "char32_t", "const", "constexpr",
      "constinit", "double", "enum", "extern", "float", "inline", "int", "long", "mutable",
      "register", "restrict", "short", "signed", "static", "struct", "class", "thread_local",
      "typename", "union", "unsigned", "void", "volatile", "wchar_t", "_Bool", "_Complex",
      "_Atomic", "_Thread_local", "__restrict", "__inline", "__extension__"};
  return kw.contains(w);
}

// Keywords that can never begin a declaration statement.
bool is_statement_keyword(std::string_view w) {
  static const std::unordered_set<std::string_view> kw = {
      "return", "if", "else", "while", "do", "for", "switch", "case", "default", "goto",
      "break", "continue", "throw", "delete", "new", "sizeof", "co_return", "co_yield",
      "co_await", "using", "operator", "static_assert", "_Static_assert", "asm", "__asm__",
      "try", "catch", "friend", "public", "private", "protected", "template", "namespace",
      "typedef", "this", "true", "false", "nullptr"};
  return kw.contains(w);
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$'; }

[[noreturn]] void syntax_error(int line, const std::string& what) {
  throw Error(ErrorCode::SyntaxError, "line " + std::to_string(line) + ": " + what);
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    bool line_start = true;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '\n') {
        ++line_;
        ++pos_;
        line_start = true;
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
        continue;
      }
      if (c == '/' && peek(1) == '/') {
        skip_line_comment();
        continue;
      }
      if (c == '/' && peek(1) == '*') {
        skip_block_comment();
        continue;
      }
      if (c == '#' && line_start) {
        directive();
        line_start = true;
        continue;
      }
      line_start = false;
      lex_one(/*directive=*/skipping_ > 0);
    }
    // An unterminated #if is tolerated; the tokens are still usable.
    return std::move(out_);
  }

 private:
  char peek(std::size_t ahead) const {
    return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
  }

  void skip_line_comment() {
    while (pos_ < src_.size() && src_[pos_] != '\n') {
      if (src_[pos_] == '\\' && peek(1) == '\n') {
        pos_ += 2;
        ++line_;
        continue;
      }
      ++pos_;
    }
  }

  void skip_block_comment() {
    int start = line_;
    pos_ += 2;
    while (pos_ + 1 < src_.size() && !(src_[pos_] == '*' && src_[pos_ + 1] == '/')) {
      if (src_[pos_] == '\n') ++line_;
      ++pos_;
    }
    if (pos_ + 1 >= src_.size()) syntax_error(start, "unterminated block comment");
    pos_ += 2;
  }

  void push(TokenKind kind, std::string text, bool directive) {
    Token t;
    t.kind = kind;
    t.text = std::move(text);
    t.line = line_;
    t.directive = directive;
    out_.push_back(std::move(t));
  }

  void quoted(char quote, bool directive) {
    int start = line_;
    std::size_t begin = pos_;
    ++pos_;
    while (true) {
      if (pos_ >= src_.size() || src_[pos_] == '\n')
        syntax_error(start, std::string("unterminated ") + (quote == '"' ? "string" : "character") + " literal");
      if (src_[pos_] == '\\') {
        if (peek(1) == '\n') ++line_;
        pos_ += 2;
        continue;
      }
      if (src_[pos_] == quote) break;
      ++pos_;
    }
    ++pos_;
    push(quote == '"' ? TokenKind::String : TokenKind::Number, std::string(src_.substr(begin, pos_ - begin)), directive);
  }

  void raw_string(bool directive) {
    // R"delim( ... )delim"
    int start = line_;
    std::size_t begin = pos_;
    pos_ += 2;
    std::size_t open = src_.find('(', pos_);
    if (open == std::string_view::npos) syntax_error(start, "malformed raw string");
    std::string close = ")" + std::string(src_.substr(pos_, open - pos_)) + "\"";
    std::size_t end = src_.find(close, open + 1);
    if (end == std::string_view::npos) syntax_error(start, "unterminated raw string");
    for (std::size_t i = pos_; i < end; ++i)
      if (src_[i] == '\n') ++line_;
    pos_ = end + close.size();
    push(TokenKind::String, std::string(src_.substr(begin, pos_ - begin)), directive);
  }

  void lex_one(bool directive) {
    char c = src_[pos_];
    if ((c == 'R' || ((c == 'u' || c == 'U' || c == 'L') && peek(1) == 'R') ||
         (c == 'u' && peek(1) == '8' && peek(2) == 'R')) ) {
      std::size_t r = c == 'R' ? 0 : (peek(1) == 'R' ? 1 : 2);
      if (peek(r + 1) == '"') {
        pos_ += r;
        raw_string(directive);
        return;
      }
    }
    if (ident_start(c)) {
      std::size_t begin = pos_;
      while (pos_ < src_.size() && ident_char(src_[pos_])) ++pos_;
      std::string word(src_.substr(begin, pos_ - begin));
      // String/char prefixes: L"..", u8"..", U'..'
      if (pos_ < src_.size() && (src_[pos_] == '"' || src_[pos_] == '\'') &&
          (word == "L" || word == "u" || word == "U" || word == "u8")) {
        quoted(src_[pos_], directive);
        return;
      }
      const auto kind = keywords().contains(word) ? TokenKind::Keyword : TokenKind::Identifier;
      push(kind, std::move(word), directive);
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
      std::size_t begin = pos_;
      while (pos_ < src_.size()) {
        char d = src_[pos_];
        if (ident_char(d) || d == '.') {
          ++pos_;
        } else if (d == '\'' && pos_ + 1 < src_.size() && ident_char(src_[pos_ + 1])) {
          pos_ += 1;  // digit separator
        } else if ((d == '+' || d == '-') && pos_ > begin &&
                   (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E' || src_[pos_ - 1] == 'p' ||
                    src_[pos_ - 1] == 'P')) {
          ++pos_;
        } else {
          break;
        }
      }
      push(TokenKind::Number, std::string(src_.substr(begin, pos_ - begin)), directive);
      return;
    }
    if (c == '"' || c == '\'') {
      quoted(c, directive);
      return;
    }
    if (c == ':' && peek(1) == ':') {
      pos_ += 2;
      push(TokenKind::Punct, "::", directive);
      return;
    }
    if (c == '-' && peek(1) == '>') {
      pos_ += 2;
      push(TokenKind::Punct, "->", directive);
      return;
    }
    if (c == '\\' && peek(1) == '\n') {
      pos_ += 2;
      ++line_;
      return;
    }
    ++pos_;
    push(TokenKind::Punct, std::string(1, c), directive);
  }

  // Reads the logical directive line (with continuations) into tokens.
  void directive() {
    ++pos_;  // '#'
    while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t')) ++pos_;
    std::size_t begin = pos_;
    while (pos_ < src_.size() && ident_char(src_[pos_])) ++pos_;
    std::string name(src_.substr(begin, pos_ - begin));

    if (name == "if" || name == "ifdef" || name == "ifndef") {
      cond_stack_.push_back(false);
    } else if (name == "elif" || name == "else") {
      if (!cond_stack_.empty() && !cond_stack_.back()) {
        cond_stack_.back() = true;
        ++skipping_;
      }
    } else if (name == "endif") {
      if (!cond_stack_.empty()) {
        if (cond_stack_.back()) --skipping_;
        cond_stack_.pop_back();
      }
    }

    if (name == "include" || name == "include_next" || name == "import" || name == "pragma" ||
        name == "error" || name == "warning" || name == "line") {
      skip_directive_rest();
      return;
    }
    bool is_define = name == "define";
    bool first = true;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '\n') break;
      if (c == '\\' && peek(1) == '\n') {
        pos_ += 2;
        ++line_;
        continue;
      }
      if (c == '\\' && peek(1) == '\r' && peek(2) == '\n') {
        pos_ += 3;
        ++line_;
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
        continue;
      }
      if (c == '/' && peek(1) == '/') {
        skip_line_comment();
        break;
      }
      if (c == '/' && peek(1) == '*') {
        skip_block_comment();
        continue;
      }
      lex_one(/*directive=*/true);
      if (is_define && first && !out_.empty() && out_.back().kind == TokenKind::Identifier)
        out_.back().macro_name = skipping_ == 0;
      first = false;
    }
  }

  void skip_directive_rest() {
    while (pos_ < src_.size() && src_[pos_] != '\n') {
      if (src_[pos_] == '\\' && peek(1) == '\n') {
        pos_ += 2;
        ++line_;
        continue;
      }
      if (src_[pos_] == '/' && peek(1) == '*') {
        skip_block_comment();
        continue;
      }
      ++pos_;
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  std::vector<Token> out_;
  std::vector<bool> cond_stack_;  // true once an #else/#elif branch started
  int skipping_ = 0;
};

enum class Role { Use, Definition, Declaration, Skip };

enum class ScopeKind { File, Namespace, Class, Enum, Function, Block, Init };

struct Scope {
  ScopeKind kind;
  bool declarator_tail = false;  // identifiers after the closing '}' up to ';' are declared
};

class Structure {
 public:
  explicit Structure(const std::vector<Token>& all) : all_(all) {
    for (std::size_t i = 0; i < all.size(); ++i)
      if (!all[i].directive) idx_.push_back(i);
    roles_.assign(all.size(), Role::Use);
    owner_.assign(all.size(), std::string());
  }

  std::vector<ScannedSite> run() {
    walk();
    std::set<ScannedSite> sites;
    for (std::size_t i = 0; i < all_.size(); ++i) {
      const auto& t = all_[i];
      if (t.kind != TokenKind::Identifier || roles_[i] == Role::Skip) continue;
      ScannedSite s;
      s.symbol = t.text;
      s.line = t.line;
      s.kind = (roles_[i] == Role::Definition || t.macro_name) ? SiteKind::Definition : SiteKind::Use;
      s.param_of = owner_[i];
      s.is_call = roles_[i] == Role::Use && next_is_paren(i);
      sites.insert(std::move(s));
    }
    return {sites.begin(), sites.end()};
  }

 private:
  // Structural token helpers; positions index into idx_.
  std::size_t n() const { return idx_.size(); }
  const Token& tok(std::size_t p) const { return all_[idx_[p]]; }
  bool is(std::size_t p, std::string_view s) const { return p < n() && tok(p).text == s && tok(p).kind != TokenKind::String; }
  bool ident(std::size_t p) const { return p < n() && tok(p).kind == TokenKind::Identifier; }
  void mark(std::size_t p, Role r) { roles_[idx_[p]] = r; }

  bool next_is_paren(std::size_t raw) const {
    for (std::size_t j = raw + 1; j < all_.size(); ++j) {
      if (all_[j].directive != all_[raw].directive) continue;
      return all_[j].kind == TokenKind::Punct && all_[j].text == "(";
    }
    return false;
  }

  bool in_function() const {
    for (const auto& s : scopes_)
      if (s.kind == ScopeKind::Function) return true;
    return false;
  }

  ScopeKind top() const { return scopes_.back().kind; }

  // Skips a balanced group starting at p (which must be an opener); returns
  // the position after the closer, or n() if unbalanced.
  std::size_t skip_group(std::size_t p) const {
    const std::string& open = tok(p).text;
    std::string close = open == "(" ? ")" : open == "[" ? "]" : open == "{" ? "}" : ">";
    int depth = 0;
    for (std::size_t q = p; q < n(); ++q) {
      if (tok(q).kind != TokenKind::Punct) continue;
      if (tok(q).text == open) ++depth;
      else if (tok(q).text == close && --depth == 0) return q + 1;
      if (open == "<" && (tok(q).text == ";" || tok(q).text == "{" || tok(q).text == "}")) return n();
    }
    return n();
  }

  // Template argument lists: `<` ... `>` with nesting.
  std::size_t skip_angles(std::size_t p) const {
    int depth = 0;
    for (std::size_t q = p; q < n(); ++q) {
      const auto& t = tok(q).text;
      if (tok(q).kind != TokenKind::Punct) continue;
      if (t == "<") ++depth;
      else if (t == ">" && --depth == 0) return q + 1;
      else if (t == "(" || t == "[") {
        q = skip_group(q) - 1;
      } else if (t == ";" || t == "{" || t == "}") {
        return n();
      }
    }
    return n();
  }

  // Tries to read a declaration at statement start p. Marks declared names.
  // Returns true when a declaration shape was recognized.
  bool declaration(std::size_t p) {
    if (p >= n()) return false;
    if (tok(p).kind == TokenKind::Keyword && is_statement_keyword(tok(p).text)) return false;
    if (tok(p).kind != TokenKind::Identifier && !(tok(p).kind == TokenKind::Keyword && is_type_keyword(tok(p).text)))
      return false;

    std::size_t q = p;
    int typeish = 0;
    std::optional<std::size_t> last_ident;
    while (q < n()) {
      const auto& t = tok(q);
      if (t.kind == TokenKind::Identifier) {
        ++typeish;
        last_ident = q;
        ++q;
      } else if (t.kind == TokenKind::Keyword && is_type_keyword(t.text)) {
        ++typeish;
        ++q;
      } else if (t.kind == TokenKind::Punct && (t.text == "*" || t.text == "&" || t.text == "::")) {
        if (typeish == 0 && t.text != "::") return false;
        ++q;
      } else if (t.kind == TokenKind::Punct && t.text == "<" && typeish > 0) {
        q = skip_angles(q);
      } else {
        break;
      }
    }
    if (q >= n() || typeish < 2 || !last_ident || *last_ident + 1 != q) return false;
    const auto& stop = tok(q).text;
    static const std::set<std::string_view> stops = {"=", ";", ",", "[", "(", ")", "{", ":"};
    if (tok(q).kind != TokenKind::Punct || !stops.contains(stop)) return false;
    // `a::b(...)` at file scope would be a qualified call or definition, not handled here.
    if (*last_ident > p && is(*last_ident - 1, "::")) return false;

    mark(*last_ident, Role::Definition);
    // Further declarators: `int a = 1, *b, c[4];`
    while (q < n()) {
      const auto& t = tok(q).text;
      if (tok(q).kind != TokenKind::Punct) {
        ++q;
        continue;
      }
      if (t == ";" || t == "{" || t == ")" || t == "}") break;
      if (t == "(" || t == "[") {
        q = skip_group(q);
        continue;
      }
      if (t == "=") {
        // Initializer runs to the next top-level ',' or ';'.
        ++q;
        while (q < n() && !is(q, ",") && !is(q, ";") && !is(q, "}") && !is(q, ")")) {
          if (is(q, "(") || is(q, "[") || is(q, "{")) q = skip_group(q);
          else ++q;
        }
        continue;
      }
      if (t == ",") {
        ++q;
        while (q < n() && (is(q, "*") || is(q, "&"))) ++q;
        if (ident(q) && q + 1 < n() && tok(q + 1).kind == TokenKind::Punct &&
            (is(q + 1, "=") || is(q + 1, ",") || is(q + 1, ";") || is(q + 1, "[")))
          mark(q, Role::Definition);
        continue;
      }
      ++q;
    }
    return true;
  }

  // Marks parameter names in the parameter list (lp, rp) exclusive.
  void parameters(std::size_t lp, std::size_t rp, const std::string& function, bool defining) {
    std::size_t chunk_begin = lp + 1;
    auto finish = [&](std::size_t b, std::size_t e) {
      if (b >= e) return;
      // Cut default arguments.
      std::size_t end = e;
      for (std::size_t q = b; q < e; ++q) {
        if (is(q, "=")) {
          end = q;
          break;
        }
        if (is(q, "(") || is(q, "[") || is(q, "<")) q = (is(q, "<") ? skip_angles(q) : skip_group(q)) - 1;
      }
      std::optional<std::size_t> name;
      // Function pointer parameter: `int (*cb)(int)`
      for (std::size_t q = b; q + 3 < end + 1 && q + 2 < end; ++q)
        if (is(q, "(") && is(q + 1, "*") && ident(q + 2) && is(q + 3, ")")) name = q + 2;
      if (!name) {
        int typeish = 0;
        for (std::size_t q = b; q < end; ++q)
          if (tok(q).kind == TokenKind::Identifier || tok(q).kind == TokenKind::Keyword) ++typeish;
        std::size_t last = end - 1;
        while (last > b && is(last, "]")) {
          // `char buf[]`, `int v[N]`
          std::size_t q = last;
          while (q > b && !is(q, "[")) --q;
          last = q - 1;
        }
        if (typeish >= 2 && ident(last)) name = last;
      }
      if (name) {
        mark(*name, defining ? Role::Definition : Role::Skip);
        if (defining) owner_[idx_[*name]] = function;
      }
    };
    int depth = 0;
    for (std::size_t q = lp + 1; q < rp; ++q) {
      if (is(q, "(") || is(q, "[") || is(q, "{")) ++depth;
      else if (is(q, ")") || is(q, "]") || is(q, "}")) --depth;
      else if (is(q, "<")) {
        q = skip_angles(q) - 1;
      } else if (depth == 0 && is(q, ",")) {
        finish(chunk_begin, q);
        chunk_begin = q + 1;
      }
    }
    finish(chunk_begin, rp);
  }

  // Function definition or prototype at non-function scope.
  bool function(std::size_t p) {
    std::size_t q = p;
    std::optional<std::size_t> name;
    while (q < n()) {
      if (is(q, ";") || is(q, "{") || is(q, "}") || is(q, "=")) return false;
      if (is(q, "<") && q > p) {
        std::size_t after = skip_angles(q);
        if (after >= n()) return false;
        q = after;
        continue;
      }
      if (is(q, "(")) {
        if (q > p && (ident(q - 1) || (tok(q - 1).kind == TokenKind::Punct && q >= p + 2 &&
                                       tok(q - 2).text == "operator"))) {
          name = q - 1;
          break;
        }
        // `__attribute__((x))` or `(*fp)` shapes: skip the group and keep looking.
        std::size_t after = skip_group(q);
        if (after >= n()) return false;
        q = after;
        continue;
      }
      ++q;
    }
    if (!name || !ident(*name)) return false;
    std::size_t lp = *name + 1;
    std::size_t rp = skip_group(lp);
    if (rp >= n() + 1 || rp == n()) return false;
    --rp;  // position of ')'
    std::size_t r = rp + 1;
    while (r < n()) {
      const auto& t = tok(r);
      if (t.kind == TokenKind::Keyword &&
          (t.text == "const" || t.text == "volatile" || t.text == "override" || t.text == "final" ||
           t.text == "noexcept" || t.text == "throw" || t.text == "__attribute__" || t.text == "requires")) {
        ++r;
        if (is(r, "(")) r = skip_group(r);
        continue;
      }
      if (is(r, "&")) {
        ++r;
        continue;
      }
      if (is(r, "->")) {
        ++r;
        while (r < n() && !is(r, "{") && !is(r, ";") && !is(r, "=")) {
          if (is(r, "<")) r = skip_angles(r);
          else if (is(r, "(")) r = skip_group(r);
          else ++r;
        }
        continue;
      }
      if (t.kind == TokenKind::Identifier && r + 1 < n() && is(r + 1, "(")) {
        // Trailing macro such as OVERRIDE(...) or __THROW
        r = skip_group(r + 1);
        continue;
      }
      if (t.kind == TokenKind::Identifier && (t.text.starts_with("__") || t.text == "OVERRIDE")) {
        ++r;
        continue;
      }
      break;
    }
    if (r >= n()) return false;
    const std::string fn = tok(*name).text;
    if (is(r, "{")) {
      mark(*name, Role::Definition);
      parameters(lp, rp, fn, true);
      pending_[r] = ScopeKind::Function;
      return true;
    }
    if (is(r, ":") && !is(r + 1, ":")) {
      // Constructor initializer list up to the body.
      std::size_t b = r + 1;
      while (b < n()) {
        if (ident(b) && b + 1 < n() && (is(b + 1, "(") || is(b + 1, "{"))) {
          b = skip_group(b + 1);
          continue;
        }
        if (is(b, "{")) break;
        if (is(b, ";")) return false;
        ++b;
      }
      if (b >= n()) return false;
      mark(*name, Role::Definition);
      parameters(lp, rp, fn, true);
      pending_[b] = ScopeKind::Function;
      return true;
    }
    if (is(r, "try") && is(r + 1, "{")) {
      mark(*name, Role::Definition);
      parameters(lp, rp, fn, true);
      pending_[r + 1] = ScopeKind::Function;
      return true;
    }
    if (is(r, ";") || is(r, "=") || is(r, ",")) {
      mark(*name, Role::Declaration);
      parameters(lp, rp, fn, false);
      return true;
    }
    return false;
  }

  // struct/class/union/enum heads. Returns true if recognized.
  bool aggregate(std::size_t p, bool typedef_tail) {
    std::size_t q = p;
    if (!(is(q, "struct") || is(q, "class") || is(q, "union") || is(q, "enum"))) return false;
    bool is_enum = is(q, "enum");
    ++q;
    if (is_enum && (is(q, "class") || is(q, "struct"))) ++q;
    while (q < n() && (is(q, "__attribute__") || is(q, "alignas") || is(q, "__declspec"))) {
      ++q;
      if (is(q, "(")) q = skip_group(q);
    }
    std::optional<std::size_t> name;
    while (ident(q) || is(q, "::")) {
      if (ident(q)) name = q;
      ++q;
    }
    if (is(q, "<")) q = skip_angles(q);
    if (is(q, "final")) ++q;
    if (is(q, ":") && !is_enum) {
      while (q < n() && !is(q, "{") && !is(q, ";")) {
        if (is(q, "<")) q = skip_angles(q);
        else ++q;
      }
    } else if (is(q, ":") && is_enum) {
      while (q < n() && !is(q, "{") && !is(q, ";")) ++q;
    }
    if (is(q, "{")) {
      if (name) mark(*name, Role::Definition);
      pending_[q] = is_enum ? ScopeKind::Enum : ScopeKind::Class;
      tails_.insert(q);
      (void)typedef_tail;
      return true;
    }
    if (is(q, ";") && name) {
      mark(*name, Role::Declaration);
      return true;
    }
    return false;
  }

  bool typedef_decl(std::size_t p) {
    if (!is(p, "typedef")) return false;
    if (aggregate(p + 1, true)) return true;
    std::size_t q = p + 1;
    std::optional<std::size_t> name;
    std::optional<std::size_t> last;
    while (q < n() && !is(q, ";") && !is(q, "{") && !is(q, "}")) {
      if (is(q, "(") && is(q + 1, "*") && ident(q + 2) && is(q + 3, ")")) name = q + 2;
      if (ident(q)) last = q;
      if (is(q, "(") && name) q = skip_group(q);
      else ++q;
    }
    if (!name) {
      // `typedef unsigned int u32;` - the last identifier before ';' or '['
      std::size_t e = q;
      std::size_t b = e;
      while (b > p && is(b - 1, "]")) {
        while (b > p && !is(b - 1, "[")) --b;
        --b;
      }
      if (b > p && ident(b - 1)) name = b - 1;
      else name = last;
    }
    if (name) mark(*name, Role::Definition);
    return true;
  }

  bool namespace_head(std::size_t p) {
    if (is(p, "namespace")) {
      std::size_t q = p + 1;
      std::optional<std::size_t> name;
      while (ident(q) || is(q, "::") || is(q, "inline")) {
        if (ident(q)) name = q;
        ++q;
      }
      if (is(q, "{")) {
        if (name) mark(*name, Role::Definition);
        pending_[q] = ScopeKind::Namespace;
        return true;
      }
      return false;
    }
    if (is(p, "extern") && p + 1 < n() && tok(p + 1).kind == TokenKind::String && is(p + 2, "{")) {
      pending_[p + 2] = ScopeKind::Namespace;
      return true;
    }
    return false;
  }

  void statement_start(std::size_t p) {
    if (p >= n()) return;
    // template <...> prefix
    while (is(p, "template") && is(p + 1, "<")) {
      std::size_t after = skip_angles(p + 1);
      if (after >= n()) return;
      p = after;
    }
    if (p >= n()) return;
    if (!in_function()) {
      if (namespace_head(p) || typedef_decl(p) || aggregate(p, false)) return;
      if (is(p, "using")) return;
      if (function(p)) return;
      declaration(p);
      return;
    }
    if (is(p, "typedef")) {
      typedef_decl(p);
      return;
    }
    if (aggregate(p, false)) return;
    declaration(p);
  }

  void walk() {
    scopes_.push_back({ScopeKind::File});
    int paren = 0;
    int bracket = 0;
    bool at_start = true;
    bool tail = false;  // declarators after an aggregate body
    std::vector<std::size_t> for_parens;  // paren depth of open for(...) headers
    for (std::size_t p = 0; p < n(); ++p) {
      const auto& t = tok(p);
      if (t.kind == TokenKind::Punct) {
        const auto& s = t.text;
        if (s == "{") {
          ScopeKind kind;
          if (auto it = pending_.find(p); it != pending_.end()) {
            kind = it->second;
          } else if (in_function()) {
            bool init = p > 0 && (is(p - 1, "=") || is(p - 1, ",") || is(p - 1, "(") || is(p - 1, "return") ||
                                  ident(p - 1) || is(p - 1, "]") || is(p - 1, ">"));
            // `) {` after if/while/for/switch/lambda is a block.
            kind = init && !is(p - 1, ")") ? ScopeKind::Init : ScopeKind::Block;
          } else {
            kind = (p > 0 && (is(p - 1, "=") || is(p - 1, ",") || is(p - 1, "("))) ? ScopeKind::Init
                                                                                   : ScopeKind::Block;
          }
          scopes_.push_back({kind, tails_.contains(p)});
          at_start = kind != ScopeKind::Init;
          tail = false;
          if (kind == ScopeKind::Enum) enum_expect_ = true;
          continue;
        }
        if (s == "}") {
          if (scopes_.size() <= 1) syntax_error(t.line, "unbalanced '}'");
          if (paren != 0 || bracket != 0) syntax_error(t.line, "unbalanced parentheses before '}'");
          tail = scopes_.back().declarator_tail;
          scopes_.pop_back();
          at_start = scopes_.back().kind != ScopeKind::Init;
          enum_expect_ = false;
          continue;
        }
        if (s == "(") {
          ++paren;
          if (p > 0 && is(p - 1, "for") && in_function()) {
            for_parens.push_back(static_cast<std::size_t>(paren));
            statement_start(p + 1);
          }
          continue;
        }
        if (s == ")") {
          if (--paren < 0) syntax_error(t.line, "unbalanced ')'");
          if (!for_parens.empty() && for_parens.back() > static_cast<std::size_t>(paren)) for_parens.pop_back();
          continue;
        }
        if (s == "[") {
          ++bracket;
          continue;
        }
        if (s == "]") {
          if (--bracket < 0) syntax_error(t.line, "unbalanced ']'");
          continue;
        }
        if (s == ";") {
          if (paren == 0) {
            at_start = true;
            tail = false;
          }
          continue;
        }
        if (s == ":" && p > 0 && (is(p - 1, "public") || is(p - 1, "private") || is(p - 1, "protected"))) {
          at_start = true;
          continue;
        }
        if (s == "," && top() == ScopeKind::Enum && paren == 0) {
          enum_expect_ = true;
          continue;
        }
        continue;
      }
      if (tail && t.kind == TokenKind::Identifier && paren == 0) {
        mark(p, Role::Definition);
        continue;
      }
      if (top() == ScopeKind::Enum && enum_expect_ && t.kind == TokenKind::Identifier) {
        mark(p, Role::Definition);
        enum_expect_ = false;
        at_start = false;
        continue;
      }
      if (at_start && paren == 0 && top() != ScopeKind::Init && top() != ScopeKind::Enum) {
        at_start = false;
        statement_start(p);
      }
    }
    if (paren != 0) syntax_error(tok(n() - 1).line, "unbalanced '(' at end of file");
    if (bracket != 0) syntax_error(tok(n() - 1).line, "unbalanced '[' at end of file");
    if (scopes_.size() != 1) syntax_error(n() ? tok(n() - 1).line : 0, "unbalanced '{' at end of file");
  }

  const std::vector<Token>& all_;
  std::vector<std::size_t> idx_;
  std::vector<Role> roles_;
  std::vector<std::string> owner_;
  std::vector<Scope> scopes_;
  std::map<std::size_t, ScopeKind> pending_;
  std::set<std::size_t> tails_;
  bool enum_expect_ = false;
};

}  // namespace

bool is_keyword(std::string_view word) { return keywords().contains(word); }

std::vector<Token> tokenize(std::string_view source) { return Lexer(source).run(); }

std::vector<ScannedSite> scan(std::string_view source) {
  auto tokens = tokenize(source);
  return Structure(tokens).run();
}

std::vector<ScannedSite> scan_lexical(std::string_view source) {
  std::set<ScannedSite> sites;
  int line = 1;
  std::size_t i = 0;
  while (i < source.size()) {
    char c = source[i];
    if (c == '\n') {
      ++line;
      ++i;
      continue;
    }
    if (ident_start(c) && (i == 0 || !ident_char(source[i - 1]))) {
      std::size_t b = i;
      while (i < source.size() && ident_char(source[i])) ++i;
      ScannedSite s;
      s.symbol = std::string(source.substr(b, i - b));
      s.line = line;
      sites.insert(std::move(s));
      continue;
    }
    ++i;
  }
  return {sites.begin(), sites.end()};
}

}  // namespace cxx
}  // namespace patchmem
