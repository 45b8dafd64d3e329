#include "patchmem/config.hpp"

#include <cctype>
#include <charconv>
#include <functional>

#include "patchmem/error.hpp"
#include "patchmem/text.hpp"

namespace patchmem {
namespace {

struct Value {
  std::string text;
  bool quoted = false;
  int line = 0;
};

[[noreturn]] void fail(int line, const std::string& msg) {
  throw Error(ErrorCode::ConfigError, "config line " + std::to_string(line) + ": " + msg);
}

std::string unquote(std::string_view s, int line) {
  std::string out;
  for (std::size_t i = 1; i < s.size(); ++i) {
    char c = s[i];
    if (c == '"') {
      auto rest = text::trim(s.substr(i + 1));
      if (!rest.empty() && rest[0] != '#') fail(line, "unexpected text after string");
      return out;
    }
    if (c == '\\' && i + 1 < s.size()) {
      char n = s[++i];
      switch (n) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: fail(line, std::string("unknown escape \\") + n);
      }
      continue;
    }
    out += c;
  }
  fail(line, "unterminated string");
}

bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.') return false;
  return true;
}

std::map<std::string, std::map<std::string, Value>> parse_sections(std::string_view src) {
  std::map<std::string, std::map<std::string, Value>> out;
  std::string section;
  int lineno = 0;
  for (auto raw : text::split_lines(src)) {
    ++lineno;
    auto line = text::trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line[0] == '[') {
      if (line.back() != ']') fail(lineno, "malformed section header");
      section = std::string(text::trim(line.substr(1, line.size() - 2)));
      if (!valid_key(section)) fail(lineno, "bad section name");
      out[section];
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(lineno, "expected key = value");
    if (section.empty()) fail(lineno, "key outside any section");
    auto key_part = text::trim(line.substr(0, eq));
    std::string key = key_part.size() >= 2 && key_part.front() == '"' ? unquote(key_part, lineno)
                                                                      : std::string(key_part);
    if (key_part.front() != '"' && !valid_key(key)) fail(lineno, "bad key '" + key + "'");
    auto vpart = text::trim(line.substr(eq + 1));
    Value v;
    v.line = lineno;
    if (!vpart.empty() && vpart[0] == '"') {
      v.text = unquote(vpart, lineno);
      v.quoted = true;
    } else {
      auto hash = vpart.starts_with("#") ? 0 : vpart.find(" #");
      v.text = std::string(text::trim(vpart.substr(0, hash)));
    }
    if (out[section].contains(key)) fail(lineno, "duplicate key '" + key + "'");
    out[section][key] = std::move(v);
  }
  return out;
}

template <typename T>
T number(const Value& v, const std::string& key) {
  T out{};
  auto [p, ec] = std::from_chars(v.text.data(), v.text.data() + v.text.size(), out);
  if (ec != std::errc{} || p != v.text.data() + v.text.size()) fail(v.line, key + " must be a number");
  return out;
}

double real(const Value& v, const std::string& key) {
  try {
    std::size_t used = 0;
    double d = std::stod(v.text, &used);
    if (used != v.text.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    fail(v.line, key + " must be a number");
  }
}

bool boolean(const Value& v, const std::string& key) {
  if (v.text == "true") return true;
  if (v.text == "false") return false;
  fail(v.line, key + " must be true or false");
}

}  // namespace

void EngineConfig::validate() const {
  gateway.validate();
  if (embedder != "hashing" && embedder != "remote")
    throw Error(ErrorCode::ConfigError, "retrieval.embedder must be 'hashing' or 'remote'");
  if (embedding_dim == 0) throw Error(ErrorCode::ConfigError, "retrieval.dim must be positive");
  if (k_min < 1 || top_n < k_min) throw Error(ErrorCode::ConfigError, "retrieval needs k_min >= 1 and top_n >= k_min");
  if (prune_window < 0) throw Error(ErrorCode::ConfigError, "retrieval.prune_window must be >= 0");
  if (command_timeout.count() <= 0 || total_budget.count() <= 0)
    throw Error(ErrorCode::ConfigError, "oracle timeouts must be positive");
  if (max_failed_attempts < 1) throw Error(ErrorCode::ConfigError, "limits.max_failed_attempts must be >= 1");
  if (bash_timeout.count() <= 0) throw Error(ErrorCode::ConfigError, "limits.bash_timeout must be positive");
  if (iter_grep_k < 1 || search_limit < 1 || context_radius < 0)
    throw Error(ErrorCode::ConfigError, "limits: iter_grep_k and search_limit >= 1, context_radius >= 0");
  if (insight != "template" && insight != "model")
    throw Error(ErrorCode::ConfigError, "limits.insight must be 'template' or 'model'");
  try {
    (void)compression_budget();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
}

double EngineConfig::cost_usd(const Usage& usage) const {
  auto it = pricing.find(gateway.model_name);
  if (it == pricing.end()) return 0.0;
  return static_cast<double>(usage.prompt_tokens) / 1e6 * it->second.input_per_mtok +
         static_cast<double>(usage.completion_tokens) / 1e6 * it->second.output_per_mtok;
}

EngineConfig parse_config(std::string_view src, const std::filesystem::path& base_dir) {
  EngineConfig c;
  auto sections = parse_sections(src);

  using Setter = std::function<void(const Value&, const std::string&)>;
  const std::map<std::string, std::map<std::string, Setter>> known{
      {"gateway",
       {{"backend", [&](const Value& v, auto&) { c.gateway.backend = v.text; }},
        {"endpoint", [&](const Value& v, auto&) { c.gateway.endpoint = v.text; }},
        {"chat_path", [&](const Value& v, auto&) { c.gateway.chat_path = v.text; }},
        {"model_name", [&](const Value& v, auto&) { c.gateway.model_name = v.text; }},
        {"temperature", [&](const Value& v, auto& k) { c.gateway.temperature = real(v, k); }},
        {"max_turns", [&](const Value& v, auto& k) { c.gateway.max_turns = number<int>(v, k); }},
        {"api_key_env", [&](const Value& v, auto&) { c.gateway.api_key_env = v.text; }},
        {"transcript",
         [&](const Value& v, auto&) {
           std::filesystem::path p(v.text);
           c.gateway.transcript = (!p.empty() && p.is_relative() && !base_dir.empty() ? base_dir / p : p).string();
         }},
        {"prompt_budget", [&](const Value& v, auto& k) { c.gateway.prompt_budget = number<std::size_t>(v, k); }},
        {"request_timeout",
         [&](const Value& v, auto& k) { c.gateway.request_timeout = std::chrono::seconds(number<int>(v, k)); }},
        {"retries", [&](const Value& v, auto& k) { c.gateway.retries = number<int>(v, k); }}}},
      {"retrieval",
       {{"embedder", [&](const Value& v, auto&) { c.embedder = v.text; }},
        {"dim", [&](const Value& v, auto& k) { c.embedding_dim = number<std::size_t>(v, k); }},
        {"embedding_endpoint", [&](const Value& v, auto&) { c.remote_embedder.endpoint = v.text; }},
        {"embedding_path", [&](const Value& v, auto&) { c.remote_embedder.path = v.text; }},
        {"embedding_model", [&](const Value& v, auto&) { c.remote_embedder.model = v.text; }},
        {"embedding_api_key_env", [&](const Value& v, auto&) { c.remote_embedder.api_key_env = v.text; }},
        {"k_min", [&](const Value& v, auto& k) { c.k_min = number<int>(v, k); }},
        {"top_n", [&](const Value& v, auto& k) { c.top_n = number<int>(v, k); }},
        {"prune_window", [&](const Value& v, auto& k) { c.prune_window = number<std::int64_t>(v, k); }}}},
      {"oracle",
       {{"command_timeout",
         [&](const Value& v, auto& k) { c.command_timeout = std::chrono::seconds(number<int>(v, k)); }},
        {"total_budget", [&](const Value& v, auto& k) { c.total_budget = std::chrono::seconds(number<int>(v, k)); }},
        {"log_cap", [&](const Value& v, auto& k) { c.log_cap = number<std::size_t>(v, k); }}}},
      {"limits",
       {{"max_failed_attempts", [&](const Value& v, auto& k) { c.max_failed_attempts = number<int>(v, k); }},
        {"bash_timeout", [&](const Value& v, auto& k) { c.bash_timeout = std::chrono::seconds(number<int>(v, k)); }},
        {"output_cap", [&](const Value& v, auto& k) { c.output_cap = number<std::size_t>(v, k); }},
        {"compress_budget", [&](const Value& v, auto& k) { c.compress_budget = number<std::size_t>(v, k); }},
        {"context_radius", [&](const Value& v, auto& k) { c.context_radius = number<int>(v, k); }},
        {"iter_grep_k", [&](const Value& v, auto& k) { c.iter_grep_k = number<int>(v, k); }},
        {"search_limit", [&](const Value& v, auto& k) { c.search_limit = number<int>(v, k); }},
        {"search_per_file", [&](const Value& v, auto& k) { c.search_per_file = boolean(v, k); }},
        {"insight", [&](const Value& v, auto&) { c.insight = v.text; }}}},
  };

  for (const auto& [section, entries] : sections) {
    if (section == "pricing") {
      for (const auto& [model, v] : entries) {
        auto comma = v.text.find(',');
        if (comma == std::string::npos) fail(v.line, "pricing entries are \"input,output\" USD per million tokens");
        Value in{std::string(text::trim(std::string_view(v.text).substr(0, comma))), false, v.line};
        Value out{std::string(text::trim(std::string_view(v.text).substr(comma + 1))), false, v.line};
        c.pricing[model] = Price{real(in, model), real(out, model)};
      }
      continue;
    }
    if (section == "ingest") {
      for (const auto& [col, v] : entries) c.ingest_columns[col] = v.text;
      continue;
    }
    auto sec = known.find(section);
    if (sec == known.end())
      throw Error(ErrorCode::ConfigError, "unknown config section [" + section + "]");
    for (const auto& [key, v] : entries) {
      auto setter = sec->second.find(key);
      if (setter == sec->second.end()) fail(v.line, "unknown key '" + key + "' in [" + section + "]");
      setter->second(v, section + "." + key);
    }
  }
  c.validate();
  return c;
}

EngineConfig load_config(const std::filesystem::path& path) {
  std::string content;
  try {
    content = text::read_file(path.string());
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, "cannot read config " + path.string() + ": " + e.what());
  }
  return parse_config(content, path.parent_path());
}

}  // namespace patchmem

namespace patchmem {

std::shared_ptr<Embedder> make_embedder(const EngineConfig& config) {
  std::shared_ptr<Embedder> inner;
  if (config.embedder == "remote")
    inner = std::make_shared<RemoteEmbedder>(config.remote_embedder);
  else
    inner = std::make_shared<HashingEmbedder>(config.embedding_dim);
  return std::make_shared<CachingEmbedder>(std::move(inner));
}

}  // namespace patchmem
