#pragma once

// Reference implementations written directly from the contracts, without
// calling into the engine code they check.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace oracle {

inline std::vector<std::string> words(const std::string& s) {
  static const std::regex word("[A-Za-z0-9_]+");
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), word); it != std::sregex_iterator(); ++it) {
    std::string w = it->str();
    for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.push_back(w);
  }
  return out;
}

inline std::uint64_t fnv(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string strip(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n\f\v");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(b, e - b + 1);
}

// Signed feature hashing, L2-normalized.
inline std::vector<double> embed(const std::string& text, std::size_t dim) {
  auto toks = words(text);
  if (toks.empty()) toks.push_back(strip(text).empty() ? text : strip(text));
  std::vector<double> v(dim, 0.0);
  for (const auto& t : toks) {
    auto h = fnv(t);
    v[h % dim] += (h >> 63) ? -1.0 : 1.0;
  }
  double n = 0.0;
  for (double c : v) n += c * c;
  n = std::sqrt(n);
  if (n > 0.0)
    for (double& c : v) c /= n;
  return v;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Plain dot product; equals the cosine for unit vectors.
inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
  return static_cast<double>(s);
}

using Stamp = std::pair<std::int64_t, std::int64_t>;

inline std::optional<Stamp> cve_stamp(const std::string& id) {
  static const std::regex re("(^|[^A-Za-z])cve-([0-9]{4})-([0-9]{1,18})", std::regex::icase);
  std::smatch m;
  if (!std::regex_search(id, m, re)) return std::nullopt;
  return Stamp{std::stoll(m[2].str()), std::stoll(m[3].str())};
}

struct Row {
  std::string project, cwe, language, instance_id, description, fail_patch;
  Stamp stamp;
};

struct Hit {
  std::string instance_id;
  int priority = 1;
  double similarity = 0.0;
  bool operator==(const Hit&) const = default;
};

// filter -> score -> sort -> truncate
inline std::vector<Hit> retrieve(const std::vector<Row>& rows, const Row& q, int k_min, int top_n, std::size_t dim,
                                 const std::optional<std::string>& override_text, bool by_fail_patch) {
  Stamp q_stamp = cve_stamp(q.instance_id).value_or(Stamp{1'000'000, std::numeric_limits<std::int64_t>::max()});
  struct C {
    const Row* r;
    int prio;
  };
  std::vector<C> p1, p2;
  for (const auto& r : rows) {
    if (r.instance_id == q.instance_id || r.cwe != q.cwe || r.language != q.language) continue;
    if (r.project == q.project) {
      if (r.stamp < q_stamp) p1.push_back({&r, 1});
    } else {
      p2.push_back({&r, 2});
    }
  }
  std::vector<C> pool = p1;
  if (static_cast<int>(p1.size()) < k_min) pool.insert(pool.end(), p2.begin(), p2.end());
  auto qv = embed(override_text.value_or(q.description), dim);
  std::vector<std::tuple<int, double, Stamp, std::string>> keyed;
  for (const auto& c : pool) {
    const auto& text = by_fail_patch ? c.r->fail_patch : c.r->description;
    keyed.emplace_back(c.prio, cosine(qv, embed(text, dim)), c.r->stamp, c.r->instance_id);
  }
  // Selection by repeated minimum, independent of std::sort.
  auto before = [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) > std::get<1>(b);
    if (std::get<2>(a) != std::get<2>(b)) return std::get<2>(a) > std::get<2>(b);
    return std::get<3>(a) < std::get<3>(b);
  };
  std::vector<Hit> out;
  std::vector<bool> used(keyed.size(), false);
  while (static_cast<int>(out.size()) < top_n) {
    int best = -1;
    for (std::size_t i = 0; i < keyed.size(); ++i)
      if (!used[i] && (best < 0 || before(keyed[i], keyed[best]))) best = static_cast<int>(i);
    if (best < 0) break;
    used[best] = true;
    out.push_back({std::get<3>(keyed[best]), std::get<0>(keyed[best]), std::get<1>(keyed[best])});
  }
  return out;
}

// --- iter_grep ---------------------------------------------------------------

struct Site {
  std::string file;
  int line = 0;
  bool def = false;
  std::string symbol;
  bool call = false;
  std::string param_of;
};

struct Frame {
  std::string file;
  int line = 0;
};

struct Ranked {
  std::string file;
  int line = 0;
  bool operator==(const Ranked&) const = default;
};

inline std::vector<Ranked> iter_grep(const std::vector<Site>& sites, const std::set<std::string>& files,
                                     const std::string& symbol, const std::vector<Frame>& frames, int k) {
  std::set<std::string> owners;
  for (const auto& s : sites)
    if (s.symbol == symbol && !s.param_of.empty()) owners.insert(s.param_of);
  // (file, line) -> is any site there a definition
  std::map<std::pair<std::string, int>, bool> cand;
  for (const auto& s : sites) {
    bool take = s.symbol == symbol || (owners.count(s.symbol) && !s.def && s.call);
    if (!take) continue;
    bool def = s.symbol == symbol && s.def;
    auto& slot = cand[{s.file, s.line}];
    slot = slot || def;
  }
  auto frame_of = [&](const std::string& file) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < frames.size(); ++i) {
      // the longest index path that the frame path names
      std::string best;
      for (const auto& f : files) {
        const auto& ff = frames[i].file;
        bool m = ff == f || (ff.size() > f.size() && ff.compare(ff.size() - f.size() - 1, std::string::npos, "/" + f) == 0) ||
                 (f.size() > ff.size() && f.compare(f.size() - ff.size() - 1, std::string::npos, "/" + ff) == 0);
        if (m && f.size() > best.size()) best = f;
      }
      if (best == file) return i;
    }
    return std::nullopt;
  };
  using Key = std::tuple<int, std::size_t, int, int, std::string, int>;
  std::vector<Key> keys;
  for (const auto& [fl, def] : cand) {
    auto fi = frame_of(fl.first);
    if (fi)
      keys.emplace_back(0, *fi, std::abs(fl.second - frames[*fi].line), def ? 0 : 1, fl.first, fl.second);
    else
      keys.emplace_back(1, 0, 0, def ? 0 : 1, fl.first, fl.second);
  }
  // rank = number of strictly smaller keys (keys are unique per (file, line))
  std::vector<Ranked> out(std::min<std::size_t>(keys.size(), static_cast<std::size_t>(k)));
  for (const auto& a : keys) {
    std::size_t r = 0;
    for (const auto& b : keys) r += b < a;
    if (r < out.size()) out[r] = {std::get<4>(a), std::get<5>(a)};
  }
  return out;
}

}  // namespace oracle
