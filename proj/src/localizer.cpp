#include "patchmem/localizer.hpp"

#include <algorithm>
#include <cstdint>
#include <set>
#include <tuple>

#include "patchmem/error.hpp"
#include "patchmem/text.hpp"

namespace fs = std::filesystem;

namespace patchmem {

GrammarRegistry GrammarRegistry::with_defaults() {
  GrammarRegistry r;
  r.add(Grammar{"c/c++",
                {".c", ".h", ".cc", ".cpp", ".cxx", ".c++", ".hpp", ".hh", ".hxx", ".h++", ".inl", ".ipp", ".tcc"},
                [](std::string_view src) { return cxx::scan(src); }});
  return r;
}

void GrammarRegistry::add(Grammar grammar) { grammars_.push_back(std::move(grammar)); }

const Grammar* GrammarRegistry::for_path(const fs::path& path) const {
  auto ext = text::to_lower(path.extension().string());
  for (const auto& g : grammars_)
    if (std::find(g.extensions.begin(), g.extensions.end(), ext) != g.extensions.end()) return &g;
  return nullptr;
}

std::vector<SymbolSite> SymbolIndex::sites_for(std::string_view symbol) const {
  auto it = by_symbol_.find(symbol);
  if (it == by_symbol_.end()) return {};
  return it->second;
}

std::size_t SymbolIndex::site_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : by_symbol_) n += v.size();
  return n;
}

int SymbolIndex::line_count(std::string_view file) const {
  auto it = line_counts_.find(file);
  return it == line_counts_.end() ? 0 : it->second;
}

std::vector<std::string> SymbolIndex::files() const {
  std::vector<std::string> out;
  for (const auto& [f, _] : line_counts_) out.push_back(f);
  return out;
}

void SymbolIndex::add_file(const std::string& file, int line_count, const std::vector<SymbolSite>& sites) {
  line_counts_[file] = line_count;
  auto less = [](const SymbolSite& a, const SymbolSite& b) {
    return std::tie(a.file, a.line, a.kind, a.is_call, a.param_of) <
           std::tie(b.file, b.line, b.kind, b.is_call, b.param_of);
  };
  std::map<std::string, std::size_t> first_new;
  for (const auto& s : sites) {
    auto& v = by_symbol_[s.symbol];
    first_new.try_emplace(s.symbol, v.size());
    v.push_back(s);
  }
  for (const auto& [sym, begin] : first_new) {
    auto& v = by_symbol_.find(sym)->second;
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(begin);
    std::sort(mid, v.end(), less);
    if (mid != v.begin() && less(*mid, *(mid - 1))) std::inplace_merge(v.begin(), mid, v.end(), less);
  }
}

void SymbolIndex::add_diagnostic(std::string file, std::string reason) {
  diagnostics_.emplace_back(std::move(file), std::move(reason));
}

namespace {

int count_lines(std::string_view content) {
  if (content.empty()) return 0;
  int n = static_cast<int>(std::count(content.begin(), content.end(), '\n'));
  if (content.back() != '\n') ++n;
  return n;
}

struct FileResult {
  std::string rel;
  int lines = 0;
  std::vector<SymbolSite> sites;
  std::string error;
  bool skipped = false;
};

FileResult index_one(const fs::path& root, const std::string& rel, const IndexOptions& options,
                     const GrammarRegistry& grammars) {
  FileResult r;
  r.rel = rel;
  try {
    auto full = root / rel;
    std::error_code ec;
    auto size = fs::file_size(full, ec);
    if (ec || size > options.max_file_bytes) {
      r.skipped = true;
      return r;
    }
    auto content = text::read_file(full.string());
    if (text::looks_binary(content)) {
      r.skipped = true;
      return r;
    }
    r.lines = count_lines(content);
    r.sites = scan_file(rel, content, grammars);
  } catch (const std::exception& e) {
    r.error = e.what();
    r.sites.clear();
  }
  return r;
}

}  // namespace

std::vector<SymbolSite> scan_file(const std::string& rel_path, std::string_view content,
                                  const GrammarRegistry& grammars) {
  const Grammar* g = grammars.for_path(rel_path);
  auto scanned = g != nullptr ? g->scan(content) : cxx::scan_lexical(content);
  std::vector<SymbolSite> out;
  out.reserve(scanned.size());
  for (auto& s : scanned) {
    SymbolSite site;
    site.file = rel_path;
    site.line = s.line;
    site.kind = s.kind;
    site.symbol = std::move(s.symbol);
    site.is_call = s.is_call;
    site.param_of = std::move(s.param_of);
    out.push_back(std::move(site));
  }
  return out;
}

SymbolIndex index_repository(const fs::path& root, const IndexOptions& options) {
  std::error_code ec;
  if (!fs::is_directory(root, ec))
    throw Error(ErrorCode::IndexFailure, "repository root is not a readable directory: " + root.string());
  const auto defaults = GrammarRegistry::with_defaults();
  const GrammarRegistry& grammars = options.grammars != nullptr ? *options.grammars : defaults;

  std::vector<std::string> files;
  fs::recursive_directory_iterator it(root, fs::directory_options::skip_permission_denied, ec);
  if (ec) throw Error(ErrorCode::IndexFailure, "cannot read " + root.string() + ": " + ec.message());
  for (; it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) break;
    const auto& entry = *it;
    auto name = entry.path().filename().string();
    if (entry.is_directory() && (name == ".git" || name == ".hg" || name == ".svn")) {
      it.disable_recursion_pending();
      continue;
    }
    if (!entry.is_regular_file()) continue;
    files.push_back(fs::relative(entry.path(), root).generic_string());
  }
  std::sort(files.begin(), files.end());

  std::vector<FileResult> results(files.size());
  const auto n = static_cast<std::int64_t>(files.size());
  if (options.parallel) {
#pragma omp parallel for schedule(dynamic, 4)
    for (std::int64_t i = 0; i < n; ++i) results[i] = index_one(root, files[i], options, grammars);
  } else {
    for (std::int64_t i = 0; i < n; ++i) results[i] = index_one(root, files[i], options, grammars);
  }

  SymbolIndex index;
  for (auto& r : results) {
    if (r.skipped) continue;
    if (!r.error.empty()) {
      index.add_diagnostic(r.rel, r.error);
      continue;
    }
    index.add_file(r.rel, r.lines, r.sites);
  }
  return index;
}

std::map<std::string, std::size_t> stack_files(const SymbolIndex& index, const CrashReport& report) {
  std::map<std::string, std::size_t> out;
  const auto files = index.files();
  for (std::size_t i = 0; i < report.frames.size(); ++i) {
    const auto& frame_file = report.frames[i].file;
    std::string best;
    for (const auto& f : files) {
      bool match = frame_file == f || text::ends_with(frame_file, "/" + f) || text::ends_with(f, "/" + frame_file);
      if (match && f.size() > best.size()) best = f;
    }
    if (!best.empty()) out.emplace(best, i);  // keeps the innermost frame
  }
  return out;
}

namespace {

struct Candidate {
  SymbolSite site;
  std::string via;  // function whose call site binds the symbol
};

}  // namespace

std::vector<LocalizationObject> iter_grep(const SymbolIndex& index, std::string_view symbol,
                                          const std::optional<CrashReport>& report, int k,
                                          int context_radius) {
  if (symbol.empty()) throw Error(ErrorCode::BadArguments, "iter_grep needs a symbol");
  if (k < 1) throw Error(ErrorCode::BadArguments, "iter_grep k must be >= 1");

  // One candidate per (file, line): a definition wins over a use there.
  std::map<std::pair<std::string, int>, Candidate> by_line;
  auto offer = [&](const SymbolSite& s, const std::string& via) {
    auto key = std::make_pair(s.file, s.line);
    auto it = by_line.find(key);
    if (it == by_line.end()) {
      by_line.emplace(key, Candidate{s, via});
    } else if (s.kind == SiteKind::Definition && it->second.site.kind != SiteKind::Definition) {
      it->second = Candidate{s, via};
    }
  };
  std::set<std::string> owners;
  for (const auto& s : index.sites_for(symbol)) {
    offer(s, "");
    if (!s.param_of.empty()) owners.insert(s.param_of);
  }
  // Callers bind arguments to the parameter, so their call sites are uses.
  for (const auto& fn : owners)
    for (const auto& s : index.sites_for(fn))
      if (s.kind == SiteKind::Use && s.is_call) offer(s, fn);

  if (by_line.empty()) throw Error(ErrorCode::NoMatch, "no sites for symbol '" + std::string(symbol) + "'");

  std::map<std::string, std::size_t> in_stack;
  if (report) in_stack = stack_files(index, *report);

  struct Scored {
    std::tuple<int, std::size_t, int, int, std::string, int> key;
    const Candidate* cand;
  };
  std::vector<Scored> scored;
  for (const auto& [_, c] : by_line) {
    int kind_rank = c.site.kind == SiteKind::Definition ? 0 : 1;
    auto it = in_stack.find(c.site.file);
    if (it != in_stack.end()) {
      int frame_line = report->frames[it->second].line;
      scored.push_back({{0, it->second, std::abs(c.site.line - frame_line), kind_rank, c.site.file, c.site.line}, &c});
    } else {
      scored.push_back({{1, 0, 0, kind_rank, c.site.file, c.site.line}, &c});
    }
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) { return a.key < b.key; });
  if (scored.size() > static_cast<std::size_t>(k)) scored.resize(static_cast<std::size_t>(k));

  std::vector<LocalizationObject> out;
  int rank = 0;
  for (const auto& s : scored) {
    const auto& site = s.cand->site;
    LocalizationObject loc;
    loc.file = site.file;
    loc.line = site.line;
    const int total = std::max(index.line_count(site.file), site.line);
    loc.line_start = std::max(1, site.line - context_radius);
    loc.line_end = std::min(total, site.line + context_radius);
    loc.rank = ++rank;

    std::string what;
    if (!s.cand->via.empty()) {
      what = "caller site: " + s.cand->via + "(...) binds " + std::string(symbol);
    } else if (site.kind == SiteKind::Definition) {
      what = site.param_of.empty() ? "definition" : "parameter definition in " + site.param_of + "()";
    } else {
      what = site.is_call ? "call" : "use";
    }
    if (std::get<0>(s.key) == 0) {
      auto frame_idx = std::get<1>(s.key);
      const auto& fr = report->frames[frame_idx];
      if (std::get<2>(s.key) == 0)
        what = (frame_idx == 0 ? "crash site" : "stack frame") + std::string(" #") + std::to_string(frame_idx) +
               " in " + fr.function + "; " + what;
      else
        what += "; " + std::to_string(std::get<2>(s.key)) + " lines from frame #" + std::to_string(frame_idx) +
                " (" + fr.function + ")";
    } else if (report) {
      what += "; outside the crash stack";
    }
    loc.reason = std::move(what);
    out.push_back(std::move(loc));
  }
  return out;
}

}  // namespace patchmem
