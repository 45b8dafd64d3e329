// patchmem: memory-guided vulnerability repair from the command line.
//
// Exit codes: 0 success, 1 repair exhausted, 2 configuration or input error.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <iostream>
#include <limits>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "patchmem/agent.hpp"
#include "patchmem/config.hpp"
#include "patchmem/corpus.hpp"
#include "patchmem/error.hpp"
#include "patchmem/localizer.hpp"
#include "patchmem/memory.hpp"
#include "patchmem/oracle.hpp"
#include "patchmem/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace patchmem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitExhausted = 1;
constexpr int kExitConfig = 2;

struct Globals {
  std::string config_path;
  std::string memory_path = "patchmem-memory.jsonl";
  bool json = false;
  int jobs = 1;
};

EngineConfig load(const Globals& g) { return g.config_path.empty() ? EngineConfig{} : load_config(g.config_path); }

void emit(const Globals& g, const json& j, const std::string& human) {
  if (g.json)
    std::cout << j.dump(2) << "\n";
  else
    std::cout << human;
}

int run_ingest(const Globals& g, const std::string& corpus) {
  auto config = load(g);
  auto store = MemoryStore::load(g.memory_path);
  auto embedder = make_embedder(config);
  auto counts = ingest_corpus(corpus, store, *embedder, config.ingest_columns);
  store.save(g.memory_path);
  for (const auto& p : counts.problems) std::cerr << "rejected: " << p << "\n";
  emit(g,
       {{"inserted", counts.inserted}, {"merged", counts.merged}, {"rejected", counts.rejected}},
       "inserted " + std::to_string(counts.inserted) + ", merged " + std::to_string(counts.merged) + ", rejected " +
           std::to_string(counts.rejected) + "\n");
  return kExitOk;
}

bool is_config_error(ErrorCode c) {
  switch (c) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidOracle:
    case ErrorCode::BuildToolMissing:
    case ErrorCode::CorruptMemoryFile:
    case ErrorCode::BadArguments:
    case ErrorCode::InvariantViolation:
      return true;
    default:
      return false;
  }
}

struct RepairOptions {
  std::string task_file;
  std::string tasks_dir;
  std::string out_dir = "patchmem-out";
  std::string scratch;
  std::string transcript;
};

int run_repair(const Globals& g, const RepairOptions& o) {
  auto config = load(g);
  SharedMemoryStore store(MemoryStore::load(g.memory_path));
  auto embedder = make_embedder(config);

  std::vector<fs::path> task_files;
  if (!o.task_file.empty()) task_files.push_back(o.task_file);
  if (!o.tasks_dir.empty()) {
    std::error_code ec;
    if (!fs::is_directory(o.tasks_dir, ec)) throw Error(ErrorCode::ConfigError, "not a directory: " + o.tasks_dir);
    for (const auto& entry : fs::directory_iterator(o.tasks_dir))
      if (entry.is_directory() && fs::exists(entry.path() / "task.json")) task_files.push_back(entry.path() / "task.json");
    std::sort(task_files.begin(), task_files.end());
  }
  if (task_files.empty()) throw Error(ErrorCode::ConfigError, "no task given");

  std::optional<fs::path> scratch;
  if (!o.scratch.empty()) scratch = fs::absolute(o.scratch);

  struct Result {
    int code = kExitConfig;
    json summary;
  };
  std::vector<Result> results(task_files.size());
  std::atomic<std::size_t> next{0};
  std::mutex io;
  auto worker = [&] {
    for (std::size_t i = next++; i < task_files.size(); i = next++) {
      auto& r = results[i];
      try {
        auto task = RepairTask::load(task_files[i]);
        if (!o.transcript.empty()) task.transcript = fs::path(o.transcript);
        const auto out = task_files.size() == 1 && o.tasks_dir.empty() ? fs::path(o.out_dir)
                                                                         : fs::path(o.out_dir) / task.keys.instance_id;
        auto run = run_task(task, config, store, *embedder, out, scratch);
        r.code = run.report.outcome == Outcome::Success ? kExitOk : kExitExhausted;
        r.summary = {{"instance_id", task.keys.instance_id},
                     {"outcome", std::string(to_string(run.report.outcome))},
                     {"failed_attempts", run.report.failed_attempts},
                     {"reason", run.report.reason},
                     {"report", run.report_path.string()},
                     {"trajectory", run.trajectory_path.string()}};
      } catch (const Error& e) {
        r.code = is_config_error(e.code()) ? kExitConfig : kExitExhausted;
        r.summary = {{"task", task_files[i].string()}, {"error", std::string(to_string(e.code()))}, {"message", e.what()}};
        std::lock_guard lock(io);
        std::cerr << task_files[i].string() << ": " << to_string(e.code()) << ": " << e.what() << "\n";
      } catch (const std::exception& e) {
        r.code = kExitExhausted;
        r.summary = {{"task", task_files[i].string()}, {"error", "internal"}, {"message", e.what()}};
        std::lock_guard lock(io);
        std::cerr << task_files[i].string() << ": " << e.what() << "\n";
      }
    }
  };
  const int jobs = std::clamp(g.jobs, 1, static_cast<int>(task_files.size()));
  {
    std::vector<std::jthread> pool;
    for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
  }
  store.snapshot().save(g.memory_path);

  int code = kExitOk;
  json all = json::array();
  std::string human;
  for (const auto& r : results) {
    code = std::max(code, r.code);
    all.push_back(r.summary);
    if (r.summary.contains("outcome"))
      human += r.summary["instance_id"].get<std::string>() + ": " + r.summary["outcome"].get<std::string>() +
               " (failed attempts " + std::to_string(r.summary["failed_attempts"].get<int>()) + ") -> " +
               r.summary["report"].get<std::string>() + "\n";
  }
  emit(g, all.size() == 1 ? all[0] : all, human);
  return code;
}

struct LocalizeOptions {
  std::string repo;
  std::string symbol;
  std::string report_file;
  std::string task_file;
  int k = kDefaultTopK;
  int radius = kDefaultContextRadius;
};

int run_localize(const Globals& g, const LocalizeOptions& o) {
  auto config = load(g);
  fs::path repo = o.repo;
  std::string crash_text;
  if (!o.task_file.empty()) {
    auto task = RepairTask::load(o.task_file);
    if (repo.empty()) repo = task.repo;
    if (o.report_file.empty()) {
      OracleSpec spec = task.oracle;
      spec.command_timeout = config.command_timeout;
      spec.total_budget = config.total_budget;
      crash_text = Oracle(spec, repo).reproduce();
    }
  }
  if (!o.report_file.empty()) crash_text = text::read_file(o.report_file);
  if (repo.empty()) throw Error(ErrorCode::ConfigError, "localize needs --repo or --task");
  auto report = crash_text.empty() ? std::nullopt : parse_crash_report(crash_text);
  auto index = index_repository(repo);
  for (const auto& [file, why] : index.diagnostics()) std::cerr << "skipped " << file << ": " << why << "\n";
  auto hits = iter_grep(index, o.symbol, report, o.k, o.radius);
  json out = json::array();
  for (const auto& h : hits)
    out.push_back({{"rank", h.rank},
                   {"file", h.file},
                   {"line", h.line},
                   {"line_start", h.line_start},
                   {"line_end", h.line_end},
                   {"reason", h.reason}});
  // Localization results are JSON either way.
  std::cout << out.dump(2) << "\n";
  (void)g;
  return kExitOk;
}

struct InspectOptions {
  std::string tier;
  std::string cwe;
  std::string project;
  std::string language;
  bool entries = false;
};

int run_inspect(const Globals& g, const InspectOptions& o) {
  auto store = MemoryStore::load(g.memory_path);
  std::optional<Tier> only;
  if (!o.tier.empty()) {
    only = parse_tier(o.tier);
    if (!only) throw Error(ErrorCode::BadArguments, "tier must be L1, L2 or L3");
  }
  const auto cwe = o.cwe.empty() ? std::string() : normalize_cwe(o.cwe);
  json counts = json::object();
  json rows = json::array();
  std::string human;
  for (Tier t : {Tier::L1, Tier::L2, Tier::L3}) {
    counts[std::string(to_string(t))] = store.tier(t).size();
    human += std::string(to_string(t)) + ": " + std::to_string(store.tier(t).size()) + "\n";
  }
  human += "tasks completed: " + std::to_string(store.task_counter()) + "\n";
  bool filtered = only || !cwe.empty() || !o.project.empty() || !o.language.empty() || o.entries;
  if (filtered) {
    char line[512];
    std::snprintf(line, sizeof line, "\n%-4s %-32s %-16s %-10s %-8s %s\n", "tier", "instance", "project", "cwe",
                  "idle", "description");
    human += line;
    for (Tier t : {Tier::L1, Tier::L2, Tier::L3}) {
      if (only && *only != t) continue;
      for (const auto& e : store.tier(t)) {
        if (!cwe.empty() && e.keys.cwe != cwe) continue;
        if (!o.project.empty() && e.keys.project != o.project) continue;
        if (!o.language.empty() && e.keys.language != text::to_lower(o.language)) continue;
        auto idle = store.idle_tasks(t, e.keys.instance_id);
        rows.push_back({{"tier", std::string(to_string(t))},
                        {"instance_id", e.keys.instance_id},
                        {"project", e.keys.project},
                        {"cwe", e.keys.cwe},
                        {"language", e.keys.language},
                        {"idle_tasks", idle ? json(*idle) : json(nullptr)},
                        {"description", e.keys.description}});
        auto desc = e.keys.description.substr(0, 60);
        std::replace(desc.begin(), desc.end(), '\n', ' ');
        std::snprintf(line, sizeof line, "%-4s %-32s %-16s %-10s %-8s %s\n", std::string(to_string(t)).c_str(),
                      e.keys.instance_id.c_str(), e.keys.project.c_str(), e.keys.cwe.c_str(),
                      idle ? std::to_string(*idle).c_str() : "-", desc.c_str());
        human += line;
      }
    }
  }
  json out{{"counts", counts}, {"task_counter", store.task_counter()}};
  if (filtered) out["entries"] = rows;
  emit(g, out, human);
  return kExitOk;
}

int run_prune(const Globals& g, const std::string& window_text) {
  auto store = MemoryStore::load(g.memory_path);
  std::size_t removed = 0;
  if (window_text != "inf" && window_text != "infinity") {
    std::int64_t window = 0;
    try {
      std::size_t used = 0;
      window = std::stoll(window_text, &used);
      if (used != window_text.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCode::BadArguments, "window must be a positive integer or 'inf'");
    }
    removed = store.prune(window);
    store.save(g.memory_path);
  }
  emit(g, {{"removed", removed}}, "removed " + std::to_string(removed) + "\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Memory-guided repository-level vulnerability repair"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "engine configuration file");
  app.add_option("--memory", g.memory_path, "memory store (JSON lines)");
  app.add_flag("--json", g.json, "machine-readable output on stdout");
  app.add_option("--jobs", g.jobs, "parallel repair sessions")->check(CLI::PositiveNumber);

  std::string corpus;
  auto* ingest = app.add_subcommand("ingest", "add a CSV or JSON-lines fix corpus to L1");
  ingest->add_option("corpus", corpus, "corpus file")->required();

  RepairOptions ro;
  auto* repair = app.add_subcommand("repair", "run repair sessions");
  auto* task_opt = repair->add_option("task", ro.task_file, "task.json");
  auto* tasks_opt = repair->add_option("--tasks", ro.tasks_dir, "directory of task directories (each with task.json)");
  task_opt->excludes(tasks_opt);
  repair->add_option("--out", ro.out_dir, "where report.json and trajectory.jsonl go");
  repair->add_option("--scratch", ro.scratch, "copy each repository here before editing");
  repair->add_option("--transcript", ro.transcript, "scripted gateway transcript (overrides config and task)");

  LocalizeOptions lo;
  auto* localize = app.add_subcommand("localize", "rank sites of a symbol against a crash report");
  localize->add_option("--symbol", lo.symbol, "identifier")->required();
  localize->add_option("--repo", lo.repo, "repository root");
  localize->add_option("--report", lo.report_file, "sanitizer report file");
  localize->add_option("--task", lo.task_file, "task.json (runs the PoC when --report is absent)");
  localize->add_option("-k", lo.k, "results")->check(CLI::PositiveNumber);
  localize->add_option("--radius", lo.radius, "context lines on each side")->check(CLI::NonNegativeNumber);

  auto* memory = app.add_subcommand("memory", "memory administration");
  memory->require_subcommand(1);
  InspectOptions io;
  auto* inspect = memory->add_subcommand("inspect", "tier counts and entries");
  inspect->add_option("--tier", io.tier, "L1, L2 or L3");
  inspect->add_option("--cwe", io.cwe);
  inspect->add_option("--project", io.project);
  inspect->add_option("--language", io.language);
  inspect->add_flag("--entries", io.entries, "list entries even without filters");
  std::string window;
  auto* prune = memory->add_subcommand("prune", "drop L2/L3 entries idle for more than WINDOW tasks");
  prune->add_option("--window", window, "task window, or 'inf'")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*ingest) return run_ingest(g, corpus);
    if (*repair) {
      if (ro.task_file.empty() && ro.tasks_dir.empty()) throw Error(ErrorCode::ConfigError, "give a task.json or --tasks");
      return run_repair(g, ro);
    }
    if (*localize) return run_localize(g, lo);
    if (*inspect) return run_inspect(g, io);
    if (*prune) return run_prune(g, window);
  } catch (const Error& e) {
    std::cerr << "patchmem: " << to_string(e.code()) << ": " << e.what() << "\n";
    if (e.code() == ErrorCode::NoMatch) return kExitExhausted;
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "patchmem: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
