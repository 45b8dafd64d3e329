#pragma once

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "patchmem/agent.hpp"
#include "patchmem/process.hpp"

namespace testing_support {

namespace fs = std::filesystem;

inline fs::path fixture_dir() { return fs::path(PATCHMEM_FIXTURE_DIR); }

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "patchmem-test-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& p) const { return path_ / p; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << s;
}

inline patchmem::ProcessResult sh(const std::string& cmd, const fs::path& cwd) {
  patchmem::ProcessOptions o;
  o.cwd = cwd;
  o.timeout = std::chrono::minutes(2);
  return patchmem::run_command(cmd, o);
}

// A git-initialized copy of the heap overflow fixture repository.
inline fs::path fixture_repo(const TempDir& tmp, const std::string& name = "repo") {
  return patchmem::prepare_scratch(fixture_dir() / "repo", tmp / name);
}

// Every regular file outside .git mapped to a hash of its bytes.
inline std::map<std::string, std::size_t> tree_hashes(const fs::path& root) {
  std::map<std::string, std::size_t> out;
  for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator(); ++it) {
    if (it->is_directory() && it->path().filename() == ".git") {
      it.disable_recursion_pending();
      continue;
    }
    auto rel = fs::relative(it->path(), root).generic_string();
    if (it->is_directory())
      out[rel + "/"] = 0;
    else
      out[rel] = std::hash<std::string>{}(slurp(it->path()));
  }
  return out;
}

}  // namespace testing_support
