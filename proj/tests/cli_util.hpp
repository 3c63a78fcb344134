#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace cli {

namespace fs = std::filesystem;

inline std::string path() { return HIRRR_CLI_PATH; }

// Runs the CLI with `args` (already shell-quoted where needed); returns the exit code.
inline int run(const std::string& args) {
  const std::string cmd = "\"" + path() + "\" " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Fresh scratch directory under the system temp dir.
inline fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("hirrr_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Relative path -> contents for every regular file below `dir`.
inline std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

}  // namespace cli
