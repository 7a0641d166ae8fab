#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "prm/io/files.hpp"
#include "prm/io/pgm.hpp"

namespace prm::io {

inline constexpr const char* kConfigEnv = "PRM_CONFIG";

/// Flat key = value file. '#' starts a comment; blank lines are skipped; a repeated key keeps
/// its last value.
using ConfigMap = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline ConfigMap parse_config(const std::string& text, const std::string& what = "config") {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(what + ":" + std::to_string(no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw FormatError(what + ":" + std::to_string(no) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

inline ConfigMap load_config(const std::filesystem::path& path) { return parse_config(read_file(path), path.string()); }

/// Explicit path wins; otherwise $PRM_CONFIG if set; otherwise no file.
inline std::optional<std::filesystem::path> config_path(const std::string& explicit_path) {
  if (!explicit_path.empty()) return std::filesystem::path(explicit_path);
  if (const char* env = std::getenv(kConfigEnv); env != nullptr && *env != '\0') return std::filesystem::path(env);
  return std::nullopt;
}

}  // namespace prm::io
