#include "ebmri/runconfig.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace ebmri {

std::string ensure_run_dir(const std::string &dir) {
  std::filesystem::create_directories(dir);
  return dir;
}

void write_json(const nlohmann::json &j, const std::string &path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write: " + path);
  f << j.dump(2) << "\n";
}

nlohmann::json manifest_base(const std::string &command, const nlohmann::json &config_echo) {
  nlohmann::json m;
  m["tool"] = "ebmri";
  m["version"] = kVersion;
  m["command"] = command;
  m["config"] = config_echo;
  return m;
}

int emit_error(int code, const std::string &kind, const std::string &message,
               const std::string &out_dir) {
  nlohmann::json e;
  e["error"]["code"] = code;
  e["error"]["kind"] = kind;
  e["error"]["message"] = message;
  std::cout << e.dump() << std::endl;
  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (!ec) {
      std::ofstream f(out_dir + "/error.json");
      if (f) f << e.dump(2) << "\n";
    }
  }
  return code;
}

} // namespace ebmri
