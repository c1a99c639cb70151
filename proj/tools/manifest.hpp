#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace hwsc::cli {

using json = nlohmann::ordered_json;

std::string sha256_file(const std::filesystem::path& path);

/// Every option of `app` with its resolved value: the flag, the config file
/// entry, or the default, in that order of precedence.
json resolved_options(const CLI::App& app);

struct Manifest {
  std::string command;
  json config = json::object();
  json seeds = json::object();
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;  // relative to the output directory
  json extra = json::object();

  /// Writes `name` into `dir`, hashing inputs and outputs.
  void write(const std::filesystem::path& dir, const std::string& name = "manifest.json") const;
};

}  // namespace hwsc::cli
