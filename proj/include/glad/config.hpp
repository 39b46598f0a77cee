#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "glad/data.hpp"
#include "glad/harness.hpp"
#include "glad/vit.hpp"

namespace glad {

struct DataConfig {
  std::string dir = "data/desk";  // holds train.glds and val.glds
  std::size_t tasks = 5;          // class-split tasks in the files
  std::size_t held_out = 1;       // trailing tasks kept out of pre-training
  SyntheticSpec synthetic;        // image extents follow the model block
  bool synthetic_seed_set = false;
};

struct RunConfig {
  std::string name = "desk";
  std::uint64_t seed = 0;
  std::string output_dir = "run";
  ViTConfig model;
  ProtocolConfig protocol;
  DataConfig data;

  std::filesystem::path run_dir() const { return std::filesystem::path(output_dir) / name; }
  std::size_t pretrain_task_count() const { return data.tasks - data.held_out; }
  void validate() const;
};

// Strict JSON parsing: every key must be known. Missing keys take defaults.
// Throws ConfigKeyError naming the offending key, or ConfigConflict.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Fully defaulted config; parsing it back yields the same config.
std::string resolved_config_json(const RunConfig& config);

}  // namespace glad
