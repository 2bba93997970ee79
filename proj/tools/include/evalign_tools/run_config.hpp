#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evalign/trainer.hpp"
#include "evalign/world.hpp"

namespace evalign::cli {

struct Paths {
  std::string input;            // synth: directory of images
  std::string out = "evalign_out";
  std::string encoder;          // eval: encoder file
};

/// Everything a command needs. The JSON form nests it as
///   seed, threads, paths, world, motion, emitter, loss, train, eval, ablation
/// where `motion` and `emitter` configure both the synthetic world and
/// `synth`, and `seed` drives every random draw.
struct RunConfig {
  std::uint64_t seed = 2024;
  std::size_t threads = 0;  // 0 = hardware concurrency
  Paths paths;
  train::WorldSpec world;   // world.seed mirrors `seed`
  train::TrainConfig train;
  train::EvalOption eval_option = train::EvalOption::Raw;
  train::TextOptimizationConfig text;
  std::vector<std::uint64_t> ablation_seeds{1, 2, 3, 4, 5};

  /// Throws ConfigError.
  void validate() const;
  std::size_t worker_count() const;
  /// The world spec with the global seed applied.
  train::WorldSpec world_spec() const;
};

/// Overlays a JSON document on the defaults. Unknown keys, wrong types and
/// invalid values throw ConfigError naming the offending key.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Full JSON form with every field, pretty-printed.
std::string run_config_json(const RunConfig& cfg);

}  // namespace evalign::cli
