#pragma once

#include <string>

#include "wfen/metrics.hpp"
#include "wfen/model.hpp"
#include "wfen/train.hpp"

namespace wfen {

// File-system locations used by the command-line tools.
struct IoConfig {
  std::string checkpoint = "wfen.ckpt";
  std::string report;
  std::string data_dir;
  std::string out_dir = ".";
};

// One self-contained run description: architecture, training schedule,
// evaluation mode, and paths. Serialized as JSON with sections
// "model", "train", "eval", and "io".
struct RunConfig {
  WfenConfig model;
  TrainConfig train;
  ChannelMode eval_channels = ChannelMode::rgb_mean;
  IoConfig io;
};

// Desk-scale defaults: the small model preset with a short synthetic run.
RunConfig default_run_config();

// Canonical JSON form; parse(serialize(rc)) reproduces rc exactly.
std::string serialize_run_config(const RunConfig& rc);

// Parses JSON text. Missing keys keep their defaults; unknown keys are
// rejected. Throws std::invalid_argument listing every problem found,
// including model/train constraint violations.
RunConfig parse_run_config(const std::string& text);

// Reads and parses a JSON config file.
RunConfig load_run_config(const std::string& path);

}  // namespace wfen
