#include "wfen/config.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>
#include <vector>

namespace wfen {

namespace {

using Json = nlohmann::ordered_json;

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

void check_keys(const Json& node, const std::string& section,
                const std::vector<std::string>& allowed, std::vector<std::string>& problems) {
  for (auto it = node.begin(); it != node.end(); ++it) {
    bool known = false;
    for (const auto& k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      problems.push_back("unknown key '" + (section.empty() ? it.key() : section + "." + it.key()) +
                         "'");
    }
  }
}

void read_int(const Json& node, const std::string& section, const std::string& key, int64_t& out,
              std::vector<std::string>& problems) {
  if (!node.contains(key)) return;
  const Json& v = node.at(key);
  if (!v.is_number_integer()) {
    problems.push_back("'" + section + "." + key + "' must be an integer");
    return;
  }
  out = v.get<int64_t>();
}

void read_u64(const Json& node, const std::string& section, const std::string& key, uint64_t& out,
              std::vector<std::string>& problems) {
  if (!node.contains(key)) return;
  const Json& v = node.at(key);
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<int64_t>() < 0)) {
    problems.push_back("'" + section + "." + key + "' must be a non-negative integer");
    return;
  }
  out = v.get<uint64_t>();
}

void read_double(const Json& node, const std::string& section, const std::string& key, double& out,
                 std::vector<std::string>& problems) {
  if (!node.contains(key)) return;
  const Json& v = node.at(key);
  if (!v.is_number()) {
    problems.push_back("'" + section + "." + key + "' must be a number");
    return;
  }
  out = v.get<double>();
}

void read_bool(const Json& node, const std::string& section, const std::string& key, bool& out,
               std::vector<std::string>& problems) {
  if (!node.contains(key)) return;
  const Json& v = node.at(key);
  if (!v.is_boolean()) {
    problems.push_back("'" + section + "." + key + "' must be a boolean");
    return;
  }
  out = v.get<bool>();
}

void read_string(const Json& node, const std::string& section, const std::string& key,
                 std::string& out, std::vector<std::string>& problems) {
  if (!node.contains(key)) return;
  const Json& v = node.at(key);
  if (!v.is_string()) {
    problems.push_back("'" + section + "." + key + "' must be a string");
    return;
  }
  out = v.get<std::string>();
}

void read_int_list(const Json& node, const std::string& section, const std::string& key,
                   std::vector<int64_t>& out, std::vector<std::string>& problems) {
  if (!node.contains(key)) return;
  const Json& v = node.at(key);
  if (!v.is_array()) {
    problems.push_back("'" + section + "." + key + "' must be an array of integers");
    return;
  }
  std::vector<int64_t> parsed;
  for (const auto& e : v) {
    if (!e.is_number_integer()) {
      problems.push_back("'" + section + "." + key + "' must be an array of integers");
      return;
    }
    parsed.push_back(e.get<int64_t>());
  }
  out = std::move(parsed);
}

template <typename Parse>
void read_named(const Json& node, const std::string& section, const std::string& key,
                Parse parse_fn, std::vector<std::string>& problems) {
  if (!node.contains(key)) return;
  const Json& v = node.at(key);
  if (!v.is_string()) {
    problems.push_back("'" + section + "." + key + "' must be a string");
    return;
  }
  try {
    parse_fn(v.get<std::string>());
  } catch (const std::invalid_argument& e) {
    problems.push_back("'" + section + "." + key + "': " + e.what());
  }
}

}  // namespace

RunConfig default_run_config() {
  RunConfig rc;
  rc.model = WfenConfig::tiny();
  return rc;
}

std::string serialize_run_config(const RunConfig& rc) {
  Json j;
  Json model;
  model["base_channels"] = rc.model.base_channels;
  model["encoder_blocks"] = rc.model.encoder_blocks;
  model["bottleneck_blocks"] = rc.model.bottleneck_blocks;
  model["decoder_blocks"] = rc.model.decoder_blocks;
  model["window"] = rc.model.window;
  model["heads"] = rc.model.heads;
  model["input_size"] = rc.model.input_size;
  model["shift_windows"] = rc.model.shift_windows;
  model["shuffle_heads"] = rc.model.shuffle_heads;
  model["downsample"] = downsample_name(rc.model.downsample);
  j["model"] = model;

  Json train;
  train["steps"] = rc.train.steps;
  train["batch_size"] = rc.train.batch_size;
  train["seed"] = rc.train.seed;
  train["lr"] = rc.train.lr;
  train["source"] = data_source_name(rc.train.source);
  train["dataset_size"] = rc.train.dataset_size;
  train["sr_factor"] = rc.train.sr_factor;
  train["report_every"] = rc.train.report_every;
  j["train"] = train;

  Json eval;
  eval["channels"] = channel_mode_name(rc.eval_channels);
  j["eval"] = eval;

  Json io;
  io["checkpoint"] = rc.io.checkpoint;
  io["report"] = rc.io.report;
  io["data_dir"] = rc.io.data_dir;
  io["out_dir"] = rc.io.out_dir;
  j["io"] = io;

  return j.dump(2) + "\n";
}

RunConfig parse_run_config(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
  }

  std::vector<std::string> problems;
  if (!root.is_object()) {
    throw std::invalid_argument("config: top level must be a JSON object");
  }
  check_keys(root, "", {"model", "train", "eval", "io"}, problems);

  RunConfig rc = default_run_config();

  if (root.contains("model")) {
    const Json& m = root.at("model");
    if (!m.is_object()) {
      problems.push_back("'model' must be an object");
    } else {
      check_keys(m, "model",
                 {"base_channels", "encoder_blocks", "bottleneck_blocks", "decoder_blocks",
                  "window", "heads", "input_size", "shift_windows", "shuffle_heads", "downsample"},
                 problems);
      read_int(m, "model", "base_channels", rc.model.base_channels, problems);
      read_int_list(m, "model", "encoder_blocks", rc.model.encoder_blocks, problems);
      read_int(m, "model", "bottleneck_blocks", rc.model.bottleneck_blocks, problems);
      read_int_list(m, "model", "decoder_blocks", rc.model.decoder_blocks, problems);
      read_int(m, "model", "window", rc.model.window, problems);
      read_int_list(m, "model", "heads", rc.model.heads, problems);
      read_int(m, "model", "input_size", rc.model.input_size, problems);
      read_bool(m, "model", "shift_windows", rc.model.shift_windows, problems);
      read_bool(m, "model", "shuffle_heads", rc.model.shuffle_heads, problems);
      read_named(m, "model", "downsample",
                 [&rc](const std::string& s) { rc.model.downsample = parse_downsample(s); },
                 problems);
    }
  }

  if (root.contains("train")) {
    const Json& t = root.at("train");
    if (!t.is_object()) {
      problems.push_back("'train' must be an object");
    } else {
      check_keys(t, "train",
                 {"steps", "batch_size", "seed", "lr", "source", "dataset_size", "sr_factor",
                  "report_every"},
                 problems);
      read_int(t, "train", "steps", rc.train.steps, problems);
      read_int(t, "train", "batch_size", rc.train.batch_size, problems);
      read_u64(t, "train", "seed", rc.train.seed, problems);
      read_double(t, "train", "lr", rc.train.lr, problems);
      read_named(t, "train", "source",
                 [&rc](const std::string& s) { rc.train.source = parse_data_source(s); },
                 problems);
      read_int(t, "train", "dataset_size", rc.train.dataset_size, problems);
      read_int(t, "train", "sr_factor", rc.train.sr_factor, problems);
      read_int(t, "train", "report_every", rc.train.report_every, problems);
    }
  }

  if (root.contains("eval")) {
    const Json& e = root.at("eval");
    if (!e.is_object()) {
      problems.push_back("'eval' must be an object");
    } else {
      check_keys(e, "eval", {"channels"}, problems);
      read_named(e, "eval", "channels",
                 [&rc](const std::string& s) { rc.eval_channels = parse_channel_mode(s); },
                 problems);
    }
  }

  if (root.contains("io")) {
    const Json& io = root.at("io");
    if (!io.is_object()) {
      problems.push_back("'io' must be an object");
    } else {
      check_keys(io, "io", {"checkpoint", "report", "data_dir", "out_dir"}, problems);
      read_string(io, "io", "checkpoint", rc.io.checkpoint, problems);
      read_string(io, "io", "report", rc.io.report, problems);
      read_string(io, "io", "data_dir", rc.io.data_dir, problems);
      read_string(io, "io", "out_dir", rc.io.out_dir, problems);
    }
  }

  // Semantic constraints are only meaningful once the structure parsed clean.
  if (problems.empty()) {
    try {
      rc.model.validate();
    } catch (const std::invalid_argument& e) {
      std::string msg = e.what();
      const std::string prefix = "config: ";
      if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
      problems.push_back(msg);
    }
    for (const auto& v : rc.train.violations()) problems.push_back(v);
  }

  if (!problems.empty()) {
    throw std::invalid_argument("config: " + join(problems, "; "));
  }
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

}  // namespace wfen
