#pragma once

#include <set>
#include <string>
#include <vector>

#include "wfen/nn.hpp"
#include "wfen/tensor.hpp"

namespace wfen {

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct CheckpointData {
  std::string config_text;
  std::vector<CheckpointEntry> entries;
};

// Binary tensor archive: magic "WFEN1", a length-prefixed config echo, then a
// sequence of named tensors (name, rank, extents as little-endian u64, values
// as little-endian f32). Loading is strict: bad magic, truncation anywhere,
// and trailing bytes after the last entry are all rejected.
void checkpoint_save(const std::string& path, const CheckpointData& data);
CheckpointData checkpoint_load(const std::string& path);

template <typename T>
CheckpointData checkpoint_from_store(const ParameterStore<T>& store,
                                     const std::string& config_text) {
  CheckpointData data;
  data.config_text = config_text;
  for (const auto& e : store.entries()) {
    CheckpointEntry entry;
    entry.name = e.name;
    entry.shape = e.tensor.shape();
    entry.values.resize(static_cast<size_t>(e.tensor.numel()));
    const T* d = e.tensor.cdata();
    for (size_t i = 0; i < entry.values.size(); ++i) entry.values[i] = static_cast<float>(d[i]);
    data.entries.push_back(std::move(entry));
  }
  return data;
}

// Writes checkpoint values into an existing store; every entry must match an
// existing parameter by name and shape, and every parameter must be covered.
template <typename T>
void checkpoint_apply(const CheckpointData& data, ParameterStore<T>& store) {
  std::set<std::string> seen;
  size_t applied = 0;
  for (const auto& entry : data.entries) {
    check(store.has(entry.name), "checkpoint: unknown parameter '" + entry.name + "'");
    check(seen.insert(entry.name).second,
          "checkpoint: duplicate entry for '" + entry.name + "'");
    Tensor<T>& t = store.at(entry.name);
    check(t.shape() == entry.shape,
          "checkpoint: shape mismatch for '" + entry.name + "': stored " +
              shape_str(entry.shape) + ", model expects " + shape_str(t.shape()));
    T* d = t.data();
    for (size_t i = 0; i < entry.values.size(); ++i) d[i] = static_cast<T>(entry.values[i]);
    ++applied;
  }
  check(applied == store.entries().size(),
        "checkpoint: covers " + std::to_string(applied) + " of " +
            std::to_string(store.entries().size()) + " model parameters");
}

}  // namespace wfen
