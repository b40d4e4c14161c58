#include "wfen/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace wfen {

namespace {

constexpr char kMagic[5] = {'W', 'F', 'E', 'N', '1'};

void write_u64_le(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f32_le(std::ostream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint64_t read_u64_le(std::istream& in, const char* what) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  check(in.gcount() == 8, std::string("checkpoint: truncated while reading ") + what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void checkpoint_save(const std::string& path, const CheckpointData& data) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "checkpoint: cannot write '" + path + "'");
  out.write(kMagic, 5);
  write_u64_le(out, data.config_text.size());
  out.write(data.config_text.data(), static_cast<std::streamsize>(data.config_text.size()));
  for (const auto& entry : data.entries) {
    check(shape_numel(entry.shape) == static_cast<int64_t>(entry.values.size()),
          "checkpoint: entry '" + entry.name + "' value count does not match its shape");
    write_u64_le(out, entry.name.size());
    out.write(entry.name.data(), static_cast<std::streamsize>(entry.name.size()));
    write_u64_le(out, entry.shape.size());
    for (int64_t e : entry.shape) write_u64_le(out, static_cast<uint64_t>(e));
    for (float v : entry.values) write_f32_le(out, v);
  }
  check(out.good(), "checkpoint: write failure on '" + path + "'");
}

CheckpointData checkpoint_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "checkpoint: cannot open '" + path + "'");
  char magic[5];
  in.read(magic, 5);
  check(in.gcount() == 5 && std::memcmp(magic, kMagic, 5) == 0,
        "checkpoint: '" + path + "' does not start with the WFEN1 magic");
  CheckpointData data;
  const uint64_t config_len = read_u64_le(in, "config length");
  check(config_len <= (1ull << 30), "checkpoint: unreasonable config length");
  data.config_text.resize(config_len);
  if (config_len > 0) {
    in.read(data.config_text.data(), static_cast<std::streamsize>(config_len));
    check(in.gcount() == static_cast<std::streamsize>(config_len),
          "checkpoint: truncated config text");
  }
  while (true) {
    // Either a clean end of file or a full entry must follow.
    unsigned char probe[8];
    in.read(reinterpret_cast<char*>(probe), 8);
    const std::streamsize got = in.gcount();
    if (got == 0) break;
    check(got == 8, "checkpoint: truncated while reading name length");
    uint64_t name_len = 0;
    for (int i = 0; i < 8; ++i) name_len |= static_cast<uint64_t>(probe[i]) << (8 * i);
    check(name_len > 0 && name_len <= (1ull << 20), "checkpoint: unreasonable name length");
    CheckpointEntry entry;
    entry.name.resize(name_len);
    in.read(entry.name.data(), static_cast<std::streamsize>(name_len));
    check(in.gcount() == static_cast<std::streamsize>(name_len),
          "checkpoint: truncated while reading a name");
    const uint64_t rank = read_u64_le(in, "rank");
    check(rank >= 1 && rank <= 4, "checkpoint: entry '" + entry.name + "' has rank " +
                                      std::to_string(rank) + " (expected 1..4)");
    for (uint64_t i = 0; i < rank; ++i) {
      const uint64_t extent = read_u64_le(in, "an extent");
      check(extent > 0 && extent <= (1ull << 32), "checkpoint: bad extent in '" + entry.name + "'");
      entry.shape.push_back(static_cast<int64_t>(extent));
    }
    const int64_t numel = shape_numel(entry.shape);
    entry.values.resize(static_cast<size_t>(numel));
    std::vector<unsigned char> raw(static_cast<size_t>(numel) * 4);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    check(in.gcount() == static_cast<std::streamsize>(raw.size()),
          "checkpoint: truncated values in '" + entry.name + "'");
    for (int64_t i = 0; i < numel; ++i) {
      uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<uint32_t>(raw[static_cast<size_t>(4 * i + b)]) << (8 * b);
      }
      float v;
      std::memcpy(&v, &bits, 4);
      entry.values[static_cast<size_t>(i)] = v;
    }
    data.entries.push_back(std::move(entry));
  }
  return data;
}

}  // namespace wfen
