#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "fsr/errors.hpp"
#include "fsr/model.hpp"

namespace fsr {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'F', 'S', 'R', 'C', 'K', 'P', 'T', '\0'};

struct TrainingMeta {
  std::uint64_t epochs_completed = 0;
  double final_train_loss = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

template <typename T>
struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  ModelConfig config;
  Parameters<T> parameters;
  TrainingMeta meta;
};

namespace detail {

class ByteWriter {
 public:
  template <typename V>
  void put(V value) {
    static_assert(std::is_trivially_copyable_v<V>);
    unsigned char raw[sizeof(V)];
    std::memcpy(raw, &value, sizeof(V));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(V));
    bytes_.insert(bytes_.end(), raw, raw + sizeof(V));
  }
  void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  const std::vector<unsigned char>& bytes() const { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::vector<unsigned char> bytes, std::string source)
      : bytes_(std::move(bytes)), source_(std::move(source)) {}

  template <typename V>
  V get() {
    need(sizeof(V));
    unsigned char raw[sizeof(V)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(V));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(V));
    pos_ += sizeof(V);
    V value;
    std::memcpy(&value, raw, sizeof(V));
    return value;
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError("checkpoint '" + source_ + "' is truncated at byte " + std::to_string(pos_));
    }
  }
  std::vector<unsigned char> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

template <typename Stored, typename T>
void read_values(ByteReader& in, AlignedVector<T>& out) {
  for (T& v : out) v = static_cast<T>(in.get<Stored>());
}

}  // namespace detail

/// Serializes a checkpoint; see docs/checkpoint_format.md for the layout.
template <typename T>
std::vector<unsigned char> encode_checkpoint(const Checkpoint<T>& ckpt) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  detail::ByteWriter w;
  w.put_bytes(std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic)));
  w.put<std::uint32_t>(ckpt.format_version);
  w.put<std::uint32_t>(sizeof(T));
  w.put<std::int32_t>(ckpt.config.scale);
  w.put<std::int32_t>(ckpt.config.depth);
  w.put<std::int32_t>(ckpt.config.base_channels);
  w.put<std::uint8_t>(ckpt.config.attention_enabled ? 1 : 0);
  w.put<std::uint8_t>(ckpt.config.zero_init_final ? 1 : 0);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(ckpt.config.normalization));
  w.put<std::uint8_t>(0);
  w.put<std::uint64_t>(ckpt.meta.epochs_completed);
  w.put<double>(ckpt.meta.final_train_loss);
  w.put<std::uint64_t>(ckpt.meta.seed);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.parameters.arrays.size()));
  for (const auto& a : ckpt.parameters.arrays) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.name.size()));
    w.put_bytes(a.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.shape.size()));
    for (int d : a.shape) w.put<std::int32_t>(d);
    w.put<std::uint64_t>(a.values.size());
    for (T v : a.values) w.put<T>(v);
  }
  return w.bytes();
}

template <typename T>
void save_checkpoint(const Checkpoint<T>& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

/// Parses checkpoint bytes. Values stored at a different width are converted.
template <typename T>
Checkpoint<T> decode_checkpoint(std::vector<unsigned char> bytes, const std::string& source) {
  detail::ByteReader in(std::move(bytes), source);
  if (in.get_bytes(sizeof(kCheckpointMagic)) != std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw CheckpointError("'" + source + "' is not a checkpoint (bad magic)");
  }
  Checkpoint<T> ckpt;
  ckpt.format_version = in.get<std::uint32_t>();
  if (ckpt.format_version != kCheckpointVersion) {
    throw CheckpointError("checkpoint '" + source + "' has format_version " +
                          std::to_string(ckpt.format_version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  const auto scalar_bytes = in.get<std::uint32_t>();
  if (scalar_bytes != 4 && scalar_bytes != 8) {
    throw CheckpointError("checkpoint '" + source + "' declares unsupported scalar width " +
                          std::to_string(scalar_bytes));
  }
  ckpt.config.scale = in.get<std::int32_t>();
  ckpt.config.depth = in.get<std::int32_t>();
  ckpt.config.base_channels = in.get<std::int32_t>();
  ckpt.config.attention_enabled = in.get<std::uint8_t>() != 0;
  ckpt.config.zero_init_final = in.get<std::uint8_t>() != 0;
  const auto norm = in.get<std::uint8_t>();
  if (norm > 1) throw CheckpointError("checkpoint '" + source + "' has unknown normalization code");
  ckpt.config.normalization = static_cast<Normalization>(norm);
  in.get<std::uint8_t>();
  ckpt.meta.epochs_completed = in.get<std::uint64_t>();
  ckpt.meta.final_train_loss = in.get<double>();
  ckpt.meta.seed = in.get<std::uint64_t>();
  try {
    ckpt.config.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError("checkpoint '" + source + "' has an invalid config: " + e.what());
  }

  const auto layout = parameter_layout(ckpt.config);
  const auto n_arrays = in.get<std::uint32_t>();
  if (n_arrays != layout.size()) {
    throw CheckpointError("checkpoint '" + source + "' holds " + std::to_string(n_arrays) +
                          " arrays but its config needs " + std::to_string(layout.size()));
  }
  for (const auto& spec : layout) {
    ParamArray<T> a;
    a.name = in.get_bytes(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    if (rank > 8) throw CheckpointError("checkpoint '" + source + "' array '" + a.name + "' has rank " + std::to_string(rank));
    for (std::uint32_t r = 0; r < rank; ++r) a.shape.push_back(in.get<std::int32_t>());
    const auto numel = in.get<std::uint64_t>();
    if (a.name != spec.name || a.shape != spec.shape || numel != spec.numel()) {
      throw CheckpointError("checkpoint '" + source + "' array '" + a.name +
                            "' does not match expected '" + spec.name + "'");
    }
    a.values.resize(numel);
    if (scalar_bytes == 4) {
      detail::read_values<float>(in, a.values);
    } else {
      detail::read_values<double>(in, a.values);
    }
    for (const T v : a.values) {
      if (!std::isfinite(static_cast<double>(v))) {
        throw CheckpointError("checkpoint '" + source + "' array '" + a.name + "' holds a non-finite value");
      }
    }
    ckpt.parameters.arrays.push_back(std::move(a));
  }
  if (!in.at_end()) throw CheckpointError("checkpoint '" + source + "' has trailing bytes");
  return ckpt;
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  return decode_checkpoint<T>(std::move(bytes), path.string());
}

}  // namespace fsr
