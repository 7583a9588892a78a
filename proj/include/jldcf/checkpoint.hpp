#pragma once

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "jldcf/layers.hpp"

namespace jldcf {

// Checkpoint container, all integers little-endian u64:
//   "JLDCFCK1"
//   manifest length, manifest bytes (JSON)
//   tensor count
//   per tensor: name length, name bytes, element size (4 | 8), rank,
//               rank extents, raw IEEE-754 little-endian data
inline constexpr char kCheckpointMagic[8] = {'J', 'L', 'D', 'C', 'F', 'C', 'K', '1'};

struct StoredTensor {
  std::string name;
  Shape shape;
  std::uint64_t element_size = 8;
  std::vector<double> values;
};

struct Checkpoint {
  nlohmann::json manifest;
  std::vector<StoredTensor> tensors;
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <class T>
void put_value(std::string& out, T v) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const auto bits = std::bit_cast<Bits>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  std::string bytes(std::uint64_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  template <class T>
  T value() {
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    need(sizeof(T));
    Bits bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<Bits>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("truncated checkpoint");
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

template <class T>
std::string encode_checkpoint(const ParameterStore<T>& store, const nlohmann::json& manifest) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::string m = manifest.dump();
  detail::put_u64(out, m.size());
  out += m;
  detail::put_u64(out, store.entries().size());
  for (const auto& p : store.entries()) {
    detail::put_u64(out, p.name.size());
    out += p.name;
    detail::put_u64(out, sizeof(T));
    detail::put_u64(out, p.tensor.rank());
    for (auto e : p.tensor.shape()) detail::put_u64(out, static_cast<std::uint64_t>(e));
    for (T v : p.tensor.data()) detail::put_value(out, v);
  }
  return out;
}

inline Checkpoint decode_checkpoint(std::string bytes) {
  detail::Reader r(std::move(bytes));
  if (r.bytes(8) != std::string(kCheckpointMagic, 8)) throw DataError("not a checkpoint file");
  Checkpoint ck;
  const auto mlen = r.u64();
  try {
    ck.manifest = nlohmann::json::parse(r.bytes(mlen));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint manifest: ") + e.what());
  }
  const auto count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name = r.bytes(r.u64());
    t.element_size = r.u64();
    if (t.element_size != 4 && t.element_size != 8) throw DataError("bad element size in " + t.name);
    const auto rank = r.u64();
    if (rank > 8) throw DataError("bad rank in " + t.name);
    for (std::uint64_t a = 0; a < rank; ++a) t.shape.push_back(static_cast<std::int64_t>(r.u64()));
    const auto n = shape_numel(t.shape);
    t.values.reserve(static_cast<std::size_t>(n));
    for (std::int64_t j = 0; j < n; ++j) {
      t.values.push_back(t.element_size == 4 ? static_cast<double>(r.value<float>()) : r.value<double>());
    }
    ck.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw DataError("trailing bytes after checkpoint");
  return ck;
}

template <class T>
void save_checkpoint(const std::string& path, const ParameterStore<T>& store,
                     const nlohmann::json& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  const auto bytes = encode_checkpoint(store, manifest);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(std::move(bytes));
}

/// Copies stored values into a store, matching by name and shape.
template <class T>
void load_parameters(const Checkpoint& ck, ParameterStore<T>& store) {
  if (ck.tensors.size() != store.entries().size()) {
    throw DataError("checkpoint holds " + std::to_string(ck.tensors.size()) +
                    " tensors, model has " + std::to_string(store.entries().size()));
  }
  for (const auto& entry : store.entries()) {
    const StoredTensor* found = nullptr;
    for (const auto& t : ck.tensors) {
      if (t.name == entry.name) found = &t;
    }
    if (!found) throw DataError("checkpoint is missing " + entry.name);
    if (found->shape != entry.tensor.shape()) {
      throw DimensionError("shape", entry.name + ": checkpoint " + shape_string(found->shape) +
                                        " vs model " + shape_string(entry.tensor.shape()));
    }
    Tensor<T> t = entry.tensor;
    auto dst = t.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(found->values[i]);
  }
}

}  // namespace jldcf
