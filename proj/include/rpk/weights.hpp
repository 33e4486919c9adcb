#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "rpk/errors.hpp"
#include "rpk/tensor.hpp"

namespace rpk {

static_assert(std::endian::native == std::endian::little,
              "weight container assumes a little-endian host");

// Named-tensor container. Insertion order is preserved and defines the
// manifest order and the byte layout of weights.bin, so save -> load is a
// bit-exact round trip.
//
// On-disk layout (directory):
//   manifest.json  {"format_version", "metadata": {seed, config_hash},
//                   "tensors": [{name, shape, dtype, byte_offset}, ...]}
//   weights.bin    raw little-endian values, concatenated in manifest order
template <class S>
class WeightStore {
 public:
  WeightStore() = default;

  void set_metadata(std::uint64_t seed, std::string config_hash) {
    seed_ = seed;
    config_hash_ = std::move(config_hash);
  }
  std::uint64_t seed() const { return seed_; }
  const std::string& config_hash() const { return config_hash_; }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  void add(const std::string& name, Tensor<S> tensor) {
    if (has(name)) throw InvariantError("duplicate tensor name '" + name + "'");
    index_[name] = order_.size();
    order_.push_back(name);
    tensors_.push_back(std::move(tensor));
  }

  const Tensor<S>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ShapeError("missing tensor '" + name + "'");
    return tensors_[it->second];
  }

  Tensor<S>& get_mutable(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ShapeError("missing tensor '" + name + "'");
    return tensors_[it->second];
  }

  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }

  template <class T>
  WeightStore<T> cast() const {
    WeightStore<T> out;
    out.set_metadata(seed_, config_hash_);
    for (std::size_t i = 0; i < order_.size(); ++i)
      out.add(order_[i], tensors_[i].template cast<T>());
    return out;
  }

  void save(const std::string& dir) const {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    nlohmann::ordered_json manifest;
    manifest["format_version"] = 1;
    manifest["metadata"] = {{"seed", seed_}, {"config_hash", config_hash_}};
    nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
    std::ofstream bin(fs::path(dir) / "weights.bin", std::ios::binary);
    if (!bin) throw IOError("cannot write weights.bin in '" + dir + "'");
    std::uint64_t offset = 0;
    for (std::size_t i = 0; i < order_.size(); ++i) {
      const Tensor<S>& t = tensors_[i];
      nlohmann::ordered_json entry;
      entry["name"] = order_[i];
      entry["shape"] = t.shape;
      entry["dtype"] = dtype_name();
      entry["byte_offset"] = offset;
      tensors.push_back(entry);
      bin.write(reinterpret_cast<const char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(S)));
      offset += t.data.size() * sizeof(S);
    }
    if (!bin) throw IOError("write failed for weights.bin");
    manifest["tensors"] = tensors;
    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IOError("cannot write manifest.json in '" + dir + "'");
    mf << manifest.dump(2) << "\n";
  }

  static WeightStore load(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IOError("cannot read manifest.json in '" + dir + "'");
    nlohmann::json manifest = nlohmann::json::parse(mf);
    std::ifstream bin(fs::path(dir) / "weights.bin", std::ios::binary);
    if (!bin) throw IOError("cannot read weights.bin in '" + dir + "'");
    std::vector<char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

    WeightStore store;
    const auto& meta = manifest.at("metadata");
    store.seed_ = meta.value("seed", 0ull);
    store.config_hash_ = meta.value("config_hash", std::string());
    for (const auto& entry : manifest.at("tensors")) {
      std::string name = entry.at("name");
      std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
      std::string dtype = entry.at("dtype");
      std::uint64_t offset = entry.at("byte_offset");
      Tensor<S> t(shape);
      std::size_t elem = dtype == "f32" ? 4 : dtype == "f64" ? 8 : 0;
      if (elem == 0) throw FormatError("unknown dtype '" + dtype + "'");
      if (offset + t.size() * elem > raw.size())
        throw FormatError("weights.bin truncated for tensor '" + name + "'");
      const char* src = raw.data() + offset;
      if ((elem == 4 && std::is_same_v<S, float>) || (elem == 8 && std::is_same_v<S, double>)) {
        std::memcpy(t.data.data(), src, t.size() * elem);
      } else if (elem == 4) {
        for (std::size_t i = 0; i < t.size(); ++i) {
          float v;
          std::memcpy(&v, src + i * 4, 4);
          t.data[i] = static_cast<S>(v);
        }
      } else {
        for (std::size_t i = 0; i < t.size(); ++i) {
          double v;
          std::memcpy(&v, src + i * 8, 8);
          t.data[i] = static_cast<S>(v);
        }
      }
      store.add(name, std::move(t));
    }
    return store;
  }

 private:
  static const char* dtype_name() { return sizeof(S) == 4 ? "f32" : "f64"; }

  std::vector<std::string> order_;
  std::vector<Tensor<S>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t seed_ = 0;
  std::string config_hash_;
};

}  // namespace rpk
