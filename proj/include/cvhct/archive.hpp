#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/nn/module.h>
#include <torch/types.h>

namespace cvhct {

/// Self-describing tensor container ("CVHC").
///
///   0   char[4]  magic "CVHC"
///   4   u32      format version (1)
///   8   u64      metadata length L
///   16  L bytes  UTF-8 JSON: {"format_version", "meta", "entries": [
///                  {"name", "kind": "f32"|"bytes", "shape", "offset", "nbytes"}]}
///   ... payload; entry offsets are relative to the payload start.
/// f32 entries are little-endian and row-major.
class TensorArchive {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  nlohmann::json& meta() { return meta_; }
  const nlohmann::json& meta() const { return meta_; }

  void put(const std::string& name, const torch::Tensor& t);
  void put_bytes(const std::string& name, std::vector<std::uint8_t> bytes);

  bool has(const std::string& name) const;
  /// Float32 CPU tensor; throws FormatError if absent or not a tensor entry.
  torch::Tensor tensor(const std::string& name) const;
  const std::vector<std::uint8_t>& bytes(const std::string& name) const;
  /// Entry names in insertion order.
  const std::vector<std::string>& names() const { return order_; }
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;

  std::vector<std::uint8_t> encode() const;
  static TensorArchive decode(const std::vector<std::uint8_t>& bytes);

  /// Atomic write: a failure leaves any previous file at `path` untouched.
  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

 private:
  struct Entry {
    bool is_tensor = true;
    std::vector<int64_t> shape;
    std::vector<std::uint8_t> data;
  };
  nlohmann::json meta_ = nlohmann::json::object();
  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
};

/// Stores every parameter and buffer of `module` as "<prefix>.<name>".
void save_module(TensorArchive& ar, const std::string& prefix, const torch::nn::Module& module);
/// Copies "<prefix>.<name>" entries into the module; every parameter and
/// buffer must be present with a matching shape (FormatError otherwise).
void load_module(const TensorArchive& ar, const std::string& prefix, torch::nn::Module& module);

}  // namespace cvhct
