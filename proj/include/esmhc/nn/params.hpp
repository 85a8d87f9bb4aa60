#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "esmhc/nn/tensor.hpp"

namespace esmhc::nn {

/// Named trainable tensors in registration order. Handles share storage with
/// the owning model, so the optimizer and checkpoint loader write through.
class ParameterSet {
 public:
  using Entry = std::pair<std::string, Tensor>;

  /// Registers a leaf (forced to require grad). Names must be unique.
  Tensor add(std::string name, Tensor tensor);
  const Tensor* find(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();

 private:
  std::vector<Entry> entries_;
};

/// Checkpoint container: "ESMHC001", then per parameter
/// u32 name length, name bytes (UTF-8), u32 rank, u32 dims[rank],
/// float32 values; all little-endian, records run to end of file.
void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path);
std::vector<ParameterSet::Entry> read_checkpoint(const std::filesystem::path& path);
/// Copies checkpoint values into `params`; names and shapes must match exactly.
void load_checkpoint(ParameterSet& params, const std::filesystem::path& path);

}  // namespace esmhc::nn
