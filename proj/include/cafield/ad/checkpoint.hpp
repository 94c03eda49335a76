#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cafield/ad/tensor.hpp"

namespace cafield::ad {

/// Named tensors plus string metadata. On disk: a text manifest
/// ("cafield-ckpt-v1", metadata, one line per tensor with shape and byte
/// offset) and a sibling "<manifest>.bin" blob of little-endian f64 values.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& at(const std::string& name) const;
  const std::string& meta_at(const std::string& key) const;
};

void write_checkpoint(const std::filesystem::path& manifest, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& manifest);

}  // namespace cafield::ad
