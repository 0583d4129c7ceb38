#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "eyemark/tensor.hpp"

namespace eyemark {

// Flat tensor binary: 8-byte magic "EYEMARK1", u32 rank, u32 extents,
// little-endian f64 payload. All integers little-endian.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

// Checkpoint: one .bin holding consecutive tensor records plus a JSON
// manifest listing name -> byte offset in insertion order.
struct CheckpointEntry {
  std::string name;
  long long offset = 0;
};

void save_checkpoint(const std::string& bin_path, const std::string& manifest_path,
                     const std::vector<std::pair<std::string, const Tensor*>>& entries);
std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& bin_path,
                                                            const std::string& manifest_path);

}  // namespace eyemark
