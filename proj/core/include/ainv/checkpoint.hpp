#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ainv/tensor.hpp"

namespace ainv {

// Checkpoint container: little-endian binary, magic "AINV", format version
// u32, then a count-prefixed list of entries
//   name:  u32 length + UTF-8 bytes
//   dtype: u8 (0 = f32)
//   rank:  u8
//   dims:  u32[rank]
//   data:  f32[prod(dims)]
// Read errors (bad magic, version, truncation) throw FormatError naming the
// byte offset.
void save_checkpoint(
    const std::string& path,
    const std::vector<std::pair<std::string, const Tensor*>>& entries);

std::map<std::string, Tensor> load_checkpoint(const std::string& path);

}  // namespace ainv
