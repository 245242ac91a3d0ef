#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "xcap/tensor.hpp"

namespace xcap {

// Binary tensor format: magic "XTSR", u32 rank, u64 extents, then the raw
// f64 payload. All fields little-endian.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

// Checkpoint container: magic "XCKP", u32 version, u32 entry count, then per
// entry a u32 name length, the name bytes, and the tensor blob.
void save_tensor_table(const std::string& path, const std::map<std::string, Tensor>& table);
std::map<std::string, Tensor> load_tensor_table(const std::string& path);

}  // namespace xcap
