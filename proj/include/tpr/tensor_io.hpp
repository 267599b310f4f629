#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tpr/tensor.hpp"

namespace tpr::io {

/// Tensor file record: magic "TPR1", u32 little-endian header length, UTF-8
/// JSON header {"shape":[...],"dtype":"f64"} (plus "name" in multi-record
/// containers), then the raw little-endian f64 payload.
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;
/// Checkpoint container: concatenated named records in the same format.
void write_records(const std::string& path, const NamedTensors& tensors);
NamedTensors read_records(const std::string& path);

/// 8-bit binary PGM (P5); value = round(255 * clamp(v, 0, 1)). Input [1,H,W].
void write_pgm(const std::string& path, const Tensor& map);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace tpr::io
