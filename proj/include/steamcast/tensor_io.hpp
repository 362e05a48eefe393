#pragma once

#include <filesystem>

#include "steamcast/tensor.hpp"

namespace steamcast {

// FGT1 tensor file format:
//   bytes 0-3  magic ASCII "FGT1"
//   byte  4    dtype code: 1 = float32 LE, 2 = float64 LE
//   byte  5    rank r <= 8
//   next       r x uint32 LE extents
//   then       row-major payload
// Writes use dtype 2 (the repo-wide precision); reads accept both.
void write_tensor_file(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor_file(const std::filesystem::path& path);

}  // namespace steamcast
