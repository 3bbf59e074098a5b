#pragma once

#include <filesystem>

#include "attrenh/tensor.hpp"

namespace attrenh {

/// Writes a (1, 3, H, W) image in [0, 1] as 8-bit RGB PNG (values rounded).
void write_png(const std::filesystem::path& path, const Tensor<float>& image);
/// Reads an 8-bit RGB PNG into (1, 3, H, W) with values v / 255.
Tensor<float> read_png(const std::filesystem::path& path);

/// Rounds to the 8-bit grid write_png stores, so in-memory images match
/// what a reload would give.
void quantize_8bit(Tensor<float>& image);

}  // namespace attrenh
