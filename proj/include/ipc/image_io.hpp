#pragma once

// 8-bit RGB PNG I/O. In-memory images are float [3, H, W] tensors in [0, 1].

#include <torch/torch.h>

#include <filesystem>

namespace ipc::image {

torch::Tensor read_png(const std::filesystem::path& path);

/// Clamps to [0, 1] and rounds to 8 bits.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

/// The values `write_png` followed by `read_png` would produce.
torch::Tensor to_8bit_levels(const torch::Tensor& image);

}  // namespace ipc::image
