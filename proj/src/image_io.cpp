#include "ipc/image_io.hpp"

#include <png.h>

#include <cstdint>
#include <cstring>
#include <vector>

#include "ipc/errors.hpp"

namespace ipc::image {

torch::Tensor read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&img, path.c_str()) == 0) {
    throw RuntimeFailure("cannot read PNG '" + path.string() + "': " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<uint8_t> pixels(PNG_IMAGE_SIZE(img));
  if (png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr) == 0) {
    png_image_free(&img);
    throw RuntimeFailure("cannot decode PNG '" + path.string() + "': " + img.message);
  }
  const auto h = static_cast<int64_t>(img.height);
  const auto w = static_cast<int64_t>(img.width);
  auto hwc = torch::from_blob(pixels.data(), {h, w, 3}, torch::kUInt8).clone();
  return hwc.permute({2, 0, 1}).to(torch::kFloat32).div_(255.0f).contiguous();
}

torch::Tensor to_8bit_levels(const torch::Tensor& image) {
  return image.detach().to(torch::kFloat32).clamp(0.0, 1.0).mul(255.0f).round().div(255.0f);
}

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
  require(image.dim() == 3 && image.size(0) == 3, "write_png: expected a [3, H, W] image");
  const auto hwc = image.detach().cpu().to(torch::kFloat32).clamp(0.0, 1.0).mul(255.0f).round()
                       .to(torch::kUInt8).permute({1, 2, 0}).contiguous();
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.size(2));
  img.height = static_cast<png_uint_32>(image.size(1));
  img.format = PNG_FORMAT_RGB;
  if (png_image_write_to_file(&img, path.c_str(), 0, hwc.data_ptr<uint8_t>(), 0, nullptr) == 0) {
    throw RuntimeFailure("cannot write PNG '" + path.string() + "': " + img.message);
  }
}

}  // namespace ipc::image
