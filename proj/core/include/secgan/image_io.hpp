#pragma once

#include <filesystem>

#include <opencv2/core.hpp>
#include <torch/torch.h>

namespace secgan {

/// 8-bit RGB image (converted from OpenCV's BGR order). Throws on read failure.
cv::Mat read_image_rgb(const std::filesystem::path& path);

/// Writes a [3,H,W] tensor in [-1,1] as an 8-bit PNG.
void write_image(const std::filesystem::path& path, const torch::Tensor& image);

/// Writes a [H,W] tensor with values in [0,1] as a grayscale PNG.
void write_heatmap(const std::filesystem::path& path, const torch::Tensor& values);

/// Class-index masks: single-channel 8-bit PNG, values 0-11 in taxonomy order.
void write_mask(const std::filesystem::path& path, const torch::Tensor& class_indices);
torch::Tensor read_mask(const std::filesystem::path& path);

/// Converts 8-bit RGB to a float tensor [3,H,W] in [-1,1].
torch::Tensor to_tensor(const cv::Mat& rgb);

}  // namespace secgan
