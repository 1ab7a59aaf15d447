#include "secgan/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <fmt/format.h>

#include "secgan/domain.hpp"

namespace secgan {

namespace {

const std::vector<int> kPngParams = {cv::IMWRITE_PNG_COMPRESSION, 6};

void ensure_parent(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

void write_png(const std::filesystem::path& path, const cv::Mat& m) {
    ensure_parent(path);
    if (!cv::imwrite(path.string(), m, kPngParams))
        throw std::runtime_error(fmt::format("failed to write {}", path.string()));
}

}  // namespace

cv::Mat read_image_rgb(const std::filesystem::path& path) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw std::runtime_error(fmt::format("cannot read image {}", path.string()));
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    return rgb;
}

torch::Tensor to_tensor(const cv::Mat& rgb) {
    if (rgb.type() != CV_8UC3) throw ContractViolation("to_tensor: expected 8-bit 3-channel image");
    cv::Mat contiguous = rgb.isContinuous() ? rgb : rgb.clone();
    auto t = torch::from_blob(contiguous.data, {contiguous.rows, contiguous.cols, 3}, torch::kUInt8)
                 .permute({2, 0, 1})
                 .to(torch::kFloat32);
    return (t / 127.5 - 1.0).contiguous();
}

void write_image(const std::filesystem::path& path, const torch::Tensor& image) {
    if (image.dim() != 3 || image.size(0) != 3)
        throw ContractViolation("write_image: expected [3,H,W] tensor");
    auto u8 = ((image.detach().clamp(-1, 1) + 1.0) * 127.5)
                  .round()
                  .to(torch::kUInt8)
                  .permute({1, 2, 0})
                  .contiguous();
    cv::Mat rgb(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_8UC3, u8.data_ptr());
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    write_png(path, bgr);
}

void write_heatmap(const std::filesystem::path& path, const torch::Tensor& values) {
    if (values.dim() != 2) throw ContractViolation("write_heatmap: expected [H,W] tensor");
    auto u8 = (values.detach().clamp(0, 1) * 255.0).round().to(torch::kUInt8).contiguous();
    cv::Mat gray(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_8UC1, u8.data_ptr());
    write_png(path, gray.clone());
}

void write_mask(const std::filesystem::path& path, const torch::Tensor& class_indices) {
    if (class_indices.dim() != 2) throw ContractViolation("write_mask: expected [H,W] class indices");
    auto idx = class_indices.detach().to(torch::kLong);
    if (idx.min().item<int64_t>() < 0 || idx.max().item<int64_t>() >= kNumSegments)
        throw ContractViolation("write_mask: class index outside taxonomy");
    auto u8 = idx.to(torch::kUInt8).contiguous();
    cv::Mat gray(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_8UC1, u8.data_ptr());
    write_png(path, gray.clone());
}

torch::Tensor read_mask(const std::filesystem::path& path) {
    cv::Mat gray = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (gray.empty()) throw std::runtime_error(fmt::format("cannot read mask {}", path.string()));
    if (gray.type() != CV_8UC1)
        throw ContractViolation(fmt::format("{}: mask must be single-channel 8-bit", path.string()));
    auto t = torch::from_blob(gray.data, {gray.rows, gray.cols}, torch::kUInt8).to(torch::kLong);
    if (t.max().item<int64_t>() >= kNumSegments)
        throw ContractViolation(fmt::format("{}: class index outside taxonomy", path.string()));
    return t.clone();
}

}  // namespace secgan
