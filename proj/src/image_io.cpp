#include "pg2/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "pg2/errors.hpp"

namespace pg2 {

torch::Tensor from_rgb8(const torch::Tensor& rgb) {
  return rgb.to(torch::kFloat32).div(127.5).sub(1.0);
}

torch::Tensor to_rgb8(const torch::Tensor& image) {
  return image.detach().to(torch::kFloat32).add(1.0).mul(127.5).round().clamp(0, 255).to(
      torch::kUInt8);
}

torch::Tensor load_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) {
    throw DataError("cannot read image " + path.string());
  }
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto hwc = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return from_rgb8(hwc.permute({2, 0, 1}));
}

void save_image(const torch::Tensor& image, const std::filesystem::path& path) {
  if (image.dim() != 3 || image.size(0) != 3) {
    throw UsageError("save_image expects a [3, H, W] tensor");
  }
  auto hwc = to_rgb8(image).permute({1, 2, 0}).contiguous();
  cv::Mat rgb(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3,
              hwc.data_ptr<std::uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  if (!cv::imwrite(path.string(), bgr)) {
    throw DataError("cannot write image " + path.string());
  }
}

}  // namespace pg2
