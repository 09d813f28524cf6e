#include "wmnet/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace wmnet {

Tensor<float> load_image(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
  WMNET_CHECK(!m.empty(), "load_image: cannot read " + path);
  if (m.channels() == 4) cv::cvtColor(m, m, cv::COLOR_BGRA2BGR);
  WMNET_CHECK(m.channels() == 1 || m.channels() == 3,
              "load_image: unsupported channel count in " + path);
  cv::Mat f;
  m.convertTo(f, CV_32F, 1.0 / 255.0);
  const int C = f.channels();
  Tensor<float> out({f.rows, f.cols, C});
  for (int y = 0; y < f.rows; ++y)
    for (int x = 0; x < f.cols; ++x) {
      if (C == 1) {
        out.at(y, x, 0) = f.at<float>(y, x);
      } else {
        const cv::Vec3f v = f.at<cv::Vec3f>(y, x);  // BGR
        out.at(y, x, 0) = v[2];
        out.at(y, x, 1) = v[1];
        out.at(y, x, 2) = v[0];
      }
    }
  return out;
}

void save_image(const std::string& path, const Tensor<float>& img) {
  WMNET_CHECK(img.ndim() == 3 && (img.shape[2] == 1 || img.shape[2] == 3),
              "save_image: expects (H, W, 1|3)");
  const int H = img.shape[0], W = img.shape[1], C = img.shape[2];
  cv::Mat m(H, W, C == 1 ? CV_8UC1 : CV_8UC3);
  auto to8 = [](float v) {
    return static_cast<unsigned char>(std::clamp(v, 0.f, 1.f) * 255.f + 0.5f);
  };
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (C == 1) {
        m.at<unsigned char>(y, x) = to8(img.at(y, x, 0));
      } else {
        m.at<cv::Vec3b>(y, x) =
            cv::Vec3b(to8(img.at(y, x, 2)), to8(img.at(y, x, 1)), to8(img.at(y, x, 0)));
      }
    }
  WMNET_CHECK(cv::imwrite(path, m), "save_image: cannot write " + path);
}

}  // namespace wmnet
