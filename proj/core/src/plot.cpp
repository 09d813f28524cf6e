#include "wmnet/plot.hpp"

#include <fstream>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "wmnet/tensor.hpp"

using nlohmann::json;

namespace wmnet {

namespace {

struct Series {
  std::vector<double> x, y;
  bool empty() const { return x.empty(); }
  double ymin() const { return *std::min_element(y.begin(), y.end()); }
  double ymax() const { return *std::max_element(y.begin(), y.end()); }
};

void draw_series(cv::Mat& img, const Series& s, double x0, double x1, double y0, double y1,
                 const cv::Rect& plot, const cv::Scalar& color) {
  if (s.x.size() < 2) return;
  auto to_px = [&](double x, double y) {
    const double fx = (x - x0) / std::max(1e-12, x1 - x0);
    const double fy = (y - y0) / std::max(1e-12, y1 - y0);
    return cv::Point(plot.x + static_cast<int>(fx * plot.width),
                     plot.y + plot.height - static_cast<int>(fy * plot.height));
  };
  for (size_t i = 1; i < s.x.size(); ++i)
    cv::line(img, to_px(s.x[i - 1], s.y[i - 1]), to_px(s.x[i], s.y[i]), color, 2,
             cv::LINE_AA);
}

}  // namespace

void plot_metrics(const std::string& jsonl_path, const std::string& out_png) {
  std::ifstream f(jsonl_path);
  WMNET_CHECK(f.good(), "plot: cannot open " + jsonl_path);
  Series loss, map50;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("type")) continue;
    if (j["type"] == "epoch" && j.contains("train_loss")) {
      loss.x.push_back(j["epoch"].get<double>());
      loss.y.push_back(j["train_loss"].get<double>());
    } else if (j["type"] == "eval" && j.contains("map50") && j.contains("epoch")) {
      map50.x.push_back(j["epoch"].get<double>());
      map50.y.push_back(j["map50"].get<double>());
    }
  }
  WMNET_CHECK(!loss.empty() || !map50.empty(), "plot: no plottable records in " + jsonl_path);

  const int W = 900, H = 520;
  cv::Mat img(H, W, CV_8UC3, cv::Scalar(255, 255, 255));
  const cv::Rect plot(70, 30, W - 100, H - 90);
  cv::rectangle(img, plot, cv::Scalar(60, 60, 60), 1);

  double xmax = 1;
  for (const Series* s : {&loss, &map50})
    if (!s->empty()) xmax = std::max(xmax, s->x.back());

  // Left axis: loss; right axis: mAP in [0, 1].
  if (!loss.empty()) {
    const double lo = 0.0, hi = std::max(1e-6, loss.ymax() * 1.05);
    draw_series(img, loss, 1, xmax, lo, hi, plot, cv::Scalar(60, 60, 220));
    for (int i = 0; i <= 4; ++i) {
      const double v = lo + (hi - lo) * i / 4;
      const int y = plot.y + plot.height - plot.height * i / 4;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", v);
      cv::putText(img, buf, cv::Point(6, y + 4), cv::FONT_HERSHEY_SIMPLEX, 0.4,
                  cv::Scalar(60, 60, 220), 1, cv::LINE_AA);
    }
  }
  if (!map50.empty()) {
    draw_series(img, map50, 1, xmax, 0.0, 1.0, plot, cv::Scalar(80, 160, 40));
    for (int i = 0; i <= 4; ++i) {
      const int y = plot.y + plot.height - plot.height * i / 4;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", i / 4.0);
      cv::putText(img, buf, cv::Point(plot.x + plot.width + 4, y + 4),
                  cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(80, 160, 40), 1, cv::LINE_AA);
    }
  }
  for (int i = 0; i <= 5; ++i) {
    const double v = 1 + (xmax - 1) * i / 5;
    const int x = plot.x + plot.width * i / 5;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f", v);
    cv::putText(img, buf, cv::Point(x - 8, plot.y + plot.height + 18),
                cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(60, 60, 60), 1, cv::LINE_AA);
  }
  cv::putText(img, "epoch", cv::Point(plot.x + plot.width / 2 - 20, H - 14),
              cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(60, 60, 60), 1, cv::LINE_AA);
  cv::putText(img, "train loss", cv::Point(plot.x + 8, 20), cv::FONT_HERSHEY_SIMPLEX, 0.5,
              cv::Scalar(60, 60, 220), 1, cv::LINE_AA);
  cv::putText(img, "val mAP@0.5", cv::Point(plot.x + 130, 20), cv::FONT_HERSHEY_SIMPLEX,
              0.5, cv::Scalar(80, 160, 40), 1, cv::LINE_AA);
  WMNET_CHECK(cv::imwrite(out_png, img), "plot: cannot write " + out_png);
}

}  // namespace wmnet
