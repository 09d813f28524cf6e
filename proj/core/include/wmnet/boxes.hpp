#pragma once

#include <vector>

namespace wmnet {

/// Axis-aligned box in infrared-frame pixel coordinates.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const {
    const double w = width(), h = height();
    return (w > 0 && h > 0) ? w * h : 0.0;
  }
  bool valid() const { return x1 <= x2 && y1 <= y2; }
};

struct Detection {
  int class_id = 0;
  Box box;
  double confidence = 0;
};

using DetectionSet = std::vector<Detection>;

struct GtBox {
  int class_id = 0;
  Box box;
};

using GtSet = std::vector<GtBox>;

}  // namespace wmnet
