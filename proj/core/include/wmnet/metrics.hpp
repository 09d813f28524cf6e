#pragma once

#include <vector>

#include "wmnet/boxes.hpp"

namespace wmnet {

/// Intersection-over-union; zero-area boxes score 0.
double compute_iou(const Box& a, const Box& b);

struct EvalResult {
  double map50 = 0.0;                 // mean AP at IoU 0.5
  double map = 0.0;                   // mean AP over the threshold sweep
  std::vector<double> per_class_ap50; // -1 marks a skipped class (no gt, no preds)
  std::vector<double> per_class_map;
  int evaluated_classes = 0;
};

/// IoU thresholds 0.5:0.05:0.95.
std::vector<double> coco_thresholds();

/// Greedy confidence-ordered matching (each ground-truth box is consumed at
/// most once per threshold), per-class AP via all-point interpolation of the
/// precision envelope.
EvalResult compute_map(const std::vector<DetectionSet>& preds,
                       const std::vector<GtSet>& gts,
                       const std::vector<double>& thresholds, int num_classes);

/// AP for a single class at a single threshold (exposed for tests).
double average_precision(const std::vector<DetectionSet>& preds,
                         const std::vector<GtSet>& gts, int class_id, double threshold);

}  // namespace wmnet
