#include "wmnet/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "wmnet/tensor.hpp"

namespace wmnet {

double compute_iou(const Box& a, const Box& b) {
  WMNET_CHECK(a.valid() && b.valid(), "compute_iou: invalid box (min > max)");
  const double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (ix <= 0 || iy <= 0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return inter / uni;
}

std::vector<double> coco_thresholds() {
  std::vector<double> ts;
  for (int i = 0; i < 10; ++i) ts.push_back(0.5 + 0.05 * i);
  return ts;
}

namespace {

struct Ranked {
  int image = 0;
  int index = 0;  // original position, tie-break for determinism
  double conf = 0;
  Box box;
};

/// TP/FP flags in confidence order, plus total positives.
void match_class(const std::vector<DetectionSet>& preds, const std::vector<GtSet>& gts,
                 int class_id, double threshold, std::vector<char>& tp, int& npos) {
  std::vector<Ranked> ranked;
  for (size_t img = 0; img < preds.size(); ++img)
    for (size_t i = 0; i < preds[img].size(); ++i) {
      const Detection& d = preds[img][i];
      if (d.class_id != class_id) continue;
      WMNET_CHECK(d.confidence >= 0.0 && d.confidence <= 1.0,
                  "compute_map: confidence outside [0, 1]");
      WMNET_CHECK(d.box.valid(), "compute_map: invalid prediction box");
      ranked.push_back(Ranked{static_cast<int>(img), static_cast<int>(i), d.confidence, d.box});
    }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.conf != b.conf) return a.conf > b.conf;
    if (a.image != b.image) return a.image < b.image;
    return a.index < b.index;
  });

  npos = 0;
  std::vector<std::vector<char>> used(gts.size());
  for (size_t img = 0; img < gts.size(); ++img) {
    int n = 0;
    for (const GtBox& g : gts[img])
      if (g.class_id == class_id) ++n;
    used[img].assign(gts[img].size(), 0);
    npos += n;
  }

  tp.assign(ranked.size(), 0);
  for (size_t k = 0; k < ranked.size(); ++k) {
    const Ranked& r = ranked[k];
    const GtSet& g = gts[static_cast<size_t>(r.image)];
    double best = 0.0;
    int best_j = -1;
    for (size_t j = 0; j < g.size(); ++j) {
      if (g[j].class_id != class_id || used[static_cast<size_t>(r.image)][j]) continue;
      const double iou = compute_iou(r.box, g[j].box);
      if (iou > best) {
        best = iou;
        best_j = static_cast<int>(j);
      }
    }
    if (best_j >= 0 && best >= threshold) {
      tp[k] = 1;
      used[static_cast<size_t>(r.image)][static_cast<size_t>(best_j)] = 1;
    }
  }
}

/// All-point interpolation: integral of the precision envelope over recall.
double ap_from_flags(const std::vector<char>& tp, int npos) {
  if (npos == 0) return 0.0;
  const size_t n = tp.size();
  std::vector<double> precision(n), recall(n);
  int cum_tp = 0;
  for (size_t i = 0; i < n; ++i) {
    cum_tp += tp[i];
    precision[i] = static_cast<double>(cum_tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(cum_tp) / npos;
  }
  double ap = 0.0, env = 0.0, prev_recall = 0.0;
  // Sweep from the tail keeping the running max precision; accumulate
  // increments at recall steps.
  std::vector<double> envelope(n);
  for (size_t i = n; i-- > 0;) {
    env = std::max(env, precision[i]);
    envelope[i] = env;
  }
  for (size_t i = 0; i < n; ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * envelope[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

}  // namespace

double average_precision(const std::vector<DetectionSet>& preds,
                         const std::vector<GtSet>& gts, int class_id, double threshold) {
  WMNET_CHECK(preds.size() == gts.size(), "average_precision: split size mismatch");
  std::vector<char> tp;
  int npos = 0;
  match_class(preds, gts, class_id, threshold, tp, npos);
  return ap_from_flags(tp, npos);
}

EvalResult compute_map(const std::vector<DetectionSet>& preds,
                       const std::vector<GtSet>& gts,
                       const std::vector<double>& thresholds, int num_classes) {
  WMNET_CHECK(preds.size() == gts.size(), "compute_map: split size mismatch");
  WMNET_CHECK(!thresholds.empty() && num_classes >= 1, "compute_map: bad arguments");
  for (const GtSet& g : gts)
    for (const GtBox& b : g) WMNET_CHECK(b.box.valid(), "compute_map: invalid gt box");

  EvalResult out;
  out.per_class_ap50.assign(static_cast<size_t>(num_classes), -1.0);
  out.per_class_map.assign(static_cast<size_t>(num_classes), -1.0);

  std::vector<std::vector<double>> ap(thresholds.size(),
                                      std::vector<double>(static_cast<size_t>(num_classes), 0.0));
  std::vector<char> active(static_cast<size_t>(num_classes), 0);
  for (int c = 0; c < num_classes; ++c) {
    int npos = 0, npred = 0;
    for (size_t img = 0; img < gts.size(); ++img) {
      for (const GtBox& g : gts[img]) npos += g.class_id == c;
      for (const Detection& d : preds[img]) npred += d.class_id == c;
    }
    if (npos == 0 && npred == 0) continue;  // class absent everywhere: skipped
    active[static_cast<size_t>(c)] = 1;
    for (size_t t = 0; t < thresholds.size(); ++t)
      ap[t][static_cast<size_t>(c)] = average_precision(preds, gts, c, thresholds[t]);
  }

  int n_active = 0;
  for (int c = 0; c < num_classes; ++c) n_active += active[static_cast<size_t>(c)];
  out.evaluated_classes = n_active;
  if (n_active == 0) return out;

  size_t t50 = 0;
  for (size_t t = 0; t < thresholds.size(); ++t)
    if (std::abs(thresholds[t] - 0.5) < 1e-9) t50 = t;

  double sum50 = 0.0, sum_all = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    if (!active[static_cast<size_t>(c)]) continue;
    double mean_c = 0.0;
    for (size_t t = 0; t < thresholds.size(); ++t) mean_c += ap[t][static_cast<size_t>(c)];
    mean_c /= static_cast<double>(thresholds.size());
    out.per_class_ap50[static_cast<size_t>(c)] = ap[t50][static_cast<size_t>(c)];
    out.per_class_map[static_cast<size_t>(c)] = mean_c;
    sum50 += ap[t50][static_cast<size_t>(c)];
    sum_all += mean_c;
  }
  out.map50 = sum50 / n_active;
  out.map = sum_all / n_active;
  return out;
}

}  // namespace wmnet
