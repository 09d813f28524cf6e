#pragma once

#include <algorithm>

#include "wmnet/boxes.hpp"
#include "wmnet/init.hpp"
#include "wmnet/nn_ops.hpp"

namespace wmnet {

/// One stride-2 backbone stage: 3x3/s2 conv + SiLU, 3x3 conv + SiLU.
template <typename T>
struct ConvStage {
  Param<T>*w1, *b1, *w2, *b2;

  template <typename Rng>
  ConvStage(ParamStore<T>& store, const std::string& prefix, int cin, int cout, Rng& rng) {
    w1 = &store.add(prefix + ".conv1.weight", init_conv_weight<T>(3, 3, cin, cout, rng));
    b1 = &store.add(prefix + ".conv1.bias", Tensor<T>::zeros({cout}));
    w2 = &store.add(prefix + ".conv2.weight", init_conv_weight<T>(3, 3, cout, cout, rng));
    b2 = &store.add(prefix + ".conv2.bias", Tensor<T>::zeros({cout}));
  }

  Var<T> forward(Tape<T>& tape, Var<T> x) const {
    Var<T> h = silu(conv2d(x, tape.param(*w1), tape.param(*b1), 2, 1));
    return silu(conv2d(h, tape.param(*w2), tape.param(*b2), 1, 1));
  }
};

template <typename T>
struct HeadOutputs {
  Var<T> heatmap;  // (G, G, K) logits
  Var<T> size;     // (G, G, 2) in grid units
  Var<T> offset;   // (G, G, 2) sub-cell center offset
};

/// Anchor-free center-heatmap head over the three fused pyramid maps. The
/// coarser maps are projected, upsampled to the finest grid and summed.
template <typename T>
struct CenterHead {
  int width = 48;
  int num_classes = 3;

  Param<T>*lat2_w, *lat2_b, *lat3_w, *lat3_b, *lat4_w, *lat4_b;
  Param<T>*trunk_w, *trunk_b;
  Param<T>*hm_w, *hm_b, *sz_w, *sz_b, *off_w, *off_b;

  template <typename Rng>
  CenterHead(ParamStore<T>& store, const std::string& prefix, int c2, int c3, int c4,
             int width_, int num_classes_, Rng& rng)
      : width(width_), num_classes(num_classes_) {
    lat2_w = &store.add(prefix + ".lat2.weight", init_conv_weight<T>(1, 1, c2, width, rng));
    lat2_b = &store.add(prefix + ".lat2.bias", Tensor<T>::zeros({width}));
    lat3_w = &store.add(prefix + ".lat3.weight", init_conv_weight<T>(1, 1, c3, width, rng));
    lat3_b = &store.add(prefix + ".lat3.bias", Tensor<T>::zeros({width}));
    lat4_w = &store.add(prefix + ".lat4.weight", init_conv_weight<T>(1, 1, c4, width, rng));
    lat4_b = &store.add(prefix + ".lat4.bias", Tensor<T>::zeros({width}));
    trunk_w = &store.add(prefix + ".trunk.weight", init_conv_weight<T>(3, 3, width, width, rng));
    trunk_b = &store.add(prefix + ".trunk.bias", Tensor<T>::zeros({width}));
    hm_w = &store.add(prefix + ".hm.weight", init_conv_weight<T>(1, 1, width, num_classes, rng));
    // Bias the heatmap towards background so early training is stable.
    hm_b = &store.add(prefix + ".hm.bias",
                      Tensor<T>::full({num_classes}, static_cast<T>(-2.19)));
    sz_w = &store.add(prefix + ".size.weight", init_conv_weight<T>(1, 1, width, 2, rng));
    sz_b = &store.add(prefix + ".size.bias", Tensor<T>::full({2}, T(1)));
    off_w = &store.add(prefix + ".off.weight", init_conv_weight<T>(1, 1, width, 2, rng));
    off_b = &store.add(prefix + ".off.bias", Tensor<T>::full({2}, T(0.5)));
  }

  HeadOutputs<T> forward(Tape<T>& tape, Var<T> f2, Var<T> f3, Var<T> f4) const {
    const int G = f2.val().shape[0];
    Var<T> l2 = conv2d(f2, tape.param(*lat2_w), tape.param(*lat2_b), 1, 0);
    Var<T> l3 = bilinear_resize(conv2d(f3, tape.param(*lat3_w), tape.param(*lat3_b), 1, 0), G, G);
    Var<T> l4 = bilinear_resize(conv2d(f4, tape.param(*lat4_w), tape.param(*lat4_b), 1, 0), G, G);
    Var<T> h = silu(add(add(l2, l3), l4));
    h = silu(conv2d(h, tape.param(*trunk_w), tape.param(*trunk_b), 1, 1));
    HeadOutputs<T> out;
    out.heatmap = conv2d(h, tape.param(*hm_w), tape.param(*hm_b), 1, 0);
    out.size = conv2d(h, tape.param(*sz_w), tape.param(*sz_b), 1, 0);
    out.offset = conv2d(h, tape.param(*off_w), tape.param(*off_b), 1, 0);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Training targets and losses (CenterNet-style)
// ---------------------------------------------------------------------------

template <typename T>
struct HeadTargets {
  Tensor<T> heatmap;     // (G, G, K) gaussian peaks in [0, 1]
  Tensor<T> pos_mask;    // (G, G, K) 1 at object centers
  Tensor<T> neg_weight;  // (G, G, K) (1 - y)^4, zero at centers
  Tensor<T> size;        // (G, G, 2) grid units, valid where reg_mask = 1
  Tensor<T> offset;      // (G, G, 2)
  Tensor<T> reg_mask;    // (G, G, 2)
  int num_pos = 0;
};

template <typename T>
HeadTargets<T> build_head_targets(const GtSet& gts, int grid, int stride, int num_classes) {
  HeadTargets<T> t;
  t.heatmap = Tensor<T>::zeros({grid, grid, num_classes});
  t.pos_mask = Tensor<T>::zeros({grid, grid, num_classes});
  t.size = Tensor<T>::zeros({grid, grid, 2});
  t.offset = Tensor<T>::zeros({grid, grid, 2});
  t.reg_mask = Tensor<T>::zeros({grid, grid, 2});
  for (const GtBox& g : gts) {
    if (g.class_id < 0 || g.class_id >= num_classes) continue;
    const double cx = 0.5 * (g.box.x1 + g.box.x2) / stride;
    const double cy = 0.5 * (g.box.y1 + g.box.y2) / stride;
    const int ix = std::clamp(static_cast<int>(cx), 0, grid - 1);
    const int iy = std::clamp(static_cast<int>(cy), 0, grid - 1);
    const double w = g.box.width() / stride;
    const double h = g.box.height() / stride;
    if (w <= 0 || h <= 0) continue;
    const double radius = std::max(1.0, 0.4 * std::min(w, h));
    const double sigma = radius / 3.0;
    const int r = static_cast<int>(std::ceil(radius));
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        const int yy = iy + dy, xx = ix + dx;
        if (yy < 0 || yy >= grid || xx < 0 || xx >= grid) continue;
        const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        T& cell = t.heatmap.at(yy, xx, g.class_id);
        cell = std::max(cell, static_cast<T>(v));
      }
    }
    t.heatmap.at(iy, ix, g.class_id) = T(1);
    t.pos_mask.at(iy, ix, g.class_id) = T(1);
    t.size.at(iy, ix, 0) = static_cast<T>(w);
    t.size.at(iy, ix, 1) = static_cast<T>(h);
    t.offset.at(iy, ix, 0) = static_cast<T>(cx - ix);
    t.offset.at(iy, ix, 1) = static_cast<T>(cy - iy);
    t.reg_mask.at(iy, ix, 0) = T(1);
    t.reg_mask.at(iy, ix, 1) = T(1);
    ++t.num_pos;
  }
  t.neg_weight = Tensor<T>::zeros(t.heatmap.shape);
  for (int64_t i = 0; i < t.heatmap.size(); ++i) {
    if (t.pos_mask[i] > T(0.5)) continue;
    const T one_minus = T(1) - t.heatmap[i];
    t.neg_weight[i] = one_minus * one_minus * one_minus * one_minus;
  }
  return t;
}

/// Penalty-reduced focal center loss plus masked L1 on size and offset.
/// log(sigmoid) terms use softplus for numerical stability.
template <typename T>
Var<T> detection_loss(Tape<T>& tape, const HeadOutputs<T>& out, const HeadTargets<T>& tgt,
                      T size_weight = T(0.1), T offset_weight = T(1)) {
  const T inv_n = T(1) / static_cast<T>(std::max(1, tgt.num_pos));
  Var<T> x = out.heatmap;
  Var<T> p = sigmoid(x);
  Var<T> log_p = neg(softplus(neg(x)));
  Var<T> log_1mp = neg(softplus(x));
  Var<T> one_minus_p = add_const(neg(p), T(1));
  Var<T> pos = mul_mask(mul(square(one_minus_p), log_p), tgt.pos_mask);
  Var<T> negt = mul_mask(mul(square(p), log_1mp), tgt.neg_weight);
  Var<T> l_hm = scale(sum_all(add(pos, negt)), -inv_n);

  Var<T> sz_diff = sub(out.size, tape.constant(tgt.size));
  Var<T> l_sz = scale(sum_all(mul_mask(abs_op(sz_diff), tgt.reg_mask)), inv_n * size_weight);
  Var<T> off_diff = sub(out.offset, tape.constant(tgt.offset));
  Var<T> l_off =
      scale(sum_all(mul_mask(abs_op(off_diff), tgt.reg_mask)), inv_n * offset_weight);
  return add(add(l_hm, l_sz), l_off);
}

/// Peak extraction: 3x3 local-maximum suppression on the sigmoid heatmap,
/// then top-k above the confidence floor.
template <typename T>
DetectionSet decode_detections(const Tensor<T>& hm_logits, const Tensor<T>& size,
                               const Tensor<T>& offset, int stride, int image_h,
                               int image_w, double conf_thresh = 0.05, int top_k = 32) {
  const int G = hm_logits.shape[0], K = hm_logits.shape[2];
  DetectionSet dets;
  for (int y = 0; y < G; ++y) {
    for (int x = 0; x < G; ++x) {
      for (int k = 0; k < K; ++k) {
        const double v = sigmoid_scalar(static_cast<double>(hm_logits.at(y, x, k)));
        if (v < conf_thresh) continue;
        bool is_peak = true;
        for (int dy = -1; dy <= 1 && is_peak; ++dy)
          for (int dx = -1; dx <= 1 && is_peak; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= G || xx < 0 || xx >= G || (dy == 0 && dx == 0)) continue;
            const double nb = sigmoid_scalar(static_cast<double>(hm_logits.at(yy, xx, k)));
            if (nb > v || (nb == v && (yy < y || (yy == y && xx < x)))) is_peak = false;
          }
        if (!is_peak) continue;
        const double cx = (x + static_cast<double>(offset.at(y, x, 0))) * stride;
        const double cy = (y + static_cast<double>(offset.at(y, x, 1))) * stride;
        const double w = std::max(1.0, static_cast<double>(size.at(y, x, 0)) * stride);
        const double h = std::max(1.0, static_cast<double>(size.at(y, x, 1)) * stride);
        Box b{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
        b.x1 = std::clamp(b.x1, 0.0, static_cast<double>(image_w));
        b.x2 = std::clamp(b.x2, 0.0, static_cast<double>(image_w));
        b.y1 = std::clamp(b.y1, 0.0, static_cast<double>(image_h));
        b.y2 = std::clamp(b.y2, 0.0, static_cast<double>(image_h));
        dets.push_back(Detection{k, b, v});
      }
    }
  }
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
  if (static_cast<int>(dets.size()) > top_k) dets.resize(static_cast<size_t>(top_k));
  return dets;
}

}  // namespace wmnet
