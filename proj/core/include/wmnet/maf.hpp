#pragma once

#include <iostream>
#include <tuple>

#include "wmnet/sawf.hpp"

namespace wmnet {

/// Piecewise blending of a refined feature against its skip, controlled by a
/// learnable scalar:
///   0 < s < 1:  ((1+s) X'' + (2-s) X) / 4
///   s >= 1:     ((1+s) X'' + (2-s) X) / (1+s)^2
/// Both branches agree at s = 1. Non-positive s is clamped to a small
/// epsilon (treated as a constant) with a warning.
template <typename T>
Var<T> scaled_add(Var<T> refined, Var<T> skip, Var<T> scale_v) {
  WMNET_CHECK(refined.val().shape == skip.val().shape, "scaled_add: shape mismatch");
  WMNET_CHECK(scale_v.val().size() == 1, "scaled_add: scale must be a scalar");
  T s = scale_v.val()[0];
  if (s <= T(0)) {
    std::cerr << "[wmnet] warning: scaled_add scale " << s
              << " clamped to 1e-4\n";
    scale_v = refined.tape->constant(Tensor<T>({1}, T(1e-4)));
    s = T(1e-4);
  }
  Var<T> a = mul_bcast_all(refined, add_const(scale_v, T(1)));       // (1+s) X''
  Var<T> b = mul_bcast_all(skip, add_const(neg(scale_v), T(2)));     // (2-s) X
  Var<T> num = add(a, b);
  if (s < T(1)) return scale(num, T(0.25));
  Var<T> inv_den = pow_const(add_const(scale_v, T(1)), -2.0);
  return mul_bcast_all(num, inv_den);
}

struct MAFConfig {
  bool use_sawf = true;
  FusionCoreKind core = FusionCoreKind::kCFM;
  SAWFConfig sawf;
};

/// One misalignment-aware fusion stage: the SAWF (or bare core) interaction,
/// a shared LN + pointwise-conv refinement of both modalities, scaled-add
/// against each modality's own skip, and the element-wise merge.
template <typename T>
struct MAFStage {
  int channels = 0;
  MAFConfig cfg;

  Param<T>*ln_g = nullptr, *ln_b = nullptr;
  Param<T>*pw_w = nullptr, *pw_b = nullptr;
  Param<T>* scale_j = nullptr;
  std::optional<SAWF<T>> sawf;
  std::optional<InteractionCore<T>> bare_core;

  template <typename Rng>
  MAFStage(ParamStore<T>& store, const std::string& prefix, int channels_, MAFConfig cfg_,
           Rng& rng)
      : channels(channels_), cfg(cfg_) {
    if (pure_add()) return;  // plain late fusion registers no parameters
    const int C = channels;
    ln_g = &store.add(prefix + ".refine.norm.gamma", Tensor<T>::full({C}, T(1)));
    ln_b = &store.add(prefix + ".refine.norm.beta", Tensor<T>::zeros({C}));
    pw_w = &store.add(prefix + ".refine.pw.weight", init_conv_weight<T>(1, 1, C, C, rng));
    pw_b = &store.add(prefix + ".refine.pw.bias", Tensor<T>::zeros({C}));
    scale_j = &store.add(prefix + ".scale", Tensor<T>::full({1}, T(1)));
    if (cfg.use_sawf) {
      SAWFConfig sc = cfg.sawf;
      sc.core = cfg.core;
      sawf.emplace(store, prefix + ".sawf", C, sc, rng);
    } else {
      bare_core = InteractionCore<T>::make(store, prefix, cfg.core, C, cfg.sawf.cfm, rng);
    }
  }

  bool pure_add() const { return !cfg.use_sawf && cfg.core == FusionCoreKind::kNone; }

  /// X'' = Conv1x1(LN(X')). The same weights serve both modalities.
  Var<T> refine(Tape<T>& tape, Var<T> x) const {
    Var<T> n = layernorm_lastdim(x, tape.param(*ln_g), tape.param(*ln_b));
    return conv2d(n, tape.param(*pw_w), tape.param(*pw_b), 1, 0);
  }

  /// Returns (x*_ir, x*_rgb, x_fused).
  std::tuple<Var<T>, Var<T>, Var<T>> forward(Tape<T>& tape, Var<T> x_ir,
                                             Var<T> x_rgb) const {
    WMNET_CHECK(x_ir.val().shape.size() == 3 && x_rgb.val().shape.size() == 3,
                "maf: expects (H, W, C) inputs");
    WMNET_CHECK(x_ir.val().shape[2] == x_rgb.val().shape[2], "maf: channel mismatch");
    if (pure_add()) {
      WMNET_CHECK(x_ir.val().shape == x_rgb.val().shape, "maf: shape mismatch");
      return {x_ir, x_rgb, add(x_rgb, x_ir)};
    }
    auto [ir_p, rgb_p] = cfg.use_sawf ? sawf->forward(tape, x_ir, x_rgb)
                                      : bare_core->forward(tape, x_ir, x_rgb);
    Var<T> ir_r = refine(tape, ir_p);
    Var<T> rgb_r = refine(tape, rgb_p);
    Var<T> sv = tape.param(*scale_j);
    Var<T> ir_star = scaled_add(ir_r, x_ir, sv);
    Var<T> rgb_star = scaled_add(rgb_r, x_rgb, sv);
    return {ir_star, rgb_star, add(rgb_star, ir_star)};
  }
};

}  // namespace wmnet
