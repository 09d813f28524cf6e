#pragma once

#include <optional>

#include "wmnet/cfm.hpp"
#include "wmnet/wavelet.hpp"

namespace wmnet {

enum class FusionCoreKind { kCFM, kCrossAttention, kNone };

inline const char* fusion_core_name(FusionCoreKind k) {
  switch (k) {
    case FusionCoreKind::kCFM: return "cfm";
    case FusionCoreKind::kCrossAttention: return "xattn";
    default: return "none";
  }
}

/// The cross-modal interaction unit: either the SSD-based CFM or the
/// cross-attention baseline. Both pool to 16x16 tokens and resize back.
template <typename T>
struct InteractionCore {
  FusionCoreKind kind = FusionCoreKind::kNone;
  std::optional<CFM<T>> cfm;
  std::optional<CrossAttentionCore<T>> xattn;

  template <typename Rng>
  static InteractionCore make(ParamStore<T>& store, const std::string& prefix,
                              FusionCoreKind kind, int channels, CFMConfig cfg, Rng& rng) {
    InteractionCore core;
    core.kind = kind;
    if (kind == FusionCoreKind::kCFM)
      core.cfm.emplace(store, prefix + ".cfm", channels, cfg, rng);
    else if (kind == FusionCoreKind::kCrossAttention)
      core.xattn.emplace(store, prefix + ".xattn", channels, rng);
    return core;
  }

  std::pair<Var<T>, Var<T>> forward(Tape<T>& tape, Var<T> x_ir, Var<T> x_rgb) const {
    switch (kind) {
      case FusionCoreKind::kCFM: return cfm->forward(tape, x_ir, x_rgb);
      case FusionCoreKind::kCrossAttention: return xattn->forward(tape, x_ir, x_rgb);
      default: throw ValidationError("interaction core disabled");
    }
  }
};

struct SAWFConfig {
  double w1_init = 0.1;  // gate over the stacked rgb subbands
  double w2_init = 1.0;  // gate over the rgb skip
  FusionCoreKind core = FusionCoreKind::kCFM;
  CFMConfig cfm;
};

/// Self-adaptive wavelet fusion. The rgb map is decomposed, mixed across
/// frequencies and gated by W1 before any interaction with the infrared
/// stream; the enhancer reconstructs a full-resolution rgb feature from the
/// retained subbands plus the core's rgb output, and W2 gates a conv skip.
template <typename T>
struct SAWF {
  int channels = 0;
  SAWFConfig cfg;

  Param<T>* w1;  // (4C)
  Param<T>*conv_freq_w, *conv_freq_b;  // 3x3 over the stacked subbands
  Param<T>* w2;  // (C)
  Param<T>*conv_skip_w, *conv_skip_b;  // 3x3 on the rgb skip
  InteractionCore<T> core;

  template <typename Rng>
  SAWF(ParamStore<T>& store, const std::string& prefix, int channels_, SAWFConfig cfg_,
       Rng& rng)
      : channels(channels_), cfg(cfg_) {
    WMNET_CHECK(cfg.core != FusionCoreKind::kNone,
                "sawf requires an interaction core (cfm or cross-attention)");
    const int C = channels;
    w1 = &store.add(prefix + ".w1", Tensor<T>::full({4 * C}, static_cast<T>(cfg.w1_init)));
    conv_freq_w = &store.add(prefix + ".conv_freq.weight",
                             init_conv_weight<T>(3, 3, 4 * C, 4 * C, rng));
    conv_freq_b = &store.add(prefix + ".conv_freq.bias", Tensor<T>::zeros({4 * C}));
    w2 = &store.add(prefix + ".w2", Tensor<T>::full({C}, static_cast<T>(cfg.w2_init)));
    conv_skip_w = &store.add(prefix + ".conv_skip.weight",
                             init_conv_weight<T>(3, 3, C, C, rng));
    conv_skip_b = &store.add(prefix + ".conv_skip.bias", Tensor<T>::zeros({C}));
    core = InteractionCore<T>::make(store, prefix, cfg.core, C, cfg.cfm, rng);
  }

  /// DWT -> 3x3 conv across the 4C stacked subbands -> W1 gate -> split.
  /// Returns (ll: C, high: 3C) at half resolution.
  std::pair<Var<T>, Var<T>> modulate_decompose(Tape<T>& tape, Var<T> x_rgb) const {
    Var<T> even = pad_to_multiple(x_rgb, 2);
    Var<T> stacked = dwt2_stacked(even);
    stacked = conv2d(stacked, tape.param(*conv_freq_w), tape.param(*conv_freq_b), 1, 1);
    stacked = mul_chanvec(stacked, tape.param(*w1));
    Var<T> ll = slice_lastdim(stacked, 0, channels);
    Var<T> high = slice_lastdim(stacked, channels, 4 * channels);
    return {ll, high};
  }

  /// X_m = IWT(ll + x', high + broadcast(x')), cropped to (out_h, out_w).
  Var<T> enhance_correlated(Tape<T>& tape, Var<T> ll, Var<T> high, Var<T> x_rgb_core,
                            int out_h, int out_w) const {
    WMNET_CHECK(x_rgb_core.val().shape == ll.val().shape,
                "enhance_correlated: core output must match the LL band shape");
    (void)tape;
    Var<T> low = add(ll, x_rgb_core);
    Var<T> bc = concat_lastdim<T>({x_rgb_core, x_rgb_core, x_rgb_core});
    Var<T> hi = add(high, bc);
    Var<T> full = idwt2_stacked(concat_lastdim<T>({low, hi}));
    return crop_to(full, out_h, out_w);
  }

  /// Returns (x_ir', x~_rgb'), both at the infrared map's spatial size.
  std::pair<Var<T>, Var<T>> forward(Tape<T>& tape, Var<T> x_ir, Var<T> x_rgb) const {
    const Shape& si = x_ir.val().shape;
    const Shape& sr = x_rgb.val().shape;
    WMNET_CHECK(si.size() == 3 && sr.size() == 3, "sawf: expects (H, W, C) inputs");
    WMNET_CHECK(si[2] == sr[2] && si[2] == channels, "sawf: channel mismatch");
    // Infrared is the reference frame; bring rgb to its size.
    Var<T> rgb = x_rgb;
    if (sr[0] != si[0] || sr[1] != si[1]) rgb = bilinear_resize(rgb, si[0], si[1]);

    auto [ll, high] = modulate_decompose(tape, rgb);
    auto [x_ir_p, x_rgb_p] = core.forward(tape, x_ir, ll);
    Var<T> x_m = enhance_correlated(tape, ll, high, x_rgb_p, si[0], si[1]);
    Var<T> skip = conv2d(rgb, tape.param(*conv_skip_w), tape.param(*conv_skip_b), 1, 1);
    skip = mul_chanvec(skip, tape.param(*w2));
    return {x_ir_p, add(x_m, skip)};
  }
};

}  // namespace wmnet
