#pragma once

#include "wmnet/init.hpp"
#include "wmnet/nn_ops.hpp"
#include "wmnet/wavelet.hpp"

namespace wmnet {

struct WUNetConfig {
  int levels = 2;         // wavelet decomposition depth n
  int channels = 3;       // working channel width C (image channels)
  int attention_dim = 32; // projection dim d for the bottleneck attention
};

/// Frequency-aware enhancement of the rgb image guided by the infrared one.
/// Encoder: per-level DWT, keeping the LL chain and the high bands. The
/// bottleneck runs frequency-aware attention over both modalities; the
/// decoder reconstructs with the rgb LL skips and the *infrared* high bands,
/// then a scaled residual of the raw rgb input is added.
template <typename T>
struct WUNet {
  WUNetConfig cfg;

  Param<T>*ll_w, *ll_b;    // (2C, 3d): joint q/k/v projection of the LL concat
  Param<T>*h_w, *h_b;      // (6C, 2d): joint q/k projection of the high concat
  Param<T>*ln_g, *ln_b;    // (d)
  Param<T>*out_w, *out_b;  // (d, C)
  Param<T>*res_w, *res_b;  // 3x3 conv on the residual path
  Param<T>* res_scale;     // per-channel scale, init 1

  template <typename Rng>
  WUNet(ParamStore<T>& store, const std::string& prefix, WUNetConfig cfg_, Rng& rng)
      : cfg(cfg_) {
    WMNET_CHECK(cfg.levels >= 1, "wunet: levels must be >= 1");
    WMNET_CHECK(cfg.channels >= 1 && cfg.attention_dim >= 1, "wunet: bad config");
    const int C = cfg.channels, d = cfg.attention_dim;
    ll_w = &store.add(prefix + ".attn.ll_proj.weight", init_linear_weight<T>(2 * C, 3 * d, rng));
    ll_b = &store.add(prefix + ".attn.ll_proj.bias", Tensor<T>::zeros({3 * d}));
    h_w = &store.add(prefix + ".attn.h_proj.weight", init_linear_weight<T>(6 * C, 2 * d, rng));
    h_b = &store.add(prefix + ".attn.h_proj.bias", Tensor<T>::zeros({2 * d}));
    ln_g = &store.add(prefix + ".attn.norm.gamma", Tensor<T>::full({d}, T(1)));
    ln_b = &store.add(prefix + ".attn.norm.beta", Tensor<T>::zeros({d}));
    out_w = &store.add(prefix + ".attn.out.weight", init_linear_weight<T>(d, C, rng));
    out_b = &store.add(prefix + ".attn.out.bias", Tensor<T>::zeros({C}));
    res_w = &store.add(prefix + ".res.conv.weight", init_conv_identity_noise<T>(3, C, rng));
    res_b = &store.add(prefix + ".res.conv.bias", Tensor<T>::zeros({C}));
    res_scale = &store.add(prefix + ".res.scale", Tensor<T>::full({C}, T(1)));
  }

  struct Pyramid {
    std::vector<Var<T>> ll;    // level k=1..n, (H/2^k, W/2^k, C)
    std::vector<Var<T>> high;  // level k=1..n, (H/2^k, W/2^k, 3C)
  };

  /// Input must already be divisible by 2^levels.
  Pyramid encode(Tape<T>& tape, Var<T> image) const {
    WMNET_CHECK(cfg.levels >= 1, "encode: levels must be >= 1");
    const Shape& s = image.val().shape;
    const int div = 1 << cfg.levels;
    WMNET_CHECK(s[0] % div == 0 && s[1] % div == 0,
                "encode: spatial size must be divisible by 2^levels");
    (void)tape;
    Pyramid pyr;
    Var<T> cur = image;
    const int C = s[2];
    for (int k = 1; k <= cfg.levels; ++k) {
      Var<T> stacked = dwt2_stacked(cur);
      Var<T> low = slice_lastdim(stacked, 0, C);
      Var<T> high = slice_lastdim(stacked, C, 4 * C);
      pyr.ll.push_back(low);
      pyr.high.push_back(high);
      cur = low;
    }
    return pyr;
  }

  /// Frequency-aware attention at the bottleneck. All inputs share the
  /// level-n spatial shape; low bands are C channels, high bands 3C.
  Var<T> fa_attention(Tape<T>& tape, Var<T> ir_ll, Var<T> rgb_ll, Var<T> ir_h,
                      Var<T> rgb_h) const {
    const Shape& s = ir_ll.val().shape;
    WMNET_CHECK(rgb_ll.val().shape == s, "fa_attention: low-band shape mismatch");
    WMNET_CHECK(ir_h.val().shape[0] == s[0] && ir_h.val().shape[1] == s[1] &&
                    rgb_h.val().shape == ir_h.val().shape,
                "fa_attention: high-band shape mismatch");
    const int H = s[0], W = s[1], C = s[2], d = cfg.attention_dim;
    const int L = H * W;

    Var<T> f_ll = reshape(concat_lastdim<T>({ir_ll, rgb_ll}), {L, 2 * C});
    Var<T> f_h = reshape(concat_lastdim<T>({ir_h, rgb_h}), {L, 6 * C});

    Var<T> qkv = linear(f_ll, tape.param(*ll_w), tape.param(*ll_b));
    Var<T> q = slice_lastdim(qkv, 0, d);
    Var<T> k = slice_lastdim(qkv, d, 2 * d);
    Var<T> v = slice_lastdim(qkv, 2 * d, 3 * d);
    Var<T> qk_h = linear(f_h, tape.param(*h_w), tape.param(*h_b));
    Var<T> qh = slice_lastdim(qk_h, 0, d);
    Var<T> kh = slice_lastdim(qk_h, d, 2 * d);

    const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));
    Var<T> attn_ll = softmax_rows(scale(matmul(q, k, false, true), inv_sqrt_d));
    Var<T> attn_h = softmax_rows(scale(matmul(qh, kh, false, true), inv_sqrt_d));
    Var<T> weights = mul(attn_ll, add_const(attn_h, T(1)));  // entries in (0, 2)

    Var<T> mixed = layernorm_lastdim(matmul(weights, v), tape.param(*ln_g), tape.param(*ln_b));
    Var<T> out = linear(mixed, tape.param(*out_w), tape.param(*out_b));
    return reshape(out, {H, W, C});
  }

  /// Decoder: level n..1, add the rgb LL skip, inverse-transform with the
  /// infrared high bands of the same level.
  Var<T> decode(Tape<T>& tape, const Pyramid& rgb, const Pyramid& ir,
                Var<T> bottleneck) const {
    WMNET_CHECK(static_cast<int>(rgb.ll.size()) == cfg.levels &&
                    static_cast<int>(ir.high.size()) == cfg.levels,
                "decode: pyramid depth mismatch with config");
    (void)tape;
    Var<T> cur = bottleneck;
    for (int level = cfg.levels; level >= 1; --level) {
      Var<T> low = add(cur, rgb.ll[static_cast<size_t>(level - 1)]);
      Var<T> stacked = concat_lastdim<T>({low, ir.high[static_cast<size_t>(level - 1)]});
      cur = idwt2_stacked(stacked);
    }
    return cur;
  }

  /// Full pass: returns the enhanced rgb image at the rgb input's shape.
  Var<T> forward(Tape<T>& tape, Var<T> rgb, Var<T> ir) const {
    const Shape& rs = rgb.val().shape;
    WMNET_CHECK(rs.size() == 3 && rs[2] == cfg.channels,
                "wunet: rgb channel count must match config");
    WMNET_CHECK(rgb.val().all_finite() && ir.val().all_finite(),
                "wunet: non-finite input");
    const int H = rs[0], W = rs[1], C = cfg.channels;

    // Bring the infrared image to the rgb working resolution and width.
    Var<T> ir_w = ir;
    if (ir.val().shape[0] != H || ir.val().shape[1] != W)
      ir_w = bilinear_resize(ir_w, H, W);
    const int ic = ir_w.val().shape[2];
    if (ic == 1 && C > 1) {
      std::vector<Var<T>> reps(static_cast<size_t>(C), ir_w);
      ir_w = concat_lastdim(reps);
    } else {
      WMNET_CHECK(ic == C, "wunet: ir channel mismatch after replication");
    }

    const int div = 1 << cfg.levels;
    Var<T> rgb_p = pad_to_multiple(rgb, div);
    Var<T> ir_p = pad_to_multiple(ir_w, div);

    Pyramid enc_rgb = encode(tape, rgb_p);
    Pyramid enc_ir = encode(tape, ir_p);
    const size_t top = static_cast<size_t>(cfg.levels - 1);
    Var<T> btl = fa_attention(tape, enc_ir.ll[top], enc_rgb.ll[top], enc_ir.high[top],
                              enc_rgb.high[top]);
    Var<T> dec = decode(tape, enc_rgb, enc_ir, btl);

    Var<T> res = conv2d(rgb_p, tape.param(*res_w), tape.param(*res_b), 1, 1);
    res = mul_chanvec(res, tape.param(*res_scale));
    return crop_to(add(dec, res), H, W);
  }
};

}  // namespace wmnet
