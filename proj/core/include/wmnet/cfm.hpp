#pragma once

#include "wmnet/init.hpp"
#include "wmnet/nn_ops.hpp"
#include "wmnet/scan.hpp"

namespace wmnet {

inline constexpr int kTokenGrid = 16;  // pooled spatial grid, L = 256 per modality

/// Adaptive-average-pool a feature map to the 16x16 token grid and flatten
/// row-major into an (256, C) sequence.
template <typename T>
Var<T> pool_to_tokens(Tape<T>& tape, Var<T> x) {
  const Shape& s = x.val().shape;
  WMNET_CHECK(s.size() == 3, "pool_to_tokens: expects (H, W, C)");
  (void)tape;
  Var<T> pooled = adaptive_avg_pool(x, kTokenGrid, kTokenGrid);
  return reshape(pooled, {kTokenGrid * kTokenGrid, s[2]});
}

/// Plain-tensor variant for tests and tools.
template <typename T>
Tensor<T> pool_to_tokens(const Tensor<T>& x) {
  Tape<T> tape;
  return pool_to_tokens(tape, tape.constant(x)).val();
}

struct CFMConfig {
  int state_dim = 16;
  int chunk = 64;
};

/// Cross-Modality Fusion Mamba: one gated SSD block over the token
/// concatenation [infrared | rgb]. The scan is causal, so the infrared half
/// (the reference modality) is never influenced by the rgb half.
template <typename T>
struct CFM {
  int channels = 0;
  CFMConfig cfg;

  Param<T>*norm_g, *norm_b;          // pre-norm
  Param<T>*in_w, *in_b;              // C -> 2C (branch, gate)
  Param<T>* b_w;                     // C -> N
  Param<T>* c_w;                     // C -> N
  Param<T>*dt_w, *dt_b;              // C -> 1, softplus'd
  Param<T>* a_log;                   // scalar decay rate
  Param<T>* d_skip;                  // per-channel skip
  Param<T>*post_g, *post_b;          // post-norm
  Param<T>*out_w, *out_b;            // C -> C, zero-initialized

  template <typename Rng>
  CFM(ParamStore<T>& store, const std::string& prefix, int channels_, CFMConfig cfg_,
      Rng& rng)
      : channels(channels_), cfg(cfg_) {
    const int C = channels;
    const int N = cfg.state_dim;
    norm_g = &store.add(prefix + ".norm.gamma", Tensor<T>::full({C}, T(1)));
    norm_b = &store.add(prefix + ".norm.beta", Tensor<T>::zeros({C}));
    in_w = &store.add(prefix + ".in_proj.weight", init_linear_weight<T>(C, 2 * C, rng));
    in_b = &store.add(prefix + ".in_proj.bias", Tensor<T>::zeros({2 * C}));
    b_w = &store.add(prefix + ".b_proj.weight", init_linear_weight<T>(C, N, rng));
    c_w = &store.add(prefix + ".c_proj.weight", init_linear_weight<T>(C, N, rng));
    dt_w = &store.add(prefix + ".dt_proj.weight", init_linear_weight<T>(C, 1, rng));
    dt_b = &store.add(prefix + ".dt_proj.bias",
                      Tensor<T>::full({1}, inv_softplus(T(0.05))));
    a_log = &store.add(prefix + ".a_log", Tensor<T>::full({1}, inv_softplus(T(1))));
    d_skip = &store.add(prefix + ".d_skip", Tensor<T>::full({C}, T(1)));
    post_g = &store.add(prefix + ".post_norm.gamma", Tensor<T>::full({C}, T(1)));
    post_b = &store.add(prefix + ".post_norm.beta", Tensor<T>::zeros({C}));
    out_w = &store.add(prefix + ".out_proj.weight", Tensor<T>::zeros({C, C}));
    out_b = &store.add(prefix + ".out_proj.bias", Tensor<T>::zeros({C}));
  }

  /// Gated SSD block with residual: tokens (L, C) -> (L, C).
  Var<T> block(Tape<T>& tape, Var<T> tokens) const {
    Var<T> u = layernorm_lastdim(tokens, tape.param(*norm_g), tape.param(*norm_b));
    Var<T> xz = linear(u, tape.param(*in_w), tape.param(*in_b));
    Var<T> xb = slice_lastdim(xz, 0, channels);
    Var<T> z = slice_lastdim(xz, channels, 2 * channels);

    Var<T> dt_raw = linear(xb, tape.param(*dt_w), tape.param(*dt_b));  // (L, 1)
    Var<T> dt = softplus(reshape(dt_raw, {dt_raw.val().shape[0]}));    // (L)
    Var<T> rate = softplus(tape.param(*a_log));                        // (1)
    Var<T> decay = exp_op(neg(mul_bcast_all(dt, rate)));               // (L), in (0,1)

    Var<T> Bmat = mul_rows(matmul(xb, tape.param(*b_w)), dt);  // discretized input map
    Var<T> Cmat = matmul(xb, tape.param(*c_w));
    Var<T> y = ssd_scan(xb, decay, Bmat, Cmat, tape.param(*d_skip), cfg.chunk);

    y = mul(y, silu(z));
    y = layernorm_lastdim(y, tape.param(*post_g), tape.param(*post_b));
    return add(tokens, linear(y, tape.param(*out_w), tape.param(*out_b)));
  }

  /// Fuse two feature maps through the token sequence [ir | rgb]; each output
  /// is resized back to its own input's spatial size.
  std::pair<Var<T>, Var<T>> forward(Tape<T>& tape, Var<T> x_ir, Var<T> x_rgb) const {
    const Shape& si = x_ir.val().shape;
    const Shape& sr = x_rgb.val().shape;
    WMNET_CHECK(si.size() == 3 && sr.size() == 3, "cfm_forward: expects (H, W, C) inputs");
    WMNET_CHECK(si[2] == sr[2], "cfm_forward: channel mismatch between modalities");
    WMNET_CHECK(si[2] == channels, "cfm_forward: channel width mismatch with parameters");
    const int L = kTokenGrid * kTokenGrid;
    Var<T> t_ir = pool_to_tokens(tape, x_ir);
    Var<T> t_rgb = pool_to_tokens(tape, x_rgb);
    Var<T> seq = concat_rows(t_ir, t_rgb);  // infrared first: reference modality
    Var<T> out = block(tape, seq);
    Var<T> o_ir = reshape(slice_rows(out, 0, L), {kTokenGrid, kTokenGrid, channels});
    Var<T> o_rgb = reshape(slice_rows(out, L, 2 * L), {kTokenGrid, kTokenGrid, channels});
    return {bilinear_resize(o_ir, si[0], si[1]), bilinear_resize(o_rgb, sr[0], sr[1])};
  }
};

/// Transformer-style cross-attention fusion core (the non-SSD baseline).
/// Same token interface as CFM: pool to 16x16, exchange, resize back.
template <typename T>
struct CrossAttentionCore {
  int channels = 0;

  Param<T>*norm_g, *norm_b;
  Param<T>*q_w, *q_b, *k_w, *k_b, *v_w, *v_b, *o_w, *o_b;
  Param<T>*ffn_norm_g, *ffn_norm_b;
  Param<T>*ffn1_w, *ffn1_b, *ffn2_w, *ffn2_b;

  template <typename Rng>
  CrossAttentionCore(ParamStore<T>& store, const std::string& prefix, int channels_,
                     Rng& rng)
      : channels(channels_) {
    const int C = channels;
    norm_g = &store.add(prefix + ".norm.gamma", Tensor<T>::full({C}, T(1)));
    norm_b = &store.add(prefix + ".norm.beta", Tensor<T>::zeros({C}));
    q_w = &store.add(prefix + ".q.weight", init_linear_weight<T>(C, C, rng));
    q_b = &store.add(prefix + ".q.bias", Tensor<T>::zeros({C}));
    k_w = &store.add(prefix + ".k.weight", init_linear_weight<T>(C, C, rng));
    k_b = &store.add(prefix + ".k.bias", Tensor<T>::zeros({C}));
    v_w = &store.add(prefix + ".v.weight", init_linear_weight<T>(C, C, rng));
    v_b = &store.add(prefix + ".v.bias", Tensor<T>::zeros({C}));
    o_w = &store.add(prefix + ".o.weight", Tensor<T>::zeros({C, C}));
    o_b = &store.add(prefix + ".o.bias", Tensor<T>::zeros({C}));
    ffn_norm_g = &store.add(prefix + ".ffn_norm.gamma", Tensor<T>::full({C}, T(1)));
    ffn_norm_b = &store.add(prefix + ".ffn_norm.beta", Tensor<T>::zeros({C}));
    ffn1_w = &store.add(prefix + ".ffn1.weight", init_linear_weight<T>(C, 4 * C, rng));
    ffn1_b = &store.add(prefix + ".ffn1.bias", Tensor<T>::zeros({4 * C}));
    ffn2_w = &store.add(prefix + ".ffn2.weight", Tensor<T>::zeros({4 * C, C}));
    ffn2_b = &store.add(prefix + ".ffn2.bias", Tensor<T>::zeros({C}));
  }

  Var<T> attend(Tape<T>& tape, Var<T> queries, Var<T> context) const {
    Var<T> qn = layernorm_lastdim(queries, tape.param(*norm_g), tape.param(*norm_b));
    Var<T> kn = layernorm_lastdim(context, tape.param(*norm_g), tape.param(*norm_b));
    Var<T> q = linear(qn, tape.param(*q_w), tape.param(*q_b));
    Var<T> k = linear(kn, tape.param(*k_w), tape.param(*k_b));
    Var<T> v = linear(kn, tape.param(*v_w), tape.param(*v_b));
    Var<T> attn = softmax_rows(scale(matmul(q, k, false, true),
                                     static_cast<T>(1.0 / std::sqrt(double(channels)))));
    Var<T> mixed = linear(matmul(attn, v), tape.param(*o_w), tape.param(*o_b));
    Var<T> h = add(queries, mixed);
    Var<T> hn = layernorm_lastdim(h, tape.param(*ffn_norm_g), tape.param(*ffn_norm_b));
    Var<T> f = linear(silu(linear(hn, tape.param(*ffn1_w), tape.param(*ffn1_b))),
                      tape.param(*ffn2_w), tape.param(*ffn2_b));
    return add(h, f);
  }

  std::pair<Var<T>, Var<T>> forward(Tape<T>& tape, Var<T> x_ir, Var<T> x_rgb) const {
    const Shape& si = x_ir.val().shape;
    const Shape& sr = x_rgb.val().shape;
    WMNET_CHECK(si[2] == sr[2], "cross_attention: channel mismatch between modalities");
    WMNET_CHECK(si[2] == channels, "cross_attention: channel width mismatch");
    Var<T> t_ir = pool_to_tokens(tape, x_ir);
    Var<T> t_rgb = pool_to_tokens(tape, x_rgb);
    Var<T> o_ir = attend(tape, t_ir, t_rgb);
    Var<T> o_rgb = attend(tape, t_rgb, t_ir);
    o_ir = reshape(o_ir, {kTokenGrid, kTokenGrid, channels});
    o_rgb = reshape(o_rgb, {kTokenGrid, kTokenGrid, channels});
    return {bilinear_resize(o_ir, si[0], si[1]), bilinear_resize(o_rgb, sr[0], sr[1])};
  }
};

}  // namespace wmnet
