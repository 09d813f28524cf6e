#pragma once

#include "wmnet/autograd.hpp"
#include "wmnet/nn_ops.hpp"

namespace wmnet {

// Orthonormal Haar filter bank on non-overlapping 2x2 blocks.
// For a block [[a,b],[c,d]] (a,b = top row):
//   ll=(a+b+c+d)/2, lh=(a+b-c-d)/2, hl=(a-b+c-d)/2, hh=(a-b-c+d)/2
// The block matrix is orthogonal, so the transform conserves energy and the
// adjoint equals the inverse.

template <typename T>
struct SubbandSet {
  Tensor<T> ll, lh, hl, hh;  // each (H/2, W/2, C)
  int orig_h = 0, orig_w = 0;  // pre-padding size, restored by idwt2
};

namespace haar {

/// Forward transform of an even-sized (H, W, C) map into channel-stacked
/// subbands (H/2, W/2, 4C) laid out as [LL | LH | HL | HH] blocks.
template <typename T>
Tensor<T> fwd_stacked(const Tensor<T>& x) {
  const int H = x.shape[0], W = x.shape[1], C = x.shape[2];
  WMNET_CHECK(H % 2 == 0 && W % 2 == 0, "haar: even dimensions required");
  Tensor<T> out({H / 2, W / 2, 4 * C});
  const T half = T(0.5);
  for (int y = 0; y < H / 2; ++y) {
    for (int xx = 0; xx < W / 2; ++xx) {
      for (int c = 0; c < C; ++c) {
        const T a = x.at(2 * y, 2 * xx, c);
        const T b = x.at(2 * y, 2 * xx + 1, c);
        const T cc = x.at(2 * y + 1, 2 * xx, c);
        const T d = x.at(2 * y + 1, 2 * xx + 1, c);
        out.at(y, xx, c) = (a + b + cc + d) * half;
        out.at(y, xx, C + c) = (a + b - cc - d) * half;
        out.at(y, xx, 2 * C + c) = (a - b + cc - d) * half;
        out.at(y, xx, 3 * C + c) = (a - b - cc + d) * half;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> inv_stacked(const Tensor<T>& s) {
  const int H2 = s.shape[0], W2 = s.shape[1], C4 = s.shape[2];
  WMNET_CHECK(C4 % 4 == 0, "haar: stacked channel count must be divisible by 4");
  const int C = C4 / 4;
  Tensor<T> out({H2 * 2, W2 * 2, C});
  const T half = T(0.5);
  for (int y = 0; y < H2; ++y) {
    for (int xx = 0; xx < W2; ++xx) {
      for (int c = 0; c < C; ++c) {
        const T ll = s.at(y, xx, c);
        const T lh = s.at(y, xx, C + c);
        const T hl = s.at(y, xx, 2 * C + c);
        const T hh = s.at(y, xx, 3 * C + c);
        out.at(2 * y, 2 * xx, c) = (ll + lh + hl + hh) * half;
        out.at(2 * y, 2 * xx + 1, c) = (ll + lh - hl - hh) * half;
        out.at(2 * y + 1, 2 * xx, c) = (ll - lh + hl - hh) * half;
        out.at(2 * y + 1, 2 * xx + 1, c) = (ll - lh - hl + hh) * half;
      }
    }
  }
  return out;
}

/// Edge-replication pad to even height/width (no-op when already even).
template <typename T>
Tensor<T> pad_even(const Tensor<T>& x) {
  const int H = x.shape[0], W = x.shape[1], C = x.shape[2];
  const int ah = H % 2, aw = W % 2;
  if (ah == 0 && aw == 0) return x;
  Tensor<T> out({H + ah, W + aw, C});
  for (int y = 0; y < H + ah; ++y) {
    const int sy = std::min(y, H - 1);
    for (int xx = 0; xx < W + aw; ++xx) {
      const int sx = std::min(xx, W - 1);
      for (int c = 0; c < C; ++c) out.at(y, xx, c) = x.at(sy, sx, c);
    }
  }
  return out;
}

}  // namespace haar

/// Single-level 2D DWT. Odd inputs are edge-padded to even size first; the
/// original shape is kept in the result so idwt2 can crop back.
template <typename T>
SubbandSet<T> dwt2(const Tensor<T>& x) {
  WMNET_CHECK(x.ndim() == 3, "dwt2: expects (H, W, C)");
  WMNET_CHECK(x.shape[0] >= 1 && x.shape[1] >= 1 && x.shape[2] >= 1, "dwt2: empty input");
  WMNET_CHECK(x.all_finite(), "dwt2: non-finite input");
  SubbandSet<T> out;
  out.orig_h = x.shape[0];
  out.orig_w = x.shape[1];
  Tensor<T> padded = haar::pad_even(x);
  Tensor<T> stacked = haar::fwd_stacked(padded);
  const int H2 = stacked.shape[0], W2 = stacked.shape[1], C = x.shape[2];
  auto take = [&](int block) {
    Tensor<T> t({H2, W2, C});
    for (int y = 0; y < H2; ++y)
      for (int xx = 0; xx < W2; ++xx)
        for (int c = 0; c < C; ++c) t.at(y, xx, c) = stacked.at(y, xx, block * C + c);
    return t;
  };
  out.ll = take(0);
  out.lh = take(1);
  out.hl = take(2);
  out.hh = take(3);
  return out;
}

template <typename T>
Tensor<T> idwt2(const SubbandSet<T>& s) {
  WMNET_CHECK(s.ll.shape == s.lh.shape && s.ll.shape == s.hl.shape &&
                  s.ll.shape == s.hh.shape,
              "idwt2: subband shape mismatch");
  WMNET_CHECK(s.ll.ndim() == 3, "idwt2: expects (H, W, C) subbands");
  const int H2 = s.ll.shape[0], W2 = s.ll.shape[1], C = s.ll.shape[2];
  Tensor<T> stacked({H2, W2, 4 * C});
  for (int y = 0; y < H2; ++y)
    for (int xx = 0; xx < W2; ++xx)
      for (int c = 0; c < C; ++c) {
        stacked.at(y, xx, c) = s.ll.at(y, xx, c);
        stacked.at(y, xx, C + c) = s.lh.at(y, xx, c);
        stacked.at(y, xx, 2 * C + c) = s.hl.at(y, xx, c);
        stacked.at(y, xx, 3 * C + c) = s.hh.at(y, xx, c);
      }
  Tensor<T> full = haar::inv_stacked(stacked);
  const int oh = s.orig_h > 0 ? s.orig_h : full.shape[0];
  const int ow = s.orig_w > 0 ? s.orig_w : full.shape[1];
  if (oh == full.shape[0] && ow == full.shape[1]) return full;
  Tensor<T> out({oh, ow, C});
  for (int y = 0; y < oh; ++y)
    for (int xx = 0; xx < ow; ++xx)
      for (int c = 0; c < C; ++c) out.at(y, xx, c) = full.at(y, xx, c);
  return out;
}

/// Channel-stack the four subbands as [LL | LH | HL | HH].
template <typename T>
Tensor<T> stack_subbands(const SubbandSet<T>& s) {
  WMNET_CHECK(s.ll.shape == s.lh.shape && s.ll.shape == s.hl.shape &&
                  s.ll.shape == s.hh.shape,
              "stack_subbands: subband shape mismatch");
  const int H2 = s.ll.shape[0], W2 = s.ll.shape[1], C = s.ll.shape[2];
  Tensor<T> out({H2, W2, 4 * C});
  for (int y = 0; y < H2; ++y)
    for (int xx = 0; xx < W2; ++xx)
      for (int c = 0; c < C; ++c) {
        out.at(y, xx, c) = s.ll.at(y, xx, c);
        out.at(y, xx, C + c) = s.lh.at(y, xx, c);
        out.at(y, xx, 2 * C + c) = s.hl.at(y, xx, c);
        out.at(y, xx, 3 * C + c) = s.hh.at(y, xx, c);
      }
  return out;
}

/// Split a stacked 4C map into the LL block (C) and the [LH|HL|HH] block (3C).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_stacked(const Tensor<T>& x) {
  WMNET_CHECK(x.ndim() == 3, "split_stacked: expects (H, W, C)");
  WMNET_CHECK(x.shape[2] % 4 == 0, "split_stacked: channels not divisible by 4");
  const int H = x.shape[0], W = x.shape[1], C = x.shape[2] / 4;
  Tensor<T> low({H, W, C});
  Tensor<T> high({H, W, 3 * C});
  for (int y = 0; y < H; ++y)
    for (int xx = 0; xx < W; ++xx) {
      for (int c = 0; c < C; ++c) low.at(y, xx, c) = x.at(y, xx, c);
      for (int c = 0; c < 3 * C; ++c) high.at(y, xx, c) = x.at(y, xx, C + c);
    }
  return {std::move(low), std::move(high)};
}

template <typename T>
SubbandSet<T> restack(const Tensor<T>& low, const Tensor<T>& high, int orig_h = 0,
                      int orig_w = 0) {
  WMNET_CHECK(low.shape[0] == high.shape[0] && low.shape[1] == high.shape[1],
              "restack: spatial mismatch");
  WMNET_CHECK(high.shape[2] == 3 * low.shape[2], "restack: high band must be 3C");
  const int H = low.shape[0], W = low.shape[1], C = low.shape[2];
  SubbandSet<T> s;
  s.ll = low;
  s.lh = Tensor<T>({H, W, C});
  s.hl = Tensor<T>({H, W, C});
  s.hh = Tensor<T>({H, W, C});
  for (int y = 0; y < H; ++y)
    for (int xx = 0; xx < W; ++xx)
      for (int c = 0; c < C; ++c) {
        s.lh.at(y, xx, c) = high.at(y, xx, c);
        s.hl.at(y, xx, c) = high.at(y, xx, C + c);
        s.hh.at(y, xx, c) = high.at(y, xx, 2 * C + c);
      }
  s.orig_h = orig_h;
  s.orig_w = orig_w;
  return s;
}

// ---------------------------------------------------------------------------
// Autograd ops. The transform is orthonormal, so the backward of the forward
// transform is the inverse kernel applied to the gradient (and vice versa).
// ---------------------------------------------------------------------------

template <typename T>
Var<T> dwt2_stacked(Var<T> x) {
  const Shape& s = x.val().shape;
  WMNET_CHECK(s.size() == 3 && s[0] % 2 == 0 && s[1] % 2 == 0,
              "dwt2_stacked: even (H, W, C) required");
  Tensor<T> out = haar::fwd_stacked(x.val());
  int xi = x.idx;
  return x.tape->make(std::move(out), {xi}, [xi](Tape<T>& t, int self) {
    t.acc(xi, haar::inv_stacked(t.node(self).grad));
  });
}

template <typename T>
Var<T> idwt2_stacked(Var<T> s) {
  const Shape& sh = s.val().shape;
  WMNET_CHECK(sh.size() == 3 && sh[2] % 4 == 0, "idwt2_stacked: (H, W, 4C) required");
  Tensor<T> out = haar::inv_stacked(s.val());
  int si = s.idx;
  return s.tape->make(std::move(out), {si}, [si](Tape<T>& t, int self) {
    t.acc(si, haar::fwd_stacked(t.node(self).grad));
  });
}

}  // namespace wmnet
