#pragma once

#include "wmnet/autograd.hpp"

namespace wmnet {

namespace detail {

template <typename T>
void im2col(const Tensor<T>& x, int kh, int kw, int stride, int pad, Tensor<T>& cols,
            int& ho, int& wo) {
  const int H = x.shape[0], W = x.shape[1], C = x.shape[2];
  ho = (H + 2 * pad - kh) / stride + 1;
  wo = (W + 2 * pad - kw) / stride + 1;
  const int K = kh * kw * C;
  cols = Tensor<T>({ho * wo, K});
  int64_t row = 0;
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox, ++row) {
      T* dst = &cols[row * K];
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride + ky - pad;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ox * stride + kx - pad;
          if (iy >= 0 && iy < H && ix >= 0 && ix < W) {
            const T* src = &x.at(iy, ix, 0);
            std::copy(src, src + C, dst);
          } else {
            std::fill(dst, dst + C, T(0));
          }
          dst += C;
        }
      }
    }
  }
}

template <typename T>
void col2im_acc(const Tensor<T>& cols, int H, int W, int C, int kh, int kw, int stride,
                int pad, Tensor<T>& gx) {
  const int ho = (H + 2 * pad - kh) / stride + 1;
  const int wo = (W + 2 * pad - kw) / stride + 1;
  const int K = kh * kw * C;
  int64_t row = 0;
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox, ++row) {
      const T* src = &cols[row * K];
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride + ky - pad;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ox * stride + kx - pad;
          if (iy >= 0 && iy < H && ix >= 0 && ix < W) {
            T* dst = &gx.at(iy, ix, 0);
            for (int c = 0; c < C; ++c) dst[c] += src[c];
          }
          src += C;
        }
      }
    }
  }
}

}  // namespace detail

/// 2D convolution: x (H, W, Cin), w (kh, kw, Cin, Cout), optional bias (Cout).
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int stride = 1, int pad = 0) {
  const Shape& xs = x.val().shape;
  const Shape& ws = w.val().shape;
  WMNET_CHECK(xs.size() == 3 && ws.size() == 4, "conv2d: bad ranks");
  WMNET_CHECK(xs[2] == ws[2], "conv2d: channel mismatch");
  const int H = xs[0], W = xs[1], Cin = xs[2];
  const int kh = ws[0], kw = ws[1], Cout = ws[3];
  const int K = kh * kw * Cin;

  const bool pointwise = (kh == 1 && kw == 1 && stride == 1 && pad == 0);
  auto cols = std::make_shared<Tensor<T>>();
  int ho, wo;
  if (pointwise) {
    ho = H;
    wo = W;
  } else {
    detail::im2col(x.val(), kh, kw, stride, pad, *cols, ho, wo);
  }
  const int P = ho * wo;
  Tensor<T> out({ho, wo, Cout});
  {
    detail::ECMap<T> Cm(pointwise ? x.val().data.data() : cols->data.data(), P, K);
    detail::ECMap<T> Wm(w.val().data.data(), K, Cout);
    detail::EMap<T> Y(out.data.data(), P, Cout);
    Y.noalias() = Cm * Wm;
  }
  if (b.valid()) {
    const Tensor<T>& bv = b.val();
    WMNET_CHECK(bv.size() == Cout, "conv2d: bias length mismatch");
    for (int64_t p = 0; p < P; ++p)
      for (int c = 0; c < Cout; ++c) out[p * Cout + c] += bv[c];
  }

  int xi = x.idx, wi = w.idx, bi = b.valid() ? b.idx : -1;
  return x.tape->make(
      std::move(out), bi >= 0 ? std::vector<int>{xi, wi, bi} : std::vector<int>{xi, wi},
      [=](Tape<T>& t, int self) {
        const Tensor<T>& g = t.node(self).grad;
        detail::ECMap<T> G(g.data.data(), P, Cout);
        if (bi >= 0 && t.wants_grad(bi)) {
          Tensor<T> gb({Cout}, T(0));
          for (int64_t p = 0; p < P; ++p)
            for (int c = 0; c < Cout; ++c) gb[c] += g[p * Cout + c];
          t.acc(bi, gb);
        }
        const Tensor<T>& xv = t.node(xi).value;
        if (t.wants_grad(wi)) {
          Tensor<T> gw(t.node(wi).value.shape);
          detail::ECMap<T> Cm(pointwise ? xv.data.data() : cols->data.data(), P, K);
          detail::EMap<T> GW(gw.data.data(), K, Cout);
          GW.noalias() = Cm.transpose() * G;
          t.acc(wi, gw);
        }
        if (t.wants_grad(xi)) {
          const Tensor<T>& wv = t.node(wi).value;
          detail::ECMap<T> Wm(wv.data.data(), K, Cout);
          if (pointwise) {
            Tensor<T> gx(xv.shape);
            detail::EMap<T> GX(gx.data.data(), P, K);
            GX.noalias() = G * Wm.transpose();
            t.acc(xi, gx);
          } else {
            Tensor<T> gcols({P, K});
            detail::EMap<T> GC(gcols.data.data(), P, K);
            GC.noalias() = G * Wm.transpose();
            Tensor<T> gx(xv.shape, T(0));
            detail::col2im_acc(gcols, H, W, Cin, kh, kw, stride, pad, gx);
            t.acc(xi, gx);
          }
        }
      });
}

/// Bilinear resize of an (H, W, C) map (half-pixel centers, edge clamped).
template <typename T>
Var<T> bilinear_resize(Var<T> x, int oh, int ow) {
  const Shape& s = x.val().shape;
  WMNET_CHECK(s.size() == 3, "bilinear_resize: expects (H, W, C)");
  const int H = s[0], W = s[1], C = s[2];
  WMNET_CHECK(oh >= 1 && ow >= 1, "bilinear_resize: bad target size");
  if (oh == H && ow == W) return x;
  Tensor<T> out({oh, ow, C});
  const Tensor<T>& xv = x.val();
  const double sy_scale = static_cast<double>(H) / oh;
  const double sx_scale = static_cast<double>(W) / ow;
  for (int oy = 0; oy < oh; ++oy) {
    double sy = (oy + 0.5) * sy_scale - 0.5;
    sy = std::min(std::max(sy, 0.0), static_cast<double>(H - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, H - 1);
    const T fy = static_cast<T>(sy - y0);
    for (int ox = 0; ox < ow; ++ox) {
      double sx = (ox + 0.5) * sx_scale - 0.5;
      sx = std::min(std::max(sx, 0.0), static_cast<double>(W - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, W - 1);
      const T fx = static_cast<T>(sx - x0);
      for (int c = 0; c < C; ++c) {
        const T top = xv.at(y0, x0, c) * (T(1) - fx) + xv.at(y0, x1, c) * fx;
        const T bot = xv.at(y1, x0, c) * (T(1) - fx) + xv.at(y1, x1, c) * fx;
        out.at(oy, ox, c) = top * (T(1) - fy) + bot * fy;
      }
    }
  }
  int xi = x.idx;
  return x.tape->make(std::move(out), {xi}, [xi, H, W, C, oh, ow](Tape<T>& t, int self) {
    const Tensor<T>& g = t.node(self).grad;
    Tensor<T> gx(t.node(xi).value.shape, T(0));
    const double sy_scale = static_cast<double>(H) / oh;
    const double sx_scale = static_cast<double>(W) / ow;
    for (int oy = 0; oy < oh; ++oy) {
      double sy = (oy + 0.5) * sy_scale - 0.5;
      sy = std::min(std::max(sy, 0.0), static_cast<double>(H - 1));
      const int y0 = static_cast<int>(sy);
      const int y1 = std::min(y0 + 1, H - 1);
      const T fy = static_cast<T>(sy - y0);
      for (int ox = 0; ox < ow; ++ox) {
        double sx = (ox + 0.5) * sx_scale - 0.5;
        sx = std::min(std::max(sx, 0.0), static_cast<double>(W - 1));
        const int x0 = static_cast<int>(sx);
        const int x1 = std::min(x0 + 1, W - 1);
        const T fx = static_cast<T>(sx - x0);
        for (int c = 0; c < C; ++c) {
          const T gv = g.at(oy, ox, c);
          gx.at(y0, x0, c) += gv * (T(1) - fy) * (T(1) - fx);
          gx.at(y0, x1, c) += gv * (T(1) - fy) * fx;
          gx.at(y1, x0, c) += gv * fy * (T(1) - fx);
          gx.at(y1, x1, c) += gv * fy * fx;
        }
      }
    }
    t.acc(xi, gx);
  });
}

/// Adaptive average pooling with the floor/ceil cell rule.
template <typename T>
Var<T> adaptive_avg_pool(Var<T> x, int oh, int ow) {
  const Shape& s = x.val().shape;
  WMNET_CHECK(s.size() == 3, "adaptive_avg_pool: expects (H, W, C)");
  const int H = s[0], W = s[1], C = s[2];
  Tensor<T> out({oh, ow, C});
  const Tensor<T>& xv = x.val();
  for (int oy = 0; oy < oh; ++oy) {
    const int y0 = (oy * H) / oh;
    const int y1 = ((oy + 1) * H + oh - 1) / oh;  // ceil
    for (int ox = 0; ox < ow; ++ox) {
      const int x0 = (ox * W) / ow;
      const int x1 = ((ox + 1) * W + ow - 1) / ow;
      const T inv = T(1) / static_cast<T>((y1 - y0) * (x1 - x0));
      for (int c = 0; c < C; ++c) {
        T acc = 0;
        for (int iy = y0; iy < y1; ++iy)
          for (int ix = x0; ix < x1; ++ix) acc += xv.at(iy, ix, c);
        out.at(oy, ox, c) = acc * inv;
      }
    }
  }
  int xi = x.idx;
  return x.tape->make(std::move(out), {xi}, [xi, H, W, C, oh, ow](Tape<T>& t, int self) {
    const Tensor<T>& g = t.node(self).grad;
    Tensor<T> gx(t.node(xi).value.shape, T(0));
    for (int oy = 0; oy < oh; ++oy) {
      const int y0 = (oy * H) / oh;
      const int y1 = ((oy + 1) * H + oh - 1) / oh;
      for (int ox = 0; ox < ow; ++ox) {
        const int x0 = (ox * W) / ow;
        const int x1 = ((ox + 1) * W + ow - 1) / ow;
        const T inv = T(1) / static_cast<T>((y1 - y0) * (x1 - x0));
        for (int c = 0; c < C; ++c) {
          const T gv = g.at(oy, ox, c) * inv;
          for (int iy = y0; iy < y1; ++iy)
            for (int ix = x0; ix < x1; ++ix) gx.at(iy, ix, c) += gv;
        }
      }
    }
    t.acc(xi, gx);
  });
}

/// Replicate the last row/column to grow the map by (add_h, add_w).
template <typename T>
Var<T> pad_edge(Var<T> x, int add_h, int add_w) {
  if (add_h == 0 && add_w == 0) return x;
  const Shape& s = x.val().shape;
  WMNET_CHECK(s.size() == 3, "pad_edge: expects (H, W, C)");
  const int H = s[0], W = s[1], C = s[2];
  Tensor<T> out({H + add_h, W + add_w, C});
  const Tensor<T>& xv = x.val();
  for (int y = 0; y < H + add_h; ++y) {
    const int sy = std::min(y, H - 1);
    for (int x2 = 0; x2 < W + add_w; ++x2) {
      const int sx = std::min(x2, W - 1);
      for (int c = 0; c < C; ++c) out.at(y, x2, c) = xv.at(sy, sx, c);
    }
  }
  int xi = x.idx;
  return x.tape->make(std::move(out), {xi}, [xi, H, W, C, add_h, add_w](Tape<T>& t, int self) {
    const Tensor<T>& g = t.node(self).grad;
    Tensor<T> gx(t.node(xi).value.shape, T(0));
    for (int y = 0; y < H + add_h; ++y) {
      const int sy = std::min(y, H - 1);
      for (int x2 = 0; x2 < W + add_w; ++x2) {
        const int sx = std::min(x2, W - 1);
        for (int c = 0; c < C; ++c) gx.at(sy, sx, c) += g.at(y, x2, c);
      }
    }
    t.acc(xi, gx);
  });
}

/// Keep the top-left (h, w) region of an (H, W, C) map.
template <typename T>
Var<T> crop_to(Var<T> x, int h, int w) {
  const Shape& s = x.val().shape;
  WMNET_CHECK(s.size() == 3, "crop_to: expects (H, W, C)");
  const int H = s[0], W = s[1], C = s[2];
  WMNET_CHECK(h <= H && w <= W && h >= 1 && w >= 1, "crop_to: bad target size");
  if (h == H && w == W) return x;
  Tensor<T> out({h, w, C});
  const Tensor<T>& xv = x.val();
  for (int y = 0; y < h; ++y)
    for (int x2 = 0; x2 < w; ++x2)
      for (int c = 0; c < C; ++c) out.at(y, x2, c) = xv.at(y, x2, c);
  int xi = x.idx;
  return x.tape->make(std::move(out), {xi}, [xi, h, w, C](Tape<T>& t, int self) {
    const Tensor<T>& g = t.node(self).grad;
    Tensor<T> gx(t.node(xi).value.shape, T(0));
    for (int y = 0; y < h; ++y)
      for (int x2 = 0; x2 < w; ++x2)
        for (int c = 0; c < C; ++c) gx.at(y, x2, c) = g.at(y, x2, c);
    t.acc(xi, gx);
  });
}

template <typename T>
Var<T> pad_to_multiple(Var<T> x, int m) {
  const int H = x.val().shape[0], W = x.val().shape[1];
  const int ah = (m - H % m) % m;
  const int aw = (m - W % m) % m;
  return pad_edge(x, ah, aw);
}

}  // namespace wmnet
