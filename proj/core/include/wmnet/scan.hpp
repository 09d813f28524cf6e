#pragma once

#include "wmnet/autograd.hpp"

namespace wmnet {

// State-space recurrence over a token sequence:
//   h(t) = a_t * h(t-1) + B_t x_t^T        h: (N, C), h(0) = 0
//   y(t) = C_t^T h(t) + D o x_t
// with per-step scalar decay a_t, input/output maps B_t, C_t in R^N and a
// per-channel skip D.

namespace scan_detail {

template <typename T>
void validate(const Tensor<T>& x, const Tensor<T>& a, const Tensor<T>& B,
              const Tensor<T>& C, const Tensor<T>& D) {
  WMNET_CHECK(x.ndim() == 2, "ssd_scan: x must be (L, C)");
  const int L = x.shape[0];
  WMNET_CHECK(a.size() == L, "ssd_scan: a must have length L");
  WMNET_CHECK(B.ndim() == 2 && B.shape[0] == L, "ssd_scan: B must be (L, N)");
  WMNET_CHECK(C.shape == B.shape, "ssd_scan: C must match B");
  WMNET_CHECK(D.size() == x.shape[1], "ssd_scan: D must have length C");
  WMNET_CHECK(x.all_finite() && a.all_finite() && B.all_finite() && C.all_finite() &&
                  D.all_finite(),
              "ssd_scan: non-finite parameters");
}

/// y from stored states.
template <typename T>
Tensor<T> emit(const Tensor<T>& x, const Tensor<T>& C, const Tensor<T>& D,
               const Tensor<T>& h) {
  const int L = x.shape[0], Cd = x.shape[1], N = C.shape[1];
  Tensor<T> y({L, Cd});
  for (int t = 0; t < L; ++t)
    for (int c = 0; c < Cd; ++c) {
      T acc = D[c] * x.at(t, c);
      for (int n = 0; n < N; ++n)
        acc += C.at(t, n) * h[(static_cast<int64_t>(t) * N + n) * Cd + c];
      y.at(t, c) = acc;
    }
  return y;
}

}  // namespace scan_detail

/// Reference sequential recurrence. `h_out`, when given, receives all states
/// as an (L, N, C) tensor.
template <typename T>
Tensor<T> ssd_scan_seq(const Tensor<T>& x, const Tensor<T>& a, const Tensor<T>& B,
                       const Tensor<T>& C, const Tensor<T>& D,
                       Tensor<T>* h_out = nullptr) {
  scan_detail::validate(x, a, B, C, D);
  const int L = x.shape[0], Cd = x.shape[1], N = B.shape[1];
  Tensor<T> h({L, N, Cd});
  std::vector<T> prev(static_cast<size_t>(N) * Cd, T(0));
  for (int t = 0; t < L; ++t) {
    const T at = a[t];
    for (int n = 0; n < N; ++n) {
      const T bn = B.at(t, n);
      T* row = &h[(static_cast<int64_t>(t) * N + n) * Cd];
      const T* prow = &prev[static_cast<size_t>(n) * Cd];
      for (int c = 0; c < Cd; ++c) row[c] = at * prow[c] + bn * x.at(t, c);
    }
    std::copy(&h[static_cast<int64_t>(t) * N * Cd],
              &h[static_cast<int64_t>(t) * N * Cd] + static_cast<int64_t>(N) * Cd,
              prev.data());
  }
  Tensor<T> y = scan_detail::emit(x, C, D, h);
  if (h_out) *h_out = std::move(h);
  return y;
}

/// Two-pass chunked scan: chunk-local recurrences with zero entry state,
/// then a carry sweep that propagates the chunk-boundary states through the
/// cumulative decay products. Deterministic for a fixed chunk size.
template <typename T>
Tensor<T> ssd_scan_chunked(const Tensor<T>& x, const Tensor<T>& a, const Tensor<T>& B,
                           const Tensor<T>& C, const Tensor<T>& D, int chunk,
                           Tensor<T>* h_out = nullptr) {
  scan_detail::validate(x, a, B, C, D);
  WMNET_CHECK(chunk >= 1, "ssd_scan: chunk size must be positive");
  const int L = x.shape[0], Cd = x.shape[1], N = B.shape[1];
  Tensor<T> h({L, N, Cd});
  Tensor<T> prod({L});

  // Pass 1: independent chunk-local scans.
  for (int t0 = 0; t0 < L; t0 += chunk) {
    const int t1 = std::min(t0 + chunk, L);
    T p = T(1);
    for (int t = t0; t < t1; ++t) {
      const T at = a[t];
      p *= at;
      prod[t] = p;
      for (int n = 0; n < N; ++n) {
        const T bn = B.at(t, n);
        T* row = &h[(static_cast<int64_t>(t) * N + n) * Cd];
        if (t == t0) {
          for (int c = 0; c < Cd; ++c) row[c] = bn * x.at(t, c);
        } else {
          const T* prow = &h[(static_cast<int64_t>(t - 1) * N + n) * Cd];
          for (int c = 0; c < Cd; ++c) row[c] = at * prow[c] + bn * x.at(t, c);
        }
      }
    }
  }

  // Pass 2: carry chunk-boundary states forward.
  std::vector<T> carry(static_cast<size_t>(N) * Cd, T(0));
  for (int t0 = 0; t0 < L; t0 += chunk) {
    const int t1 = std::min(t0 + chunk, L);
    for (int t = t0; t < t1; ++t) {
      const T p = prod[t];
      if (p != T(0)) {
        for (int n = 0; n < N; ++n) {
          T* row = &h[(static_cast<int64_t>(t) * N + n) * Cd];
          const T* crow = &carry[static_cast<size_t>(n) * Cd];
          for (int c = 0; c < Cd; ++c) row[c] += p * crow[c];
        }
      }
    }
    std::copy(&h[static_cast<int64_t>(t1 - 1) * N * Cd],
              &h[static_cast<int64_t>(t1 - 1) * N * Cd] + static_cast<int64_t>(N) * Cd,
              carry.data());
  }

  Tensor<T> y = scan_detail::emit(x, C, D, h);
  if (h_out) *h_out = std::move(h);
  return y;
}

/// Autograd wrapper. Uses the chunked kernel; the reverse pass runs the
/// adjoint recurrence backward in time over the stored states.
template <typename T>
Var<T> ssd_scan(Var<T> x, Var<T> a, Var<T> B, Var<T> C, Var<T> D, int chunk = 64) {
  auto h = std::make_shared<Tensor<T>>();
  Tensor<T> y = ssd_scan_chunked(x.val(), a.val(), B.val(), C.val(), D.val(), chunk, h.get());
  const int L = x.val().shape[0], Cd = x.val().shape[1], N = B.val().shape[1];
  int xi = x.idx, ai = a.idx, Bi = B.idx, Ci = C.idx, Di = D.idx;
  return x.tape->make(
      std::move(y), {xi, ai, Bi, Ci, Di}, [=](Tape<T>& t, int self) {
        const Tensor<T>& g = t.node(self).grad;
        const Tensor<T>& xv = t.node(xi).value;
        const Tensor<T>& av = t.node(ai).value;
        const Tensor<T>& Bv = t.node(Bi).value;
        const Tensor<T>& Cv = t.node(Ci).value;
        const Tensor<T>& Dv = t.node(Di).value;
        Tensor<T> gx(xv.shape, T(0)), ga(av.shape, T(0)), gB(Bv.shape, T(0)),
            gC(Cv.shape, T(0)), gD(Dv.shape, T(0));
        std::vector<T> G(static_cast<size_t>(N) * Cd, T(0));  // dL/dh_t
        auto hrow = [&](int tt, int n) { return &(*h)[(static_cast<int64_t>(tt) * N + n) * Cd]; };
        for (int tt = L - 1; tt >= 0; --tt) {
          // G_t = C_t g_t^T + a_{t+1} G_{t+1}
          const T anext = (tt + 1 < L) ? av[tt + 1] : T(0);
          for (int n = 0; n < N; ++n) {
            const T cn = Cv.at(tt, n);
            T* Grow = &G[static_cast<size_t>(n) * Cd];
            for (int c = 0; c < Cd; ++c) Grow[c] = cn * g.at(tt, c) + anext * Grow[c];
          }
          // dC_t[n] = sum_c g_t[c] h_t[n, c]
          for (int n = 0; n < N; ++n) {
            T acc = 0;
            const T* hr = hrow(tt, n);
            for (int c = 0; c < Cd; ++c) acc += g.at(tt, c) * hr[c];
            gC.at(tt, n) = acc;
          }
          // da_t = <G_t, h_{t-1}>
          if (tt > 0) {
            T acc = 0;
            for (int n = 0; n < N; ++n) {
              const T* hp = hrow(tt - 1, n);
              const T* Grow = &G[static_cast<size_t>(n) * Cd];
              for (int c = 0; c < Cd; ++c) acc += Grow[c] * hp[c];
            }
            ga[tt] = acc;
          }
          // dB_t[n] = sum_c G_t[n, c] x_t[c]; dx_t gets both paths
          for (int n = 0; n < N; ++n) {
            const T* Grow = &G[static_cast<size_t>(n) * Cd];
            T acc = 0;
            const T bn = Bv.at(tt, n);
            for (int c = 0; c < Cd; ++c) {
              acc += Grow[c] * xv.at(tt, c);
              gx.at(tt, c) += Grow[c] * bn;
            }
            gB.at(tt, n) = acc;
          }
          for (int c = 0; c < Cd; ++c) {
            gx.at(tt, c) += Dv[c] * g.at(tt, c);
            gD[c] += g.at(tt, c) * xv.at(tt, c);
          }
        }
        t.acc(xi, gx);
        t.acc(ai, ga);
        t.acc(Bi, gB);
        t.acc(Ci, gC);
        t.acc(Di, gD);
      });
}

}  // namespace wmnet
