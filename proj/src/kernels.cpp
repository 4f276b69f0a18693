#include "dgan/kernels.hpp"

#include <cblas.h>
#include <cstdlib>
#include <cstring>
#include <vector>

// Virtualized CPUs often mask the CPUID model, which makes OpenBLAS fall back
// to a generic (3x slower) kernel. Pick the AVX-512 path explicitly when the
// instruction set is there and nothing was requested from outside. Must run
// before OpenBLAS's own init, hence the constructor priority and the static
// link preference in CMake.
#if defined(__x86_64__) && defined(__GNUC__)
__attribute__((constructor(101))) static void dgan_select_blas_core() {
    if (!std::getenv("OPENBLAS_CORETYPE") && __builtin_cpu_supports("avx512f"))
        setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
}
#endif

namespace dgan::kernels {

template <>
void gemm<float>(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
                 int lda, const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c,
                ldc);
}

template <>
void gemm<double>(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
                  int lda, const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c,
                ldc);
}

namespace {

// col is (C*kh*kw) x (ho*wo), row-major.
template <typename T>
void im2col(const T* img, int c, int h, int w, int kh, int kw, int stride, int pad, int ho,
            int wo, T* col) {
    const std::int64_t plane = std::int64_t(ho) * wo;
    for (int ci = 0; ci < c; ++ci) {
        for (int u = 0; u < kh; ++u) {
            for (int v = 0; v < kw; ++v) {
                T* dst = col + (std::int64_t(ci) * kh * kw + u * kw + v) * plane;
                const T* src = img + std::int64_t(ci) * h * w;
                for (int p = 0; p < ho; ++p) {
                    int i = p * stride - pad + u;
                    if (i < 0 || i >= h) {
                        std::memset(dst + std::int64_t(p) * wo, 0, sizeof(T) * wo);
                        continue;
                    }
                    for (int q = 0; q < wo; ++q) {
                        int j = q * stride - pad + v;
                        dst[std::int64_t(p) * wo + q] =
                            (j >= 0 && j < w) ? src[std::int64_t(i) * w + j] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, int c, int h, int w, int kh, int kw, int stride, int pad, int ho,
                int wo, T* img) {
    const std::int64_t plane = std::int64_t(ho) * wo;
    for (int ci = 0; ci < c; ++ci) {
        for (int u = 0; u < kh; ++u) {
            for (int v = 0; v < kw; ++v) {
                const T* src = col + (std::int64_t(ci) * kh * kw + u * kw + v) * plane;
                T* dst = img + std::int64_t(ci) * h * w;
                for (int p = 0; p < ho; ++p) {
                    int i = p * stride - pad + u;
                    if (i < 0 || i >= h) continue;
                    for (int q = 0; q < wo; ++q) {
                        int j = q * stride - pad + v;
                        if (j >= 0 && j < w) dst[std::int64_t(i) * w + j] += src[std::int64_t(p) * wo + q];
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
void conv2d(const TensorT<T>& x, const TensorT<T>& w, int stride, int pad, TensorT<T>& out) {
    const Shape4 xs = x.shape(), ws = w.shape();
    const int ho = conv_out_dim(xs.h, ws.h, stride, pad);
    const int wo = conv_out_dim(xs.w, ws.w, stride, pad);
    out = TensorT<T>({xs.n, ws.n, ho, wo});
    const std::int64_t k = std::int64_t(ws.c) * ws.h * ws.w;
    const std::int64_t cols = std::int64_t(ho) * wo;
    std::vector<T> col(k * cols);
    for (int n = 0; n < xs.n; ++n) {
        im2col(x.data() + std::int64_t(n) * xs.c * xs.h * xs.w, xs.c, xs.h, xs.w, ws.h, ws.w,
               stride, pad, ho, wo, col.data());
        gemm<T>(false, false, ws.n, int(cols), int(k), T(1), w.data(), int(k), col.data(),
                int(cols), T(0), out.data() + std::int64_t(n) * ws.n * cols, int(cols));
    }
}

template <typename T>
void conv2d_transpose(const TensorT<T>& y, const TensorT<T>& w, int stride, int pad, int out_h,
                      int out_w, TensorT<T>& out) {
    const Shape4 ys = y.shape(), ws = w.shape();
    out = TensorT<T>({ys.n, ws.c, out_h, out_w});
    const std::int64_t k = std::int64_t(ws.c) * ws.h * ws.w;
    const std::int64_t cols = std::int64_t(ys.h) * ys.w;
    std::vector<T> col(k * cols);
    for (int n = 0; n < ys.n; ++n) {
        // col = W^T (k x Co) * Y (Co x cols)
        gemm<T>(true, false, int(k), int(cols), ws.n, T(1), w.data(), int(k),
                y.data() + std::int64_t(n) * ys.c * cols, int(cols), T(0), col.data(),
                int(cols));
        col2im_add(col.data(), ws.c, out_h, out_w, ws.h, ws.w, stride, pad, ys.h, ys.w,
                   out.data() + std::int64_t(n) * ws.c * out_h * out_w);
    }
}

template <typename T>
void conv2d_kernel_grad(const TensorT<T>& x, const TensorT<T>& g, int stride, int pad, int kh,
                        int kw, TensorT<T>& dk) {
    const Shape4 xs = x.shape(), gs = g.shape();
    dk = TensorT<T>({gs.c, xs.c, kh, kw});
    const std::int64_t k = std::int64_t(xs.c) * kh * kw;
    const std::int64_t cols = std::int64_t(gs.h) * gs.w;
    std::vector<T> col(k * cols);
    for (int n = 0; n < xs.n; ++n) {
        im2col(x.data() + std::int64_t(n) * xs.c * xs.h * xs.w, xs.c, xs.h, xs.w, kh, kw,
               stride, pad, gs.h, gs.w, col.data());
        // dK (Co x k) += G (Co x cols) * col^T (cols x k)
        gemm<T>(false, true, gs.c, int(k), int(cols), T(1),
                g.data() + std::int64_t(n) * gs.c * cols, int(cols), col.data(), int(cols),
                n == 0 ? T(0) : T(1), dk.data(), int(k));
    }
}

template <typename T>
void maxpool2(const TensorT<T>& x, TensorT<T>& out) {
    const Shape4 s = x.shape();
    const int ho = s.h / 2, wo = s.w / 2;
    out = TensorT<T>({s.n, s.c, ho, wo});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int p = 0; p < ho; ++p)
                for (int q = 0; q < wo; ++q) {
                    T m = x.at(n, c, 2 * p, 2 * q);
                    m = std::max(m, x.at(n, c, 2 * p, 2 * q + 1));
                    m = std::max(m, x.at(n, c, 2 * p + 1, 2 * q));
                    m = std::max(m, x.at(n, c, 2 * p + 1, 2 * q + 1));
                    out.at(n, c, p, q) = m;
                }
}

template <typename T>
void maxpool2_backward(const TensorT<T>& g, const TensorT<T>& x, TensorT<T>& dx) {
    const Shape4 s = x.shape();
    const int ho = s.h / 2, wo = s.w / 2;
    dx = TensorT<T>(s);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int p = 0; p < ho; ++p)
                for (int q = 0; q < wo; ++q) {
                    int bi = 2 * p, bj = 2 * q;
                    T m = x.at(n, c, bi, bj);
                    if (x.at(n, c, 2 * p, 2 * q + 1) > m) { m = x.at(n, c, 2 * p, 2 * q + 1); bi = 2 * p; bj = 2 * q + 1; }
                    if (x.at(n, c, 2 * p + 1, 2 * q) > m) { m = x.at(n, c, 2 * p + 1, 2 * q); bi = 2 * p + 1; bj = 2 * q; }
                    if (x.at(n, c, 2 * p + 1, 2 * q + 1) > m) { bi = 2 * p + 1; bj = 2 * q + 1; }
                    dx.at(n, c, bi, bj) += g.at(n, c, p, q);
                }
}

template <typename T>
void xcorr(const TensorT<T>& a, const TensorT<T>& b, double scale, TensorT<T>& out) {
    const Shape4 as = a.shape(), bs = b.shape();
    const std::int64_t m = std::int64_t(as.h) * as.w;
    out = TensorT<T>({as.n, 1, as.c, bs.c});
    for (int n = 0; n < as.n; ++n)
        gemm<T>(false, true, as.c, bs.c, int(m), T(scale), a.data() + std::int64_t(n) * as.c * m,
                int(m), b.data() + std::int64_t(n) * bs.c * m, int(m), T(0),
                out.data() + std::int64_t(n) * as.c * bs.c, bs.c);
}

template <typename T>
void chanmix(const TensorT<T>& m, const TensorT<T>& f, double scale, TensorT<T>& out) {
    const Shape4 ms = m.shape(), fs = f.shape();
    const std::int64_t plane = std::int64_t(fs.h) * fs.w;
    out = TensorT<T>({fs.n, ms.h, fs.h, fs.w});
    for (int n = 0; n < fs.n; ++n)
        gemm<T>(false, false, ms.h, int(plane), ms.w, T(scale),
                m.data() + std::int64_t(n) * ms.h * ms.w, ms.w,
                f.data() + std::int64_t(n) * fs.c * plane, int(plane), T(0),
                out.data() + std::int64_t(n) * ms.h * plane, int(plane));
}

#define DGAN_INSTANTIATE(T)                                                                     \
    template void conv2d<T>(const TensorT<T>&, const TensorT<T>&, int, int, TensorT<T>&);       \
    template void conv2d_transpose<T>(const TensorT<T>&, const TensorT<T>&, int, int, int, int, \
                                      TensorT<T>&);                                             \
    template void conv2d_kernel_grad<T>(const TensorT<T>&, const TensorT<T>&, int, int, int,    \
                                        int, TensorT<T>&);                                      \
    template void maxpool2<T>(const TensorT<T>&, TensorT<T>&);                                  \
    template void maxpool2_backward<T>(const TensorT<T>&, const TensorT<T>&, TensorT<T>&);      \
    template void xcorr<T>(const TensorT<T>&, const TensorT<T>&, double, TensorT<T>&);          \
    template void chanmix<T>(const TensorT<T>&, const TensorT<T>&, double, TensorT<T>&);

DGAN_INSTANTIATE(float)
DGAN_INSTANTIATE(double)

}  // namespace dgan::kernels
