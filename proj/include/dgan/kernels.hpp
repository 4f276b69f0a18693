#pragma once

#include "dgan/tensor.hpp"

namespace dgan::kernels {

// Output side length of a convolution along one axis.
inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}
// Output side length of the matching transposed convolution.
inline int convt_out_dim(int in, int k, int stride, int pad) {
    return (in - 1) * stride - 2 * pad + k;
}

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc);

// out[n,co,p,q] = sum_{ci,u,v} x[n,ci,p*stride-pad+u,q*stride-pad+v] * w[co,ci,u,v]
// Zero padding; out-of-range taps contribute zero.
template <typename T>
void conv2d(const TensorT<T>& x, const TensorT<T>& w, int stride, int pad, TensorT<T>& out);

// Exact linear adjoint of conv2d with the same kernel/stride/pad. out_h/out_w give
// the input-side dims being reconstructed (ambiguous from the score dims alone).
template <typename T>
void conv2d_transpose(const TensorT<T>& y, const TensorT<T>& w, int stride, int pad,
                      int out_h, int out_w, TensorT<T>& out);

// dK[co,ci,u,v] = sum_{n,p,q} g[n,co,p,q] * x[n,ci,p*stride-pad+u,q*stride-pad+v]
template <typename T>
void conv2d_kernel_grad(const TensorT<T>& x, const TensorT<T>& g, int stride, int pad,
                        int kh, int kw, TensorT<T>& dk);

// 2x2 max pooling, stride 2, floor on odd dims. Ties break to the first element
// in scan order, which keeps the backward scatter deterministic.
template <typename T>
void maxpool2(const TensorT<T>& x, TensorT<T>& out);
template <typename T>
void maxpool2_backward(const TensorT<T>& g, const TensorT<T>& x, TensorT<T>& dx);

// out[n,0,i,j] = scale * <a[n,i,:,:], b[n,j,:,:]>   (per-sample channel Gram)
template <typename T>
void xcorr(const TensorT<T>& a, const TensorT<T>& b, double scale, TensorT<T>& out);

// out[n,i,:,:] = scale * sum_j m[n,0,i,j] * f[n,j,:,:]
template <typename T>
void chanmix(const TensorT<T>& m, const TensorT<T>& f, double scale, TensorT<T>& out);

}  // namespace dgan::kernels
