#pragma once

#include "steamcast/tensor.hpp"

namespace steamcast {

// Primitive dense ops. All are pure and use fixed reduction orders, so
// identical inputs give bit-identical outputs.

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m,k] x [n,k]^T -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// [m,k]^T x [m,n] -> [k,n]
Tensor matmul_tn(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

// Row-stabilized softmax over the last dimension of a [m,n] matrix.
Tensor softmax_rows(const Tensor& a);

// Cross-correlation with zero same-padding, odd k, H' = ceil(H/stride).
// x: [c_in,H,W], w: [c_out,c_in,k,k] -> [c_out,H',W']
Tensor conv2d(const Tensor& x, const Tensor& w, int stride);

// Batched variant with optional bias; x: [B,c_in,H,W] -> [B,c_out,H',W'].
Tensor conv2d_batched(const Tensor& x, const Tensor& w, const Tensor* bias, int stride);

// Per-row standardization of a [b,d] matrix with epsilon 1e-5 inside the
// square root, then the affine gain/bias (each length d).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

inline constexpr real kLayerNormEps = 1e-5;

real gelu_scalar(real x);
real gelu_grad_scalar(real x);

int conv_out_extent(int extent, int stride);

// Raw kernels (row-major, caller-checked extents). C is overwritten.
namespace kern {
void mm_nn(const real* a, const real* b, real* c, int m, int k, int n);
void mm_nt(const real* a, const real* b, real* c, int m, int k, int n);
void mm_tn(const real* a, const real* b, real* c, int m, int k, int n);
}  // namespace kern

}  // namespace steamcast
