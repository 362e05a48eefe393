#include "steamcast/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace steamcast {

namespace kern {

void mm_nn(const real* a, const real* b, real* c, int m, int k, int n) {
    std::memset(c, 0, sizeof(real) * static_cast<std::size_t>(m) * n);
    for (int i = 0; i < m; ++i) {
        real* ci = c + static_cast<std::size_t>(i) * n;
        const real* ai = a + static_cast<std::size_t>(i) * k;
        for (int l = 0; l < k; ++l) {
            real av = ai[l];
            const real* bl = b + static_cast<std::size_t>(l) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bl[j];
        }
    }
}

// c[i,j] = dot(a_row_i, b_row_j); a: [m,k], b: [n,k]
void mm_nt(const real* a, const real* b, real* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const real* ai = a + static_cast<std::size_t>(i) * k;
        real* ci = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const real* bj = b + static_cast<std::size_t>(j) * k;
            real acc = 0.0;
            for (int l = 0; l < k; ++l) acc += ai[l] * bj[l];
            ci[j] = acc;
        }
    }
}

// c = a^T b; a: [m,k], b: [m,n], c: [k,n]
void mm_tn(const real* a, const real* b, real* c, int m, int k, int n) {
    std::memset(c, 0, sizeof(real) * static_cast<std::size_t>(k) * n);
    for (int i = 0; i < m; ++i) {
        const real* ai = a + static_cast<std::size_t>(i) * k;
        const real* bi = b + static_cast<std::size_t>(i) * n;
        for (int l = 0; l < k; ++l) {
            real av = ai[l];
            real* cl = c + static_cast<std::size_t>(l) * n;
            for (int j = 0; j < n; ++j) cl[j] += av * bi[j];
        }
    }
}

}  // namespace kern

static void require_matrix(const Tensor& t, const char* what) {
    if (t.rank() != 2) throw DimensionError(std::string(what) + ": expected rank-2 tensor");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    if (a.dim(1) != b.dim(0))
        throw DimensionError("matmul: inner extents disagree (" + std::to_string(a.dim(1)) +
                             " vs " + std::to_string(b.dim(0)) + ")");
    Tensor c({a.dim(0), b.dim(1)});
    kern::mm_nn(a.data.data(), b.data.data(), c.data.data(), a.dim(0), a.dim(1), b.dim(1));
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    if (a.dim(1) != b.dim(1)) throw DimensionError("matmul_nt: inner extents disagree");
    Tensor c({a.dim(0), b.dim(0)});
    kern::mm_nt(a.data.data(), b.data.data(), c.data.data(), a.dim(0), a.dim(1), b.dim(0));
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_tn");
    require_matrix(b, "matmul_tn");
    if (a.dim(0) != b.dim(0)) throw DimensionError("matmul_tn: inner extents disagree");
    Tensor c({a.dim(1), b.dim(1)});
    kern::mm_tn(a.data.data(), b.data.data(), c.data.data(), a.dim(0), a.dim(1), b.dim(1));
    return c;
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    Tensor t({a.dim(1), a.dim(0)});
    for (int i = 0; i < a.dim(0); ++i)
        for (int j = 0; j < a.dim(1); ++j) t.at(j, i) = a.at(i, j);
    return t;
}

Tensor softmax_rows(const Tensor& a) {
    require_matrix(a, "softmax_rows");
    const int m = a.dim(0), n = a.dim(1);
    Tensor y({m, n});
    for (int i = 0; i < m; ++i) {
        const real* row = a.data.data() + static_cast<std::size_t>(i) * n;
        real* out = y.data.data() + static_cast<std::size_t>(i) * n;
        real mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        real sum = 0.0;
        for (int j = 0; j < n; ++j) {
            out[j] = std::exp(row[j] - mx);
            sum += out[j];
        }
        real inv = 1.0 / sum;
        for (int j = 0; j < n; ++j) out[j] *= inv;
    }
    return y;
}

int conv_out_extent(int extent, int stride) { return (extent + stride - 1) / stride; }

Tensor conv2d_batched(const Tensor& x, const Tensor& w, const Tensor* bias, int stride) {
    if (x.rank() != 4 || w.rank() != 4) throw DimensionError("conv2d: expected rank-4 tensors");
    const int batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(0), k = w.dim(2);
    if (w.dim(1) != cin) throw DimensionError("conv2d: channel mismatch");
    if (w.dim(3) != k || k % 2 == 0) throw DimensionError("conv2d: kernel must be square and odd");
    if (h < k || wd < k) throw DimensionError("conv2d: input smaller than kernel");
    if (stride < 1) throw DimensionError("conv2d: stride must be positive");
    const int oh = conv_out_extent(h, stride), ow = conv_out_extent(wd, stride);
    const int pad = (k - 1) / 2;
    Tensor y({batch, cout, oh, ow});
    for (int b = 0; b < batch; ++b) {
        for (int co = 0; co < cout; ++co) {
            const real bval = bias ? bias->at(co) : 0.0;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    real acc = bval;
                    const int iy0 = oy * stride - pad, ix0 = ox * stride - pad;
                    for (int ci = 0; ci < cin; ++ci) {
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = iy0 + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const int ix = ix0 + kx;
                                if (ix < 0 || ix >= wd) continue;
                                acc += x.at(b, ci, iy, ix) * w.at(co, ci, ky, kx);
                            }
                        }
                    }
                    y.at(b, co, oy, ox) = acc;
                }
            }
        }
    }
    return y;
}

Tensor conv2d(const Tensor& x, const Tensor& w, int stride) {
    if (x.rank() != 3) throw DimensionError("conv2d: expected [c_in,H,W] input");
    Tensor xb({1, x.dim(0), x.dim(1), x.dim(2)}, x.data);
    Tensor yb = conv2d_batched(xb, w, nullptr, stride);
    return Tensor({yb.dim(1), yb.dim(2), yb.dim(3)}, std::move(yb.data));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
    require_matrix(x, "layer_norm");
    const int b = x.dim(0), d = x.dim(1);
    if (d < 2) throw DimensionError("layer_norm: row length must be >= 2");
    if (gain.numel() != d || bias.numel() != d)
        throw DimensionError("layer_norm: gain/bias length mismatch");
    Tensor y({b, d});
    for (int i = 0; i < b; ++i) {
        const real* row = x.data.data() + static_cast<std::size_t>(i) * d;
        real* out = y.data.data() + static_cast<std::size_t>(i) * d;
        real mean = 0.0;
        for (int j = 0; j < d; ++j) mean += row[j];
        mean /= d;
        real var = 0.0;
        for (int j = 0; j < d; ++j) {
            real c = row[j] - mean;
            var += c * c;
        }
        var /= d;
        real inv = 1.0 / std::sqrt(var + kLayerNormEps);
        for (int j = 0; j < d; ++j)
            out[j] = (row[j] - mean) * inv * gain.at(j) + bias.at(j);
    }
    return y;
}

real gelu_scalar(real x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

real gelu_grad_scalar(real x) {
    const real phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    const real Phi = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    return Phi + x * phi;
}

}  // namespace steamcast
