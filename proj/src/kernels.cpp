#include "endo/kernels.hpp"

#include <algorithm>
#include <cmath>

#include <cblas.h>

namespace endo::kernels {
namespace {

template <typename T>
Tensor4<T> pad1(const Tensor4<T>& in) {
    Tensor4<T> out(in.n, in.c, in.h + 2, in.w + 2);
    const int wp = in.w + 2;
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < in.n; ++n)
        for (int c = 0; c < in.c; ++c) {
            const T* src = in.plane(n, c);
            T* dst = out.plane(n, c);
            for (int y = 0; y < in.h; ++y)
                std::copy(src + static_cast<std::size_t>(y) * in.w, src + static_cast<std::size_t>(y + 1) * in.w,
                          dst + static_cast<std::size_t>(y + 1) * wp + 1);
        }
    return out;
}

// Direct correlation of a zero-padded input (h+2 x w+2 planes) with 3x3
// kernels laid out [cout][cin][9]. Vectorizes along rows, so it suits wide
// planes with few channels.
template <typename T>
Tensor4<T> conv3x3_padded(const Tensor4<T>& pad, const T* weight, const T* bias, int cout) {
    const int h = pad.h - 2, w = pad.w - 2, wp = pad.w, cin = pad.c;
    Tensor4<T> out(pad.n, cout, h, w);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < pad.n; ++n)
        for (int oc = 0; oc < cout; ++oc) {
            T* o = out.plane(n, oc);
            std::fill(o, o + out.plane_size(), bias ? bias[oc] : T{});
            for (int ic = 0; ic < cin; ++ic) {
                const T* k = weight + (static_cast<std::size_t>(oc) * cin + ic) * 9;
                const T k0 = k[0], k1 = k[1], k2 = k[2], k3 = k[3], k4 = k[4], k5 = k[5], k6 = k[6], k7 = k[7], k8 = k[8];
                const T* p = pad.plane(n, ic);
                for (int y = 0; y < h; ++y) {
                    const T* r0 = p + static_cast<std::size_t>(y) * wp;
                    const T* r1 = r0 + wp;
                    const T* r2 = r1 + wp;
                    T* orow = o + static_cast<std::size_t>(y) * w;
#pragma omp simd
                    for (int x = 0; x < w; ++x)
                        orow[x] += k0 * r0[x] + k1 * r0[x + 1] + k2 * r0[x + 2] + k3 * r1[x] + k4 * r1[x + 1] +
                                   k5 * r1[x + 2] + k6 * r2[x] + k7 * r2[x + 1] + k8 * r2[x + 2];
                }
            }
        }
    return out;
}

template <typename T>
void conv3x3_direct_backward(const Tensor4<T>& in, const std::vector<T>& weight, const Tensor4<T>& grad_out, Tensor4<T>* grad_in,
                             std::vector<T>& grad_weight) {
    const int cin = in.c, cout = grad_out.c, h = in.h, w = in.w, wp = w + 2;
    if (grad_in) {
        // Same-padded correlation of grad_out with the spatially flipped,
        // channel-transposed kernels.
        std::vector<T> flipped(weight.size());
        for (int oc = 0; oc < cout; ++oc)
            for (int ic = 0; ic < cin; ++ic)
                for (int t = 0; t < 9; ++t)
                    flipped[(static_cast<std::size_t>(ic) * cout + oc) * 9 + static_cast<std::size_t>(8 - t)] =
                        weight[(static_cast<std::size_t>(oc) * cin + ic) * 9 + static_cast<std::size_t>(t)];
        *grad_in = conv3x3_padded(pad1(grad_out), flipped.data(), static_cast<const T*>(nullptr), cin);
    }
    const auto pad = pad1(in);
#pragma omp parallel for collapse(2) schedule(static)
    for (int oc = 0; oc < cout; ++oc)
        for (int ic = 0; ic < cin; ++ic) {
            T a0{}, a1{}, a2{}, a3{}, a4{}, a5{}, a6{}, a7{}, a8{};
            for (int n = 0; n < in.n; ++n) {
                const T* g = grad_out.plane(n, oc);
                const T* p = pad.plane(n, ic);
                for (int y = 0; y < h; ++y) {
                    const T* gr = g + static_cast<std::size_t>(y) * w;
                    const T* r0 = p + static_cast<std::size_t>(y) * wp;
                    const T* r1 = r0 + wp;
                    const T* r2 = r1 + wp;
#pragma omp simd reduction(+ : a0, a1, a2, a3, a4, a5, a6, a7, a8)
                    for (int x = 0; x < w; ++x) {
                        const T gv = gr[x];
                        a0 += gv * r0[x];
                        a1 += gv * r0[x + 1];
                        a2 += gv * r0[x + 2];
                        a3 += gv * r1[x];
                        a4 += gv * r1[x + 1];
                        a5 += gv * r1[x + 2];
                        a6 += gv * r2[x];
                        a7 += gv * r2[x + 1];
                        a8 += gv * r2[x + 2];
                    }
                }
            }
            T* gw = grad_weight.data() + (static_cast<std::size_t>(oc) * cin + ic) * 9;
            gw[0] += a0;
            gw[1] += a1;
            gw[2] += a2;
            gw[3] += a3;
            gw[4] += a4;
            gw[5] += a5;
            gw[6] += a6;
            gw[7] += a7;
            gw[8] += a8;
        }
}

// Planes at least this wide use the direct kernel; narrower ones go through
// im2col + GEMM.
constexpr int kDirectMinWidth = 32;

// Column matrix for a 3x3 "same" correlation: row ic*9 + t holds, for every
// (sample, pixel), the input value under tap t (zero outside the plane).
template <typename T>
std::vector<T> im2col3x3(const Tensor4<T>& in) {
    const int h = in.h, w = in.w;
    const std::size_t ps = in.plane_size(), np = ps * static_cast<std::size_t>(in.n);
    std::vector<T> col(static_cast<std::size_t>(in.c) * 9 * np);
#pragma omp parallel for collapse(2) schedule(static)
    for (int ic = 0; ic < in.c; ++ic)
        for (int t = 0; t < 9; ++t) {
            const int dy = t / 3 - 1, dx = t % 3 - 1;
            T* row = col.data() + (static_cast<std::size_t>(ic) * 9 + static_cast<std::size_t>(t)) * np;
            for (int n = 0; n < in.n; ++n) {
                const T* src = in.plane(n, ic);
                T* dst = row + static_cast<std::size_t>(n) * ps;
                for (int y = 0; y < h; ++y) {
                    T* d = dst + static_cast<std::size_t>(y) * w;
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) {
                        std::fill(d, d + w, T{});
                        continue;
                    }
                    const T* s = src + static_cast<std::size_t>(sy) * w;
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    for (int x = 0; x < x0; ++x) d[x] = T{};
                    for (int x = x0; x < x1; ++x) d[x] = s[x + dx];
                    for (int x = x1; x < w; ++x) d[x] = T{};
                }
            }
        }
    return col;
}

// Adjoint of im2col3x3: scatter-adds column gradients back onto the planes.
template <typename T>
void col2im3x3(const std::vector<T>& col, Tensor4<T>& out) {
    const int h = out.h, w = out.w;
    const std::size_t ps = out.plane_size(), np = ps * static_cast<std::size_t>(out.n);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < out.n; ++n)
        for (int ic = 0; ic < out.c; ++ic) {
            T* dst = out.plane(n, ic);
            std::fill(dst, dst + ps, T{});
            for (int t = 0; t < 9; ++t) {
                const int dy = t / 3 - 1, dx = t % 3 - 1;
                const T* src = col.data() + (static_cast<std::size_t>(ic) * 9 + static_cast<std::size_t>(t)) * np +
                               static_cast<std::size_t>(n) * ps;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    const T* s = src + static_cast<std::size_t>(y) * w;
                    T* d = dst + static_cast<std::size_t>(sy) * w;
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    for (int x = x0; x < x1; ++x) d[x + dx] += s[x];
                }
            }
        }
}

// Row-major C = alpha * op(A) * op(B) + beta * C.
void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
                beta, c, ldc);
}
void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
                beta, c, ldc);
}

// [c][n * hw] matrix <-> NCHW tensor.
template <typename T>
std::vector<T> to_channel_major(const Tensor4<T>& x) {
    const std::size_t ps = x.plane_size(), np = ps * static_cast<std::size_t>(x.n);
    std::vector<T> m(static_cast<std::size_t>(x.c) * np);
#pragma omp parallel for collapse(2) schedule(static)
    for (int c = 0; c < x.c; ++c)
        for (int n = 0; n < x.n; ++n)
            std::copy(x.plane(n, c), x.plane(n, c) + ps, m.data() + static_cast<std::size_t>(c) * np + static_cast<std::size_t>(n) * ps);
    return m;
}

template <typename T>
void from_channel_major(const std::vector<T>& m, Tensor4<T>& x) {
    const std::size_t ps = x.plane_size(), np = ps * static_cast<std::size_t>(x.n);
#pragma omp parallel for collapse(2) schedule(static)
    for (int c = 0; c < x.c; ++c)
        for (int n = 0; n < x.n; ++n) {
            const T* src = m.data() + static_cast<std::size_t>(c) * np + static_cast<std::size_t>(n) * ps;
            std::copy(src, src + ps, x.plane(n, c));
        }
}

template <typename T>
void bias_grad(const Tensor4<T>& grad_out, std::vector<T>& grad_bias) {
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < grad_out.c; ++oc) {
        T s{};
        for (int n = 0; n < grad_out.n; ++n) {
            const T* g = grad_out.plane(n, oc);
#pragma omp simd reduction(+ : s)
            for (std::size_t i = 0; i < grad_out.plane_size(); ++i) s += g[i];
        }
        grad_bias[static_cast<std::size_t>(oc)] += s;
    }
}

}  // namespace

template <typename T>
Tensor4<T> conv3x3_forward(const Tensor4<T>& in, const std::vector<T>& weight, const std::vector<T>& bias, int cout) {
    if (in.w >= kDirectMinWidth) return conv3x3_padded(pad1(in), weight.data(), bias.empty() ? nullptr : bias.data(), cout);
    const int k = in.c * 9;
    const int np = static_cast<int>(in.plane_size()) * in.n;
    const auto col = im2col3x3(in);
    std::vector<T> out_m(static_cast<std::size_t>(cout) * static_cast<std::size_t>(np));
    gemm(false, false, cout, np, k, T(1), weight.data(), k, col.data(), np, T(0), out_m.data(), np);
    Tensor4<T> out(in.n, cout, in.h, in.w);
    from_channel_major(out_m, out);
    if (!bias.empty()) {
#pragma omp parallel for collapse(2) schedule(static)
        for (int n = 0; n < in.n; ++n)
            for (int oc = 0; oc < cout; ++oc) {
                T* o = out.plane(n, oc);
                for (std::size_t i = 0; i < out.plane_size(); ++i) o[i] += bias[static_cast<std::size_t>(oc)];
            }
    }
    return out;
}

template <typename T>
void conv3x3_backward(const Tensor4<T>& in, const std::vector<T>& weight, const Tensor4<T>& grad_out, Tensor4<T>* grad_in,
                      std::vector<T>& grad_weight, std::vector<T>* grad_bias) {
    if (in.w >= kDirectMinWidth) {
        conv3x3_direct_backward(in, weight, grad_out, grad_in, grad_weight);
        if (grad_bias) bias_grad(grad_out, *grad_bias);
        return;
    }
    const int cout = grad_out.c, k = in.c * 9;
    const int np = static_cast<int>(in.plane_size()) * in.n;
    const auto g = to_channel_major(grad_out);
    {
        const auto col = im2col3x3(in);
        gemm(false, true, cout, k, np, T(1), g.data(), np, col.data(), np, T(1), grad_weight.data(), k);
    }
    if (grad_in) {
        std::vector<T> gcol(static_cast<std::size_t>(k) * static_cast<std::size_t>(np));
        gemm(true, false, k, np, cout, T(1), weight.data(), k, g.data(), np, T(0), gcol.data(), np);
        *grad_in = Tensor4<T>(in.n, in.c, in.h, in.w);
        col2im3x3(gcol, *grad_in);
    }
    if (grad_bias) bias_grad(grad_out, *grad_bias);
}

template <typename T>
Tensor4<T> conv1x1_forward(const Tensor4<T>& in, const std::vector<T>& weight, const std::vector<T>& bias, int cout) {
    Tensor4<T> out(in.n, cout, in.h, in.w);
    const std::size_t ps = in.plane_size();
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < in.n; ++n)
        for (int oc = 0; oc < cout; ++oc) {
            T* o = out.plane(n, oc);
            std::fill(o, o + ps, bias.empty() ? T{} : bias[static_cast<std::size_t>(oc)]);
            for (int ic = 0; ic < in.c; ++ic) {
                const T k = weight[static_cast<std::size_t>(oc) * in.c + ic];
                const T* p = in.plane(n, ic);
#pragma omp simd
                for (std::size_t i = 0; i < ps; ++i) o[i] += k * p[i];
            }
        }
    return out;
}

template <typename T>
void conv1x1_backward(const Tensor4<T>& in, const std::vector<T>& weight, const Tensor4<T>& grad_out, Tensor4<T>* grad_in,
                      std::vector<T>& grad_weight, std::vector<T>* grad_bias) {
    const int cin = in.c, cout = grad_out.c;
    const std::size_t ps = in.plane_size();
    if (grad_in) {
        *grad_in = Tensor4<T>(in.n, cin, in.h, in.w);
#pragma omp parallel for collapse(2) schedule(static)
        for (int n = 0; n < in.n; ++n)
            for (int ic = 0; ic < cin; ++ic) {
                T* gi = grad_in->plane(n, ic);
                for (int oc = 0; oc < cout; ++oc) {
                    const T k = weight[static_cast<std::size_t>(oc) * cin + ic];
                    const T* g = grad_out.plane(n, oc);
#pragma omp simd
                    for (std::size_t i = 0; i < ps; ++i) gi[i] += k * g[i];
                }
            }
    }
#pragma omp parallel for collapse(2) schedule(static)
    for (int oc = 0; oc < cout; ++oc)
        for (int ic = 0; ic < cin; ++ic) {
            T s{};
            for (int n = 0; n < in.n; ++n) {
                const T* g = grad_out.plane(n, oc);
                const T* p = in.plane(n, ic);
#pragma omp simd reduction(+ : s)
                for (std::size_t i = 0; i < ps; ++i) s += g[i] * p[i];
            }
            grad_weight[static_cast<std::size_t>(oc) * cin + ic] += s;
        }
    if (grad_bias) bias_grad(grad_out, *grad_bias);
}

// The [cin][cout][2][2] weight is a cin x (cout*4) matrix; the transposed
// convolution is one GEMM against the channel-major input, with row oc*4 + t of
// the product landing on output tap t of channel oc.
template <typename T>
Tensor4<T> upconv2x2_forward(const Tensor4<T>& in, const std::vector<T>& weight, const std::vector<T>& bias, int cout) {
    const int h = in.h, w = in.w, ow = 2 * w, k4 = cout * 4;
    const std::size_t ps = in.plane_size();
    const int np = static_cast<int>(ps) * in.n;
    const auto x = to_channel_major(in);
    std::vector<T> r(static_cast<std::size_t>(k4) * static_cast<std::size_t>(np));
    gemm(true, false, k4, np, in.c, T(1), weight.data(), k4, x.data(), np, T(0), r.data(), np);
    Tensor4<T> out(in.n, cout, 2 * h, ow);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < in.n; ++n)
        for (int oc = 0; oc < cout; ++oc) {
            T* o = out.plane(n, oc);
            const T b = bias.empty() ? T{} : bias[static_cast<std::size_t>(oc)];
            for (int t = 0; t < 4; ++t) {
                const T* src = r.data() + (static_cast<std::size_t>(oc) * 4 + static_cast<std::size_t>(t)) * static_cast<std::size_t>(np) +
                               static_cast<std::size_t>(n) * ps;
                const int dy = t / 2, dx = t % 2;
                for (int y = 0; y < h; ++y) {
                    T* orow = o + static_cast<std::size_t>(2 * y + dy) * ow + dx;
                    const T* srow = src + static_cast<std::size_t>(y) * w;
                    for (int xx = 0; xx < w; ++xx) orow[2 * xx] = srow[xx] + b;
                }
            }
        }
    return out;
}

template <typename T>
void upconv2x2_backward(const Tensor4<T>& in, const std::vector<T>& weight, const Tensor4<T>& grad_out, Tensor4<T>* grad_in,
                        std::vector<T>& grad_weight, std::vector<T>* grad_bias) {
    const int cin = in.c, cout = grad_out.c, h = in.h, w = in.w, ow = 2 * w, k4 = cout * 4;
    const std::size_t ps = in.plane_size();
    const int np = static_cast<int>(ps) * in.n;
    // Gather grad_out into (cout*4) x np, matching the forward product.
    std::vector<T> g(static_cast<std::size_t>(k4) * static_cast<std::size_t>(np));
#pragma omp parallel for collapse(2) schedule(static)
    for (int oc = 0; oc < cout; ++oc)
        for (int n = 0; n < in.n; ++n) {
            const T* go = grad_out.plane(n, oc);
            for (int t = 0; t < 4; ++t) {
                T* dst = g.data() + (static_cast<std::size_t>(oc) * 4 + static_cast<std::size_t>(t)) * static_cast<std::size_t>(np) +
                         static_cast<std::size_t>(n) * ps;
                const int dy = t / 2, dx = t % 2;
                for (int y = 0; y < h; ++y) {
                    const T* grow = go + static_cast<std::size_t>(2 * y + dy) * ow + dx;
                    T* drow = dst + static_cast<std::size_t>(y) * w;
                    for (int xx = 0; xx < w; ++xx) drow[xx] = grow[2 * xx];
                }
            }
        }
    const auto x = to_channel_major(in);
    gemm(false, true, cin, k4, np, T(1), x.data(), np, g.data(), np, T(1), grad_weight.data(), k4);
    if (grad_in) {
        std::vector<T> gx(static_cast<std::size_t>(cin) * static_cast<std::size_t>(np));
        gemm(false, false, cin, np, k4, T(1), weight.data(), k4, g.data(), np, T(0), gx.data(), np);
        *grad_in = Tensor4<T>(in.n, cin, h, w);
        from_channel_major(gx, *grad_in);
    }
    if (grad_bias) bias_grad(grad_out, *grad_bias);
}

template <typename T>
Tensor4<T> maxpool2x2_forward(const Tensor4<T>& in, std::vector<std::uint8_t>& argmax) {
    const int oh = in.h / 2, ow = in.w / 2;
    Tensor4<T> out(in.n, in.c, oh, ow);
    argmax.assign(out.size(), 0);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < in.n; ++n)
        for (int c = 0; c < in.c; ++c) {
            const T* p = in.plane(n, c);
            T* o = out.plane(n, c);
            std::uint8_t* am = argmax.data() + (static_cast<std::size_t>(n) * in.c + c) * out.plane_size();
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) {
                    const T* r0 = p + static_cast<std::size_t>(2 * y) * in.w + 2 * x;
                    const T* r1 = r0 + in.w;
                    const T v[4] = {r0[0], r0[1], r1[0], r1[1]};
                    std::uint8_t best = 0;
                    for (std::uint8_t k = 1; k < 4; ++k)
                        if (v[k] > v[best]) best = k;
                    o[static_cast<std::size_t>(y) * ow + x] = v[best];
                    am[static_cast<std::size_t>(y) * ow + x] = best;
                }
        }
    return out;
}

template <typename T>
Tensor4<T> maxpool2x2_backward(const Tensor4<T>& grad_out, const std::vector<std::uint8_t>& argmax, int in_h, int in_w) {
    Tensor4<T> gin(grad_out.n, grad_out.c, in_h, in_w);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < grad_out.n; ++n)
        for (int c = 0; c < grad_out.c; ++c) {
            const T* g = grad_out.plane(n, c);
            const std::uint8_t* am = argmax.data() + (static_cast<std::size_t>(n) * grad_out.c + c) * grad_out.plane_size();
            T* gi = gin.plane(n, c);
            for (int y = 0; y < grad_out.h; ++y)
                for (int x = 0; x < grad_out.w; ++x) {
                    const std::size_t i = static_cast<std::size_t>(y) * grad_out.w + x;
                    const int dy = am[i] >> 1, dx = am[i] & 1;
                    gi[static_cast<std::size_t>(2 * y + dy) * in_w + 2 * x + dx] = g[i];
                }
        }
    return gin;
}

template <typename T>
void instance_norm_forward(Tensor4<T>& x, std::vector<T>& inv_std, T eps) {
    inv_std.assign(static_cast<std::size_t>(x.n) * x.c, T{});
    const std::size_t ps = x.plane_size();
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < x.n; ++n)
        for (int c = 0; c < x.c; ++c) {
            T* p = x.plane(n, c);
            T mean{};
#pragma omp simd reduction(+ : mean)
            for (std::size_t i = 0; i < ps; ++i) mean += p[i];
            mean /= static_cast<T>(ps);
            T var{};
#pragma omp simd reduction(+ : var)
            for (std::size_t i = 0; i < ps; ++i) var += (p[i] - mean) * (p[i] - mean);
            var /= static_cast<T>(ps);
            const T inv = T(1) / std::sqrt(var + eps);
            inv_std[static_cast<std::size_t>(n) * x.c + c] = inv;
#pragma omp simd
            for (std::size_t i = 0; i < ps; ++i) p[i] = (p[i] - mean) * inv;
        }
}

template <typename T>
void instance_norm_backward(const Tensor4<T>& y, const std::vector<T>& inv_std, Tensor4<T>& grad) {
    const std::size_t ps = y.plane_size();
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < y.n; ++n)
        for (int c = 0; c < y.c; ++c) {
            const T* yp = y.plane(n, c);
            T* g = grad.plane(n, c);
            T sg{}, sgy{};
#pragma omp simd reduction(+ : sg, sgy)
            for (std::size_t i = 0; i < ps; ++i) {
                sg += g[i];
                sgy += g[i] * yp[i];
            }
            const T mg = sg / static_cast<T>(ps), mgy = sgy / static_cast<T>(ps);
            const T inv = inv_std[static_cast<std::size_t>(n) * y.c + c];
#pragma omp simd
            for (std::size_t i = 0; i < ps; ++i) g[i] = inv * (g[i] - mg - yp[i] * mgy);
        }
}

template <typename T>
void leaky_relu_forward(Tensor4<T>& x, T slope) {
    T* p = x.data.data();
    const std::size_t n = x.size();
#pragma omp parallel for simd schedule(static)
    for (std::size_t i = 0; i < n; ++i) p[i] = p[i] > T{} ? p[i] : slope * p[i];
}

template <typename T>
void leaky_relu_backward(const Tensor4<T>& pre, Tensor4<T>& grad, T slope) {
    const T* p = pre.data.data();
    T* g = grad.data.data();
    const std::size_t n = grad.size();
#pragma omp parallel for simd schedule(static)
    for (std::size_t i = 0; i < n; ++i) g[i] = p[i] > T{} ? g[i] : slope * g[i];
}

// ---------------------------------------------------------------------------
// Serial reference versions.

namespace ref {

template <typename T>
Tensor4<T> conv3x3_forward(const Tensor4<T>& in, const std::vector<T>& weight, const std::vector<T>& bias, int cout) {
    Tensor4<T> out(in.n, cout, in.h, in.w);
    for (int n = 0; n < in.n; ++n)
        for (int oc = 0; oc < cout; ++oc)
            for (int y = 0; y < in.h; ++y)
                for (int x = 0; x < in.w; ++x) {
                    T s = bias.empty() ? T{} : bias[static_cast<std::size_t>(oc)];
                    for (int ic = 0; ic < in.c; ++ic)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                const int sy = y + ky - 1, sx = x + kx - 1;
                                if (sy < 0 || sx < 0 || sy >= in.h || sx >= in.w) continue;
                                s += weight[((static_cast<std::size_t>(oc) * in.c + ic) * 3 + ky) * 3 + kx] * in.at(n, ic, sy, sx);
                            }
                    out.at(n, oc, y, x) = s;
                }
    return out;
}

template <typename T>
void conv3x3_backward(const Tensor4<T>& in, const std::vector<T>& weight, const Tensor4<T>& grad_out, Tensor4<T>* grad_in,
                      std::vector<T>& grad_weight, std::vector<T>* grad_bias) {
    if (grad_in) *grad_in = Tensor4<T>(in.n, in.c, in.h, in.w);
    for (int n = 0; n < in.n; ++n)
        for (int oc = 0; oc < grad_out.c; ++oc)
            for (int y = 0; y < in.h; ++y)
                for (int x = 0; x < in.w; ++x) {
                    const T g = grad_out.at(n, oc, y, x);
                    if (grad_bias) (*grad_bias)[static_cast<std::size_t>(oc)] += g;
                    for (int ic = 0; ic < in.c; ++ic)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                const int sy = y + ky - 1, sx = x + kx - 1;
                                if (sy < 0 || sx < 0 || sy >= in.h || sx >= in.w) continue;
                                const std::size_t wi = ((static_cast<std::size_t>(oc) * in.c + ic) * 3 + ky) * 3 + kx;
                                grad_weight[wi] += g * in.at(n, ic, sy, sx);
                                if (grad_in) grad_in->at(n, ic, sy, sx) += g * weight[wi];
                            }
                }
}

template <typename T>
Tensor4<T> upconv2x2_forward(const Tensor4<T>& in, const std::vector<T>& weight, const std::vector<T>& bias, int cout) {
    Tensor4<T> out(in.n, cout, 2 * in.h, 2 * in.w);
    for (int n = 0; n < in.n; ++n)
        for (int oc = 0; oc < cout; ++oc)
            for (int y = 0; y < out.h; ++y)
                for (int x = 0; x < out.w; ++x) {
                    T s = bias.empty() ? T{} : bias[static_cast<std::size_t>(oc)];
                    const int a = y & 1, b = x & 1;
                    for (int ic = 0; ic < in.c; ++ic)
                        s += weight[((static_cast<std::size_t>(ic) * cout + oc) * 2 + a) * 2 + b] * in.at(n, ic, y / 2, x / 2);
                    out.at(n, oc, y, x) = s;
                }
    return out;
}

template <typename T>
void upconv2x2_backward(const Tensor4<T>& in, const std::vector<T>& weight, const Tensor4<T>& grad_out, Tensor4<T>* grad_in,
                        std::vector<T>& grad_weight, std::vector<T>* grad_bias) {
    const int cout = grad_out.c;
    if (grad_in) *grad_in = Tensor4<T>(in.n, in.c, in.h, in.w);
    for (int n = 0; n < in.n; ++n)
        for (int oc = 0; oc < cout; ++oc)
            for (int y = 0; y < grad_out.h; ++y)
                for (int x = 0; x < grad_out.w; ++x) {
                    const T g = grad_out.at(n, oc, y, x);
                    if (grad_bias) (*grad_bias)[static_cast<std::size_t>(oc)] += g;
                    const int a = y & 1, b = x & 1;
                    for (int ic = 0; ic < in.c; ++ic) {
                        const std::size_t wi = ((static_cast<std::size_t>(ic) * cout + oc) * 2 + a) * 2 + b;
                        grad_weight[wi] += g * in.at(n, ic, y / 2, x / 2);
                        if (grad_in) grad_in->at(n, ic, y / 2, x / 2) += g * weight[wi];
                    }
                }
}

template <typename T>
void instance_norm_forward(Tensor4<T>& x, std::vector<T>& inv_std, T eps) {
    inv_std.assign(static_cast<std::size_t>(x.n) * x.c, T{});
    const T count = static_cast<T>(x.plane_size());
    for (int n = 0; n < x.n; ++n)
        for (int c = 0; c < x.c; ++c) {
            T mean{};
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx) mean += x.at(n, c, y, xx);
            mean /= count;
            T var{};
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx) var += (x.at(n, c, y, xx) - mean) * (x.at(n, c, y, xx) - mean);
            var /= count;
            const T inv = T(1) / std::sqrt(var + eps);
            inv_std[static_cast<std::size_t>(n) * x.c + c] = inv;
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx) x.at(n, c, y, xx) = (x.at(n, c, y, xx) - mean) * inv;
        }
}

// dx_i = inv/N * (N dy_i - sum(dy) - y_i sum(dy * y))
template <typename T>
void instance_norm_backward(const Tensor4<T>& y, const std::vector<T>& inv_std, Tensor4<T>& grad) {
    const T count = static_cast<T>(y.plane_size());
    for (int n = 0; n < y.n; ++n)
        for (int c = 0; c < y.c; ++c) {
            T sg{}, sgy{};
            for (int yy = 0; yy < y.h; ++yy)
                for (int x = 0; x < y.w; ++x) {
                    sg += grad.at(n, c, yy, x);
                    sgy += grad.at(n, c, yy, x) * y.at(n, c, yy, x);
                }
            const T inv = inv_std[static_cast<std::size_t>(n) * y.c + c];
            for (int yy = 0; yy < y.h; ++yy)
                for (int x = 0; x < y.w; ++x)
                    grad.at(n, c, yy, x) = inv / count * (count * grad.at(n, c, yy, x) - sg - y.at(n, c, yy, x) * sgy);
        }
}

}  // namespace ref

#define ENDO_INSTANTIATE_KERNELS(T)                                                                                   \
    template Tensor4<T> conv3x3_forward(const Tensor4<T>&, const std::vector<T>&, const std::vector<T>&, int);        \
    template void conv3x3_backward(const Tensor4<T>&, const std::vector<T>&, const Tensor4<T>&, Tensor4<T>*,          \
                                   std::vector<T>&, std::vector<T>*);                                                 \
    template Tensor4<T> conv1x1_forward(const Tensor4<T>&, const std::vector<T>&, const std::vector<T>&, int);        \
    template void conv1x1_backward(const Tensor4<T>&, const std::vector<T>&, const Tensor4<T>&, Tensor4<T>*,          \
                                   std::vector<T>&, std::vector<T>*);                                                 \
    template Tensor4<T> upconv2x2_forward(const Tensor4<T>&, const std::vector<T>&, const std::vector<T>&, int);      \
    template void upconv2x2_backward(const Tensor4<T>&, const std::vector<T>&, const Tensor4<T>&, Tensor4<T>*,        \
                                     std::vector<T>&, std::vector<T>*);                                               \
    template Tensor4<T> maxpool2x2_forward(const Tensor4<T>&, std::vector<std::uint8_t>&);                            \
    template Tensor4<T> maxpool2x2_backward(const Tensor4<T>&, const std::vector<std::uint8_t>&, int, int);           \
    template void instance_norm_forward(Tensor4<T>&, std::vector<T>&, T);                                             \
    template void instance_norm_backward(const Tensor4<T>&, const std::vector<T>&, Tensor4<T>&);                      \
    template void leaky_relu_forward(Tensor4<T>&, T);                                                                 \
    template void leaky_relu_backward(const Tensor4<T>&, Tensor4<T>&, T);                                             \
    template Tensor4<T> ref::conv3x3_forward(const Tensor4<T>&, const std::vector<T>&, const std::vector<T>&, int);   \
    template void ref::conv3x3_backward(const Tensor4<T>&, const std::vector<T>&, const Tensor4<T>&, Tensor4<T>*,     \
                                        std::vector<T>&, std::vector<T>*);                                            \
    template Tensor4<T> ref::upconv2x2_forward(const Tensor4<T>&, const std::vector<T>&, const std::vector<T>&, int); \
    template void ref::upconv2x2_backward(const Tensor4<T>&, const std::vector<T>&, const Tensor4<T>&, Tensor4<T>*,   \
                                          std::vector<T>&, std::vector<T>*);                                          \
    template void ref::instance_norm_forward(Tensor4<T>&, std::vector<T>&, T);                                        \
    template void ref::instance_norm_backward(const Tensor4<T>&, const std::vector<T>&, Tensor4<T>&);

ENDO_INSTANTIATE_KERNELS(float)
ENDO_INSTANTIATE_KERNELS(double)

#undef ENDO_INSTANTIATE_KERNELS

}  // namespace endo::kernels
