#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "errors.hpp"

// Minimal CNN building blocks with explicit backward passes. Tensors are single-sample,
// channel-major (C x H x W). Every backward function accumulates (+=) into its gradient
// outputs so that contributions from several paths can be summed.
namespace sugarct::nn {

template <class Real>
struct Tensor {
    std::size_t c = 0, h = 0, w = 0;
    std::vector<Real> v;

    Tensor() = default;
    Tensor(std::size_t channels, std::size_t height, std::size_t width)
        : c(channels), h(height), w(width), v(channels * height * width, Real(0))
    {
    }

    std::size_t plane() const noexcept { return h * w; }
    Real* channel(std::size_t k) noexcept { return v.data() + k * plane(); }
    const Real* channel(std::size_t k) const noexcept { return v.data() + k * plane(); }
    bool same_shape(const Tensor& o) const noexcept { return c == o.c && h == o.h && w == o.w; }
    Tensor zeros_like() const { return Tensor(c, h, w); }
};

/// 3x3 convolution, stride 1, zero padding 1.
/// weights: [cout][cin][3][3], bias: [cout].
template <class Real>
Tensor<Real> conv3x3(const Tensor<Real>& in, std::span<const Real> weights, std::span<const Real> bias, std::size_t cout)
{
    const std::size_t cin = in.c, H = in.h, W = in.w;
    detail::require(weights.size() == cout * cin * 9 && bias.size() == cout, "conv3x3: parameter size mismatch");
    Tensor<Real> out(cout, H, W);
    for (std::size_t o = 0; o < cout; ++o) {
        Real* dst = out.channel(o);
        std::fill(dst, dst + H * W, bias[o]);
        for (std::size_t i = 0; i < cin; ++i) {
            const Real* src = in.channel(i);
            const Real* k = weights.data() + (o * cin + i) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const Real wv = k[ky * 3 + kx];
                    if (wv == Real(0)) continue;
                    const int dy = ky - 1, dx = kx - 1;
                    const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? H - 1 : H;
                    const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? W - 1 : W;
                    for (std::size_t y = y0; y < y1; ++y) {
                        Real* drow = dst + y * W;
                        const Real* srow = src + (y + dy) * W + dx;
                        for (std::size_t x = x0; x < x1; ++x) drow[x] += wv * srow[x];
                    }
                }
            }
        }
    }
    return out;
}

/// Backward of conv3x3. grad_in may be null when the input gradient is not needed.
template <class Real>
void conv3x3_backward(const Tensor<Real>& in, std::span<const Real> weights, const Tensor<Real>& grad_out,
                      Tensor<Real>* grad_in, std::span<Real> grad_weights, std::span<Real> grad_bias)
{
    const std::size_t cin = in.c, cout = grad_out.c, H = in.h, W = in.w;
    for (std::size_t o = 0; o < cout; ++o) {
        const Real* g = grad_out.channel(o);
        Real sb = 0;
        for (std::size_t p = 0; p < H * W; ++p) sb += g[p];
        grad_bias[o] += sb;
        for (std::size_t i = 0; i < cin; ++i) {
            const Real* src = in.channel(i);
            const Real* k = weights.data() + (o * cin + i) * 9;
            Real* gk = grad_weights.data() + (o * cin + i) * 9;
            Real* gin = grad_in ? grad_in->channel(i) : nullptr;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const int dy = ky - 1, dx = kx - 1;
                    const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? H - 1 : H;
                    const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? W - 1 : W;
                    Real acc = 0;
                    for (std::size_t y = y0; y < y1; ++y) {
                        const Real* grow = g + y * W;
                        const Real* srow = src + (y + dy) * W + dx;
                        for (std::size_t x = x0; x < x1; ++x) acc += grow[x] * srow[x];
                    }
                    gk[ky * 3 + kx] += acc;
                    if (!gin) continue;
                    const Real wv = k[ky * 3 + kx];
                    if (wv == Real(0)) continue;
                    for (std::size_t y = y0; y < y1; ++y) {
                        const Real* grow = g + y * W;
                        Real* irow = gin + (y + dy) * W + dx;
                        for (std::size_t x = x0; x < x1; ++x) irow[x] += wv * grow[x];
                    }
                }
            }
        }
    }
}

/// Per-channel affine normalization y = gamma_c x + beta_c (stands in for batch norm at batch size 1).
template <class Real>
void scale_shift_inplace(Tensor<Real>& t, std::span<const Real> gamma, std::span<const Real> beta)
{
    for (std::size_t k = 0; k < t.c; ++k) {
        Real* p = t.channel(k);
        for (std::size_t i = 0; i < t.plane(); ++i) p[i] = gamma[k] * p[i] + beta[k];
    }
}

/// Given the pre-normalization input and the output gradient, turns grad into the input
/// gradient in place and accumulates parameter gradients.
template <class Real>
void scale_shift_backward(const Tensor<Real>& pre, std::span<const Real> gamma, Tensor<Real>& grad,
                          std::span<Real> grad_gamma, std::span<Real> grad_beta)
{
    for (std::size_t k = 0; k < grad.c; ++k) {
        Real* g = grad.channel(k);
        const Real* x = pre.channel(k);
        Real gg = 0, gb = 0;
        for (std::size_t i = 0; i < grad.plane(); ++i) {
            gg += g[i] * x[i];
            gb += g[i];
            g[i] *= gamma[k];
        }
        grad_gamma[k] += gg;
        grad_beta[k] += gb;
    }
}

template <class Real>
void relu_inplace(Tensor<Real>& t)
{
    for (Real& v : t.v) v = v > Real(0) ? v : Real(0);
}

/// Masks grad by the ReLU output (zero where the output is zero).
template <class Real>
void relu_backward(const Tensor<Real>& out, Tensor<Real>& grad)
{
    for (std::size_t i = 0; i < grad.v.size(); ++i)
        if (!(out.v[i] > Real(0))) grad.v[i] = Real(0);
}

template <class Real>
Tensor<Real> avgpool2(const Tensor<Real>& in)
{
    detail::require(in.h % 2 == 0 && in.w % 2 == 0, "avgpool2: spatial size must be even");
    Tensor<Real> out(in.c, in.h / 2, in.w / 2);
    for (std::size_t k = 0; k < in.c; ++k) {
        const Real* s = in.channel(k);
        Real* d = out.channel(k);
        for (std::size_t y = 0; y < out.h; ++y)
            for (std::size_t x = 0; x < out.w; ++x) {
                const std::size_t i = 2 * y * in.w + 2 * x;
                d[y * out.w + x] = Real(0.25) * (s[i] + s[i + 1] + s[i + in.w] + s[i + in.w + 1]);
            }
    }
    return out;
}

template <class Real>
void avgpool2_backward(const Tensor<Real>& grad_out, Tensor<Real>& grad_in)
{
    for (std::size_t k = 0; k < grad_out.c; ++k) {
        const Real* g = grad_out.channel(k);
        Real* d = grad_in.channel(k);
        for (std::size_t y = 0; y < grad_out.h; ++y)
            for (std::size_t x = 0; x < grad_out.w; ++x) {
                const Real q = Real(0.25) * g[y * grad_out.w + x];
                const std::size_t i = 2 * y * grad_in.w + 2 * x;
                d[i] += q;
                d[i + 1] += q;
                d[i + grad_in.w] += q;
                d[i + grad_in.w + 1] += q;
            }
    }
}

template <class Real>
Tensor<Real> upsample_nearest2(const Tensor<Real>& in)
{
    Tensor<Real> out(in.c, in.h * 2, in.w * 2);
    for (std::size_t k = 0; k < in.c; ++k) {
        const Real* s = in.channel(k);
        Real* d = out.channel(k);
        for (std::size_t y = 0; y < out.h; ++y)
            for (std::size_t x = 0; x < out.w; ++x) d[y * out.w + x] = s[(y / 2) * in.w + x / 2];
    }
    return out;
}

template <class Real>
void upsample_nearest2_backward(const Tensor<Real>& grad_out, Tensor<Real>& grad_in)
{
    for (std::size_t k = 0; k < grad_out.c; ++k) {
        const Real* g = grad_out.channel(k);
        Real* d = grad_in.channel(k);
        for (std::size_t y = 0; y < grad_out.h; ++y)
            for (std::size_t x = 0; x < grad_out.w; ++x) d[(y / 2) * grad_in.w + x / 2] += g[y * grad_out.w + x];
    }
}

template <class Real>
void add_inplace(Tensor<Real>& a, const Tensor<Real>& b)
{
    for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

} // namespace sugarct::nn
