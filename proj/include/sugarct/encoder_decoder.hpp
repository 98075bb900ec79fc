#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nn.hpp"
#include "transforms.hpp"

namespace sugarct {

/// Layer plan of the learned transform pair (Q, Q*).
///
/// Encoder Q: conv(1->C) and conv(C->C) at full resolution, then `scales` times
/// [avg-pool 2x2, conv(C->C)]. Decoder Q*: `scales` times [nearest upsample, conv(C->C)]
/// followed by a skip add of the encoder feature at that scale, then conv(C->1). Every
/// conv except the last is followed by per-channel scale/shift and ReLU. The decoder
/// output is added to the input, so Q*Q = I whenever the last conv is zero.
struct EncoderDecoderShape {
    std::size_t channels = 8;
    std::size_t scales = 2;

    std::size_t n_conv() const noexcept { return 2 * scales + 3; }
    std::size_t last_conv() const noexcept { return n_conv() - 1; }
    std::size_t cin(std::size_t l) const noexcept { return l == 0 ? 1 : channels; }
    std::size_t cout(std::size_t l) const noexcept { return l == last_conv() ? 1 : channels; }
    bool normalized(std::size_t l) const noexcept { return l != last_conv(); }
    std::size_t downsampling() const noexcept { return std::size_t{1} << scales; }

    std::size_t weight_count(std::size_t l) const noexcept { return cout(l) * cin(l) * 9; }
    std::size_t layer_size(std::size_t l) const noexcept
    {
        return weight_count(l) + cout(l) + (normalized(l) ? 2 * cout(l) : 0);
    }
    std::size_t layer_offset(std::size_t l) const noexcept
    {
        std::size_t off = 0;
        for (std::size_t k = 0; k < l; ++k) off += layer_size(k);
        return off;
    }
    std::size_t param_count() const noexcept { return layer_offset(n_conv()); }

    bool operator==(const EncoderDecoderShape&) const = default;
};

template <class Real>
struct LayerParams {
    std::span<const Real> weights, bias, gamma, beta;
};

template <class Real>
struct LayerGrads {
    std::span<Real> weights, bias, gamma, beta;
};

template <class Real>
LayerParams<Real> layer_params(const EncoderDecoderShape& s, std::span<const Real> p, std::size_t l)
{
    const std::size_t off = s.layer_offset(l), nw = s.weight_count(l), co = s.cout(l);
    LayerParams<Real> out;
    out.weights = p.subspan(off, nw);
    out.bias = p.subspan(off + nw, co);
    if (s.normalized(l)) {
        out.gamma = p.subspan(off + nw + co, co);
        out.beta = p.subspan(off + nw + 2 * co, co);
    }
    return out;
}

template <class Real>
LayerGrads<Real> layer_grads(const EncoderDecoderShape& s, std::span<Real> p, std::size_t l)
{
    const std::size_t off = s.layer_offset(l), nw = s.weight_count(l), co = s.cout(l);
    LayerGrads<Real> out;
    out.weights = p.subspan(off, nw);
    out.bias = p.subspan(off + nw, co);
    if (s.normalized(l)) {
        out.gamma = p.subspan(off + nw + co, co);
        out.beta = p.subspan(off + nw + 2 * co, co);
    }
    return out;
}

/// He-style initialization: weights ~ N(0, 2 / (9 cin)), zero bias, unit scale, zero shift.
/// With zero_output the final conv starts at zero (identity transform pair).
template <class Real>
void init_encoder_decoder(const EncoderDecoderShape& s, std::span<Real> p, std::mt19937_64& rng, bool zero_output)
{
    for (std::size_t l = 0; l < s.n_conv(); ++l) {
        auto g = layer_grads<Real>(s, p, l);
        const bool zero = zero_output && l == s.last_conv();
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (9.0 * static_cast<double>(s.cin(l)))));
        for (Real& w : g.weights) w = zero ? Real(0) : static_cast<Real>(dist(rng));
        for (Real& b : g.bias) b = Real(0);
        for (Real& v : g.gamma) v = Real(1);
        for (Real& v : g.beta) v = Real(0);
    }
}

template <class Real>
struct EncoderDecoderCache {
    std::vector<nn::Tensor<Real>> conv_in; // input of each conv layer
    std::vector<nn::Tensor<Real>> pre;     // conv output before scale/shift (normalized layers)
    std::vector<nn::Tensor<Real>> act;     // ReLU output (normalized layers)
    nn::Tensor<Real> code;                 // encoder output before thresholding
};

/// Forward pass z = Q*(g_eps(Q(u))). eps < 0 disables thresholding.
template <class Real>
nn::Tensor<Real> encoder_decoder_forward(const EncoderDecoderShape& s, std::span<const Real> p,
                                         const nn::Tensor<Real>& input, Real eps, EncoderDecoderCache<Real>* cache)
{
    detail::require(input.c == 1, "encoder-decoder: input must have one channel");
    detail::require(input.h % s.downsampling() == 0 && input.w % s.downsampling() == 0,
                    "encoder-decoder: image size " + std::to_string(input.h) + " not divisible by " +
                        std::to_string(s.downsampling()));
    if (cache) {
        cache->conv_in.assign(s.n_conv(), {});
        cache->pre.assign(s.n_conv(), {});
        cache->act.assign(s.n_conv(), {});
    }
    auto normed = [&](std::size_t l, const nn::Tensor<Real>& in) {
        const auto lp = layer_params<Real>(s, p, l);
        nn::Tensor<Real> t = nn::conv3x3<Real>(in, lp.weights, lp.bias, s.cout(l));
        if (cache) {
            cache->conv_in[l] = in;
            cache->pre[l] = t;
        }
        nn::scale_shift_inplace<Real>(t, lp.gamma, lp.beta);
        nn::relu_inplace(t);
        if (cache) cache->act[l] = t;
        return t;
    };

    std::vector<nn::Tensor<Real>> skips(s.scales + 1);
    nn::Tensor<Real> h = normed(0, input);
    h = normed(1, h);
    skips[0] = h;
    for (std::size_t sc = 1; sc <= s.scales; ++sc) {
        h = normed(1 + sc, nn::avgpool2(h));
        skips[sc] = h;
    }
    if (cache) cache->code = h;
    if (eps >= Real(0))
        for (Real& v : h.v) v = static_cast<Real>(soft_threshold(static_cast<double>(v), static_cast<double>(eps)));

    nn::Tensor<Real> d = std::move(h);
    for (std::size_t j = 0; j < s.scales; ++j) {
        const std::size_t sc = s.scales - j;
        d = normed(2 + s.scales + j, nn::upsample_nearest2(d));
        nn::add_inplace(d, skips[sc - 1]);
    }
    const std::size_t last = s.last_conv();
    const auto lp = layer_params<Real>(s, p, last);
    nn::Tensor<Real> out = nn::conv3x3<Real>(d, lp.weights, lp.bias, 1);
    if (cache) cache->conv_in[last] = std::move(d);
    nn::add_inplace(out, input);
    return out;
}

/// Backward pass. Accumulates parameter gradients into grad_p and the threshold gradient
/// into *grad_eps (when thresholding was enabled); returns the gradient w.r.t. the input.
template <class Real>
nn::Tensor<Real> encoder_decoder_backward(const EncoderDecoderShape& s, std::span<const Real> p,
                                          const EncoderDecoderCache<Real>& cache, const nn::Tensor<Real>& grad_out,
                                          Real eps, std::span<Real> grad_p, Real* grad_eps)
{
    nn::Tensor<Real> grad_input = grad_out; // residual path

    auto normed_backward = [&](std::size_t l, nn::Tensor<Real> g) {
        const auto lp = layer_params<Real>(s, p, l);
        const auto lg = layer_grads<Real>(s, grad_p, l);
        nn::relu_backward(cache.act[l], g);
        nn::scale_shift_backward<Real>(cache.pre[l], lp.gamma, g, lg.gamma, lg.beta);
        nn::Tensor<Real> gin = cache.conv_in[l].zeros_like();
        nn::conv3x3_backward<Real>(cache.conv_in[l], lp.weights, g, &gin, lg.weights, lg.bias);
        return gin;
    };

    std::vector<nn::Tensor<Real>> grad_skip(s.scales + 1);

    const std::size_t last = s.last_conv();
    nn::Tensor<Real> gd = cache.conv_in[last].zeros_like();
    {
        const auto lp = layer_params<Real>(s, p, last);
        const auto lg = layer_grads<Real>(s, grad_p, last);
        nn::conv3x3_backward<Real>(cache.conv_in[last], lp.weights, grad_out, &gd, lg.weights, lg.bias);
    }
    for (std::size_t jj = s.scales; jj-- > 0;) {
        const std::size_t sc = s.scales - jj;
        const std::size_t l = 2 + s.scales + jj;
        grad_skip[sc - 1] = gd;
        nn::Tensor<Real> gu = normed_backward(l, std::move(gd));
        gd = nn::Tensor<Real>(gu.c, gu.h / 2, gu.w / 2);
        nn::upsample_nearest2_backward(gu, gd);
    }

    // gd now holds the gradient w.r.t. the (thresholded) code
    if (eps >= Real(0)) {
        Real ge = 0;
        for (std::size_t i = 0; i < gd.v.size(); ++i) {
            const Real c = cache.code.v[i];
            if (c > eps) {
                ge -= gd.v[i];
            } else if (c < -eps) {
                ge += gd.v[i];
            } else {
                gd.v[i] = Real(0);
            }
        }
        if (grad_eps) *grad_eps += ge;
    }

    nn::Tensor<Real> ge = std::move(gd);
    for (std::size_t sc = s.scales; sc >= 1; --sc) {
        if (sc < s.scales) nn::add_inplace(ge, grad_skip[sc]);
        nn::Tensor<Real> gp = normed_backward(1 + sc, std::move(ge));
        nn::Tensor<Real> below = cache.act[sc].zeros_like();
        nn::avgpool2_backward(gp, below);
        ge = std::move(below);
    }
    nn::add_inplace(ge, grad_skip[0]);
    nn::Tensor<Real> ga0 = normed_backward(1, std::move(ge));
    nn::Tensor<Real> gin = normed_backward(0, std::move(ga0));
    nn::add_inplace(grad_input, gin);
    return grad_input;
}

} // namespace sugarct
