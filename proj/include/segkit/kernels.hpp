#ifndef SEGKIT_KERNELS_HPP
#define SEGKIT_KERNELS_HPP

#include <array>
#include <cmath>
#include <tuple>

#include "tensor.hpp"

// Numeric kernels. Every kernel runs the same fixed loop nest in f32 or f64
// depending on the operand dtype; reduction order never changes between runs.

namespace segkit {

struct ConvDims {
    std::size_t n, cin, h, w;
    std::size_t cout, kh, kw;
    std::size_t hout, wout;
    std::size_t stride, pad;
};

inline ConvDims conv_dims(const Tensor& x, const Tensor& w, std::size_t stride,
                          std::size_t pad) {
    if (x.ndim() != 4 || w.ndim() != 4) throw error("conv2d: operands must be 4-d");
    ConvDims d{};
    d.n = x.extent(0);
    d.cin = x.extent(1);
    d.h = x.extent(2);
    d.w = x.extent(3);
    d.cout = w.extent(0);
    d.kh = w.extent(2);
    d.kw = w.extent(3);
    d.stride = stride;
    d.pad = pad;
    if (w.extent(1) != d.cin) throw error("conv2d: channel mismatch");
    if (d.kh % 2 == 0 || d.kw % 2 == 0) throw error("conv2d: kernel extents must be odd");
    if (stride == 0) throw error("conv2d: stride must be positive");
    std::size_t hp = d.h + 2 * pad, wp = d.w + 2 * pad;
    if (hp < d.kh || wp < d.kw || (hp - d.kh) % stride != 0 || (wp - d.kw) % stride != 0)
        throw error("conv2d: non-integral output extent");
    d.hout = (hp - d.kh) / stride + 1;
    d.wout = (wp - d.kw) / stride + 1;
    return d;
}

namespace detail {

template <typename T>
void conv2d_forward_impl(const ConvDims& d, const T* x, const T* w, const T* b, T* y) {
    const std::size_t xs_c = d.h * d.w, xs_n = d.cin * xs_c;
    const std::size_t ws_i = d.kh * d.kw, ws_o = d.cin * ws_i;
    const std::size_t ys_c = d.hout * d.wout, ys_n = d.cout * ys_c;
    for (std::size_t n = 0; n < d.n; ++n)
        for (std::size_t co = 0; co < d.cout; ++co)
            for (std::size_t ho = 0; ho < d.hout; ++ho)
                for (std::size_t wo = 0; wo < d.wout; ++wo) {
                    T acc = b ? b[co] : T(0);
                    for (std::size_t ci = 0; ci < d.cin; ++ci)
                        for (std::size_t p = 0; p < d.kh; ++p) {
                            std::ptrdiff_t hi = std::ptrdiff_t(ho * d.stride + p) -
                                                std::ptrdiff_t(d.pad);
                            if (hi < 0 || hi >= std::ptrdiff_t(d.h)) continue;
                            const T* xrow = x + n * xs_n + ci * xs_c +
                                            std::size_t(hi) * d.w;
                            const T* wrow = w + co * ws_o + ci * ws_i + p * d.kw;
                            for (std::size_t q = 0; q < d.kw; ++q) {
                                std::ptrdiff_t wi = std::ptrdiff_t(wo * d.stride + q) -
                                                    std::ptrdiff_t(d.pad);
                                if (wi < 0 || wi >= std::ptrdiff_t(d.w)) continue;
                                acc += xrow[wi] * wrow[q];
                            }
                        }
                    y[n * ys_n + co * ys_c + ho * d.wout + wo] = acc;
                }
}

template <typename T>
void conv2d_backward_impl(const ConvDims& d, const T* x, const T* w, const T* gy,
                          T* gx, T* gw, T* gb) {
    const std::size_t xs_c = d.h * d.w, xs_n = d.cin * xs_c;
    const std::size_t ws_i = d.kh * d.kw, ws_o = d.cin * ws_i;
    const std::size_t ys_c = d.hout * d.wout, ys_n = d.cout * ys_c;
    for (std::size_t n = 0; n < d.n; ++n)
        for (std::size_t co = 0; co < d.cout; ++co)
            for (std::size_t ho = 0; ho < d.hout; ++ho)
                for (std::size_t wo = 0; wo < d.wout; ++wo) {
                    T g = gy[n * ys_n + co * ys_c + ho * d.wout + wo];
                    if (gb) gb[co] += g;
                    for (std::size_t ci = 0; ci < d.cin; ++ci)
                        for (std::size_t p = 0; p < d.kh; ++p) {
                            std::ptrdiff_t hi = std::ptrdiff_t(ho * d.stride + p) -
                                                std::ptrdiff_t(d.pad);
                            if (hi < 0 || hi >= std::ptrdiff_t(d.h)) continue;
                            for (std::size_t q = 0; q < d.kw; ++q) {
                                std::ptrdiff_t wi = std::ptrdiff_t(wo * d.stride + q) -
                                                    std::ptrdiff_t(d.pad);
                                if (wi < 0 || wi >= std::ptrdiff_t(d.w)) continue;
                                std::size_t xi = n * xs_n + ci * xs_c +
                                                 std::size_t(hi) * d.w + std::size_t(wi);
                                std::size_t widx = co * ws_o + ci * ws_i + p * d.kw + q;
                                if (gw) gw[widx] += g * x[xi];
                                if (gx) gx[xi] += g * w[widx];
                            }
                        }
                }
}

} // namespace detail

inline Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                             std::size_t stride = 1, std::size_t pad = 0) {
    ConvDims d = conv_dims(x, w, stride, pad);
    if (b.numel() != d.cout) throw error("conv2d: bias size mismatch");
    Tensor y(x.dtype(), {d.n, d.cout, d.hout, d.wout});
    if (x.dtype() == DType::f32)
        detail::conv2d_forward_impl<float>(d, x.data<float>(), w.data<float>(),
                                           b.data<float>(), y.data<float>());
    else if (x.dtype() == DType::f64)
        detail::conv2d_forward_impl<double>(d, x.data<double>(), w.data<double>(),
                                            b.data<double>(), y.data<double>());
    else
        throw error("conv2d: dtype must be f32 or f64");
    return y;
}

struct ConvGrads {
    Tensor grad_x, grad_w, grad_b;
};

inline ConvGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out,
                                 std::size_t stride = 1, std::size_t pad = 0) {
    ConvDims d = conv_dims(x, w, stride, pad);
    if (grad_out.shape() != std::vector<std::size_t>{d.n, d.cout, d.hout, d.wout})
        throw error("conv2d_backward: grad_out shape mismatch");
    ConvGrads g{Tensor(x.dtype(), x.shape()), Tensor(x.dtype(), w.shape()),
                Tensor(x.dtype(), {d.cout})};
    if (x.dtype() == DType::f32)
        detail::conv2d_backward_impl<float>(d, x.data<float>(), w.data<float>(),
                                            grad_out.data<float>(), g.grad_x.data<float>(),
                                            g.grad_w.data<float>(), g.grad_b.data<float>());
    else if (x.dtype() == DType::f64)
        detail::conv2d_backward_impl<double>(
            d, x.data<double>(), w.data<double>(), grad_out.data<double>(),
            g.grad_x.data<double>(), g.grad_w.data<double>(), g.grad_b.data<double>());
    else
        throw error("conv2d_backward: dtype must be f32 or f64");
    return g;
}

namespace detail {

template <typename T> void relu_impl(const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward_impl(const T* x, const T* gy, T* gx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) gx[i] = x[i] > T(0) ? gy[i] : T(0);
}

template <typename F> void dispatch_float(const Tensor& t, F&& f) {
    if (t.dtype() == DType::f32)
        f(float{});
    else if (t.dtype() == DType::f64)
        f(double{});
    else
        throw error("kernel requires f32 or f64");
}

} // namespace detail

inline Tensor relu(const Tensor& x) {
    Tensor y(x.dtype(), x.shape());
    detail::dispatch_float(x, [&]<typename T>(T) {
        detail::relu_impl(x.data<T>(), y.data<T>(), x.numel());
    });
    return y;
}

inline Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
    if (!x.same_shape(grad_out)) throw error("relu_backward: shape mismatch");
    Tensor gx(x.dtype(), x.shape());
    detail::dispatch_float(x, [&]<typename T>(T) {
        detail::relu_backward_impl(x.data<T>(), grad_out.data<T>(), gx.data<T>(), x.numel());
    });
    return gx;
}

/// Nearest-neighbor upsample by an integer factor on [N,C,H,W].
inline Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
    if (x.ndim() != 4) throw error("upsample: 4-d input required");
    if (factor < 1) throw error("upsample: factor must be >= 1");
    std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    Tensor y(x.dtype(), {n, c, h * factor, w * factor});
    detail::dispatch_float(x, [&]<typename T>(T) {
        const T* xd = x.data<T>();
        T* yd = y.data<T>();
        std::size_t ho = h * factor, wo = w * factor;
        for (std::size_t i = 0; i < n * c; ++i)
            for (std::size_t r = 0; r < ho; ++r)
                for (std::size_t col = 0; col < wo; ++col)
                    yd[i * ho * wo + r * wo + col] =
                        xd[i * h * w + (r / factor) * w + (col / factor)];
    });
    return y;
}

/// Gradient of upsample_nearest: block sum back onto the coarse grid.
inline Tensor upsample_nearest_backward(const Tensor& grad_out, std::size_t factor) {
    if (grad_out.ndim() != 4) throw error("upsample_backward: 4-d input required");
    std::size_t n = grad_out.extent(0), c = grad_out.extent(1);
    std::size_t ho = grad_out.extent(2), wo = grad_out.extent(3);
    if (ho % factor != 0 || wo % factor != 0)
        throw error("upsample_backward: extent not divisible by factor");
    std::size_t h = ho / factor, w = wo / factor;
    Tensor gx(grad_out.dtype(), {n, c, h, w});
    detail::dispatch_float(grad_out, [&]<typename T>(T) {
        const T* gy = grad_out.data<T>();
        T* g = gx.data<T>();
        for (std::size_t i = 0; i < n * c; ++i)
            for (std::size_t r = 0; r < ho; ++r)
                for (std::size_t col = 0; col < wo; ++col)
                    g[i * h * w + (r / factor) * w + (col / factor)] +=
                        gy[i * ho * wo + r * wo + col];
    });
    return gx;
}

/// Per-pixel softmax over the channel axis of [N,K,H,W], max-subtracted.
inline Tensor softmax_channels(const Tensor& x) {
    if (x.ndim() != 4) throw error("softmax_channels: 4-d input required");
    std::size_t k = x.extent(1);
    if (k < 2) throw error("softmax_channels: need K >= 2");
    Tensor y(x.dtype(), x.shape());
    detail::dispatch_float(x, [&]<typename T>(T) {
        const T* xd = x.data<T>();
        T* yd = y.data<T>();
        std::size_t n = x.extent(0), hw = x.extent(2) * x.extent(3);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t p = 0; p < hw; ++p) {
                T mx = xd[b * k * hw + p];
                for (std::size_t c = 1; c < k; ++c)
                    mx = std::max(mx, xd[(b * k + c) * hw + p]);
                if (!std::isfinite(double(mx)))
                    throw error("softmax_channels: non-finite input");
                T sum = 0;
                for (std::size_t c = 0; c < k; ++c) {
                    T e = std::exp(xd[(b * k + c) * hw + p] - mx);
                    yd[(b * k + c) * hw + p] = e;
                    sum += e;
                }
                for (std::size_t c = 0; c < k; ++c) yd[(b * k + c) * hw + p] /= sum;
            }
    });
    return y;
}

/// Argmax over the channel axis: [N,K,H,W] -> i64 [N,H,W].
inline Tensor argmax_channels(const Tensor& x) {
    if (x.ndim() != 4) throw error("argmax_channels: 4-d input required");
    std::size_t n = x.extent(0), k = x.extent(1), hw = x.extent(2) * x.extent(3);
    Tensor out(DType::i64, {n, x.extent(2), x.extent(3)});
    detail::dispatch_float(x, [&]<typename T>(T) {
        const T* xd = x.data<T>();
        std::int64_t* od = out.data<std::int64_t>();
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t p = 0; p < hw; ++p) {
                std::size_t best = 0;
                T bv = xd[b * k * hw + p];
                for (std::size_t c = 1; c < k; ++c) {
                    T v = xd[(b * k + c) * hw + p];
                    if (v > bv) { bv = v; best = c; }
                }
                od[b * hw + p] = static_cast<std::int64_t>(best);
            }
    });
    return out;
}

} // namespace segkit

#endif
