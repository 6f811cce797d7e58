#ifndef SEGKIT_TEST_ORACLES_HPP
#define SEGKIT_TEST_ORACLES_HPP

// Test-only reference implementations, kept independent of the library's
// compute paths: naive convolution, central finite differences, and
// brute-force pixel counting.

#include <cmath>
#include <functional>
#include <vector>

#include "segkit/rng.hpp"
#include "segkit/tensor.hpp"

namespace segkit::testing {

/// Direct 6-nested-loop cross-correlation in double precision.
inline Tensor conv2d_reference(const Tensor& x, const Tensor& w, const Tensor& b,
                               std::size_t stride, std::size_t pad) {
    std::size_t n = x.extent(0), cin = x.extent(1), h = x.extent(2), ww = x.extent(3);
    std::size_t cout = w.extent(0), kh = w.extent(2), kw = w.extent(3);
    std::size_t hout = (h + 2 * pad - kh) / stride + 1;
    std::size_t wout = (ww + 2 * pad - kw) / stride + 1;
    Tensor y(DType::f64, {n, cout, hout, wout});
    auto xv = [&](std::size_t nn, std::size_t c, std::ptrdiff_t i, std::ptrdiff_t j) -> double {
        if (i < 0 || j < 0 || i >= std::ptrdiff_t(h) || j >= std::ptrdiff_t(ww)) return 0.0;
        if (x.dtype() == DType::f64)
            return x.data<double>()[((nn * cin + c) * h + std::size_t(i)) * ww + std::size_t(j)];
        return double(x.data<float>()[((nn * cin + c) * h + std::size_t(i)) * ww + std::size_t(j)]);
    };
    auto wv = [&](std::size_t o, std::size_t c, std::size_t p, std::size_t q) -> double {
        if (w.dtype() == DType::f64)
            return w.data<double>()[((o * cin + c) * kh + p) * kw + q];
        return double(w.data<float>()[((o * cin + c) * kh + p) * kw + q]);
    };
    double* out = y.data<double>();
    for (std::size_t nn = 0; nn < n; ++nn)
        for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t i = 0; i < hout; ++i)
                for (std::size_t j = 0; j < wout; ++j) {
                    double acc = b.dtype() == DType::f64 ? b.data<double>()[o]
                                                         : double(b.data<float>()[o]);
                    for (std::size_t c = 0; c < cin; ++c)
                        for (std::size_t p = 0; p < kh; ++p)
                            for (std::size_t q = 0; q < kw; ++q)
                                acc += xv(nn, c,
                                          std::ptrdiff_t(i * stride + p) - std::ptrdiff_t(pad),
                                          std::ptrdiff_t(j * stride + q) - std::ptrdiff_t(pad)) *
                                       wv(o, c, p, q);
                    out[((nn * cout + o) * hout + i) * wout + j] = acc;
                }
    return y;
}

/// Central finite difference of a scalar functional w.r.t. one f64 tensor.
inline std::vector<double> finite_diff(Tensor& x, const std::function<double()>& f,
                                       double h = 1e-6) {
    double* d = x.data<double>();
    std::vector<double> grad(x.numel());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        double saved = d[i];
        d[i] = saved + h;
        double fp = f();
        d[i] = saved - h;
        double fm = f();
        d[i] = saved;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

inline double rel_err(double a, double b) {
    double denom = std::max({std::abs(a), std::abs(b), 1e-12});
    return std::abs(a - b) / denom;
}

/// Max relative error between an analytic gradient and finite differences,
/// ignoring coordinates where both are tiny.
inline double max_grad_rel_err(const std::vector<double>& analytic,
                               const std::vector<double>& numeric, double floor = 1e-7) {
    double worst = 0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        if (std::abs(analytic[i]) < floor && std::abs(numeric[i]) < floor) continue;
        worst = std::max(worst, rel_err(analytic[i], numeric[i]));
    }
    return worst;
}

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, DType dtype = DType::f64,
                            double lo = -1.0, double hi = 1.0) {
    Tensor t(DType::f64, shape);
    double* d = t.data<double>();
    for (std::size_t i = 0; i < t.numel(); ++i) d[i] = rng.uniform(lo, hi);
    return dtype == DType::f64 ? t : t.cast<double, float>();
}

} // namespace segkit::testing

#endif
