#ifndef SEGKIT_LOSSES_HPP
#define SEGKIT_LOSSES_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "kernels.hpp"
#include "tensor.hpp"

// Per-pixel segmentation losses over logits [N,K,H,W] with integer label maps
// [N,H,W]. Each loss returns its scalar value together with the analytic
// gradient w.r.t. the logits; gradients live in the softmax tangent space, so
// per-pixel channel sums vanish.

namespace segkit {

enum class LossKind {
    cross_entropy,
    focal,
    dice,
    class_balanced_focal,
    lovasz,
    focal_lovasz,
};

inline LossKind loss_kind_from_string(const std::string& s) {
    if (s == "cross_entropy" || s == "ce") return LossKind::cross_entropy;
    if (s == "focal") return LossKind::focal;
    if (s == "dice") return LossKind::dice;
    if (s == "class_balanced_focal" || s == "cbfl") return LossKind::class_balanced_focal;
    if (s == "lovasz") return LossKind::lovasz;
    if (s == "focal_lovasz") return LossKind::focal_lovasz;
    throw error("unknown loss: " + s);
}

inline std::string loss_kind_name(LossKind k) {
    switch (k) {
    case LossKind::cross_entropy: return "cross_entropy";
    case LossKind::focal: return "focal";
    case LossKind::dice: return "dice";
    case LossKind::class_balanced_focal: return "class_balanced_focal";
    case LossKind::lovasz: return "lovasz";
    case LossKind::focal_lovasz: return "focal_lovasz";
    }
    return "?";
}

struct LossSpec {
    LossKind kind = LossKind::cross_entropy;
    double gamma = 2.0;   // focal exponent
    double beta = 0.999;  // effective-number hyperparameter
    double eps = 1e-6;    // dice smoothing
    double lambda = 0.5;  // focal share in focal_lovasz
    std::vector<double> class_weights; // for class_balanced_focal

    void validate() const {
        if (gamma < 0) throw error("LossSpec: gamma must be >= 0");
        if (beta < 0 || beta >= 1) throw error("LossSpec: beta must be in [0,1)");
        if (eps <= 0) throw error("LossSpec: eps must be positive");
        if (lambda < 0 || lambda > 1) throw error("LossSpec: lambda must be in [0,1]");
    }
};

struct LossResult {
    double value = 0;
    Tensor grad; // same dtype/shape as the logits
};

/// Effective-number class weights: E_c = (1-beta^n_c)/(1-beta), w_c ~ 1/E_c,
/// normalized so present-class weights sum to the number of present classes.
inline std::vector<double> effective_number_weights(const std::vector<std::uint64_t>& counts,
                                                    double beta) {
    if (beta < 0 || beta >= 1) throw error("effective_number_weights: beta outside [0,1)");
    std::vector<double> w(counts.size(), 0.0);
    std::size_t present = 0;
    double sum = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) continue;
        double eff = beta == 0.0
                         ? 1.0
                         : (1.0 - std::pow(beta, double(counts[c]))) / (1.0 - beta);
        w[c] = 1.0 / eff;
        sum += w[c];
        ++present;
    }
    if (present == 0) throw error("effective_number_weights: all counts zero");
    for (double& x : w) x *= double(present) / sum;
    return w;
}

namespace detail {

inline void check_labels(const Tensor& logits, const Tensor& labels) {
    if (logits.ndim() != 4) throw error("loss: logits must be [N,K,H,W]");
    if (labels.ndim() != 3) throw error("loss: labels must be [N,H,W]");
    if (labels.extent(0) != logits.extent(0) || labels.extent(1) != logits.extent(2) ||
        labels.extent(2) != logits.extent(3))
        throw error("loss: logits/labels shape mismatch");
    std::int64_t k = std::int64_t(logits.extent(1));
    const std::int64_t* lab = labels.data<std::int64_t>();
    for (std::size_t i = 0; i < labels.numel(); ++i)
        if (lab[i] < 0 || lab[i] >= k) throw error("loss: label out of range");
}

// dL/dz from dL/dp through the per-pixel softmax Jacobian.
template <typename T>
void softmax_chain(const Tensor& probs, const std::vector<double>& dldp, Tensor& grad) {
    const T* p = probs.data<T>();
    T* g = grad.data<T>();
    std::size_t n = probs.extent(0), k = probs.extent(1);
    std::size_t hw = probs.extent(2) * probs.extent(3);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t pix = 0; pix < hw; ++pix) {
            double dot = 0;
            for (std::size_t c = 0; c < k; ++c)
                dot += double(p[(b * k + c) * hw + pix]) * dldp[(b * k + c) * hw + pix];
            for (std::size_t c = 0; c < k; ++c) {
                std::size_t i = (b * k + c) * hw + pix;
                g[i] = T(double(p[i]) * (dldp[i] - dot));
            }
        }
}

template <typename T>
LossResult cross_entropy_impl(const Tensor& logits, const Tensor& labels) {
    Tensor probs = softmax_channels(logits);
    const T* p = probs.data<T>();
    const std::int64_t* lab = labels.data<std::int64_t>();
    std::size_t n = logits.extent(0), k = logits.extent(1);
    std::size_t hw = logits.extent(2) * logits.extent(3);
    double npix = double(n * hw);

    LossResult r;
    r.grad = Tensor(logits.dtype(), logits.shape());
    T* g = r.grad.data<T>();
    double value = 0;
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t pix = 0; pix < hw; ++pix) {
            auto t = std::size_t(lab[b * hw + pix]);
            double pt = std::max(double(p[(b * k + t) * hw + pix]), 1e-300);
            value -= std::log(pt);
            for (std::size_t c = 0; c < k; ++c) {
                std::size_t i = (b * k + c) * hw + pix;
                g[i] = T((double(p[i]) - (c == t ? 1.0 : 0.0)) / npix);
            }
        }
    r.value = value / npix;
    return r;
}

template <typename T>
LossResult focal_impl(const Tensor& logits, const Tensor& labels, double gamma,
                      const std::vector<double>* weights) {
    Tensor probs = softmax_channels(logits);
    const T* p = probs.data<T>();
    const std::int64_t* lab = labels.data<std::int64_t>();
    std::size_t n = logits.extent(0), k = logits.extent(1);
    std::size_t hw = logits.extent(2) * logits.extent(3);
    double npix = double(n * hw);

    std::vector<double> dldp(logits.numel(), 0.0);
    double value = 0;
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t pix = 0; pix < hw; ++pix) {
            auto t = std::size_t(lab[b * hw + pix]);
            double w = 1.0;
            if (weights) {
                if (t >= weights->size())
                    throw error("focal: missing class weight for observed label");
                w = (*weights)[t];
            }
            double pt = std::clamp(double(p[(b * k + t) * hw + pix]), 1e-12, 1.0);
            double m = std::max(1.0 - pt, 0.0);
            value += -w * std::pow(m, gamma) * std::log(pt) / npix;
            double d1 = 0;
            if (gamma > 0 && (m > 0 || gamma >= 1))
                d1 = gamma * std::pow(m, gamma - 1.0) * std::log(pt);
            double d2 = -std::pow(m, gamma) / pt;
            dldp[(b * k + t) * hw + pix] = w * (d1 + d2) / npix;
        }
    LossResult r;
    r.value = value;
    r.grad = Tensor(logits.dtype(), logits.shape());
    softmax_chain<T>(probs, dldp, r.grad);
    return r;
}

template <typename T>
LossResult dice_impl(const Tensor& logits, const Tensor& labels, double eps) {
    Tensor probs = softmax_channels(logits);
    const T* p = probs.data<T>();
    const std::int64_t* lab = labels.data<std::int64_t>();
    std::size_t n = logits.extent(0), k = logits.extent(1);
    std::size_t hw = logits.extent(2) * logits.extent(3);
    std::size_t npix = n * hw;

    std::vector<double> inter(k, 0.0), psum(k, 0.0);
    std::vector<std::uint64_t> gsum(k, 0);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t pix = 0; pix < hw; ++pix) {
            auto t = std::size_t(lab[b * hw + pix]);
            ++gsum[t];
            inter[t] += double(p[(b * k + t) * hw + pix]);
            for (std::size_t c = 0; c < k; ++c)
                psum[c] += double(p[(b * k + c) * hw + pix]);
        }
    std::size_t present = 0;
    for (std::size_t c = 0; c < k; ++c)
        if (gsum[c] > 0) ++present;
    if (present == 0) throw error("dice: no class present");

    double value = 0;
    std::vector<double> dnum(k, 0.0), scale(k, 0.0); // per-class d(loss_c)/d terms
    for (std::size_t c = 0; c < k; ++c) {
        if (gsum[c] == 0) continue;
        double num = 2.0 * inter[c] + eps;
        double den = psum[c] + double(gsum[c]) + eps;
        value += (1.0 - num / den) / double(present);
        // d loss_c / dp_j(c) = -(2*g_j*den - num) / den^2, averaged over classes
        dnum[c] = num / (den * den) / double(present);
        scale[c] = 2.0 / den / double(present);
    }

    std::vector<double> dldp(logits.numel(), 0.0);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t pix = 0; pix < hw; ++pix) {
            auto t = std::size_t(lab[b * hw + pix]);
            for (std::size_t c = 0; c < k; ++c) {
                if (gsum[c] == 0) continue;
                double gj = (c == t) ? 1.0 : 0.0;
                dldp[(b * k + c) * hw + pix] = -(scale[c] * gj) + dnum[c];
            }
        }
    (void)npix;
    LossResult r;
    r.value = value;
    r.grad = Tensor(logits.dtype(), logits.shape());
    softmax_chain<T>(probs, dldp, r.grad);
    return r;
}

} // namespace detail

/// Lovász-extension gradient of the Jaccard loss for errors already sorted in
/// descending order against the matching 0/1 ground-truth vector.
inline std::vector<double> lovasz_grad(const std::vector<double>& errors_sorted,
                                       const std::vector<int>& gt_sorted) {
    if (errors_sorted.size() != gt_sorted.size()) throw error("lovasz_grad: length mismatch");
    std::size_t m = gt_sorted.size();
    double total = 0;
    for (int g : gt_sorted) {
        if (g != 0 && g != 1) throw error("lovasz_grad: gt must be 0/1");
        total += g;
    }
    if (total < 1) throw error("lovasz_grad: class absent (P = 0)");
    for (std::size_t j = 1; j < m; ++j)
        if (errors_sorted[j] > errors_sorted[j - 1] + 1e-12)
            throw error("lovasz_grad: errors not sorted descending");

    std::vector<double> g(m);
    double cg = 0, cng = 0, prev = 0;
    for (std::size_t j = 0; j < m; ++j) {
        cg += gt_sorted[j];
        cng += 1 - gt_sorted[j];
        double inter = total - cg;
        double uni = total + cng;
        double jacc = 1.0 - inter / uni;
        g[j] = jacc - prev;
        prev = jacc;
    }
    return g;
}

namespace detail {

// Lovász-softmax over class probabilities, pooled across the batch. Returns
// the loss and fills dL/dp for the softmax chain (or for direct inspection).
template <typename T>
double lovasz_from_probs(const Tensor& probs, const Tensor& labels,
                         std::vector<double>& dldp) {
    const T* p = probs.data<T>();
    const std::int64_t* lab = labels.data<std::int64_t>();
    std::size_t n = probs.extent(0), k = probs.extent(1);
    std::size_t hw = probs.extent(2) * probs.extent(3);
    std::size_t m = n * hw;

    std::vector<std::uint64_t> gsum(k, 0);
    for (std::size_t i = 0; i < m; ++i) ++gsum[std::size_t(lab[i])];
    std::size_t present = 0;
    for (auto c : gsum)
        if (c > 0) ++present;
    if (present == 0) throw error("lovasz: no class present");

    dldp.assign(probs.numel(), 0.0);
    std::vector<double> errs(m);
    std::vector<std::size_t> order(m);
    double value = 0;
    for (std::size_t c = 0; c < k; ++c) {
        if (gsum[c] == 0) continue; // absent classes are skipped
        for (std::size_t i = 0; i < m; ++i) {
            std::size_t b = i / hw, pix = i % hw;
            double pc = double(p[(b * k + c) * hw + pix]);
            errs[i] = std::size_t(lab[i]) == c ? 1.0 - pc : pc;
        }
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (errs[a] != errs[b]) return errs[a] > errs[b];
            return a < b; // deterministic tie-break by pixel index
        });
        std::vector<double> es(m);
        std::vector<int> gs(m);
        for (std::size_t j = 0; j < m; ++j) {
            es[j] = errs[order[j]];
            gs[j] = std::size_t(lab[order[j]]) == c ? 1 : 0;
        }
        std::vector<double> g = lovasz_grad(es, gs);
        for (std::size_t j = 0; j < m; ++j) {
            value += es[j] * g[j] / double(present);
            std::size_t i = order[j];
            std::size_t b = i / hw, pix = i % hw;
            double sign = gs[j] ? -1.0 : 1.0;
            dldp[(b * k + c) * hw + pix] += sign * g[j] / double(present);
        }
    }
    return value;
}

template <typename T>
LossResult lovasz_softmax_impl(const Tensor& logits, const Tensor& labels) {
    Tensor probs = softmax_channels(logits);
    std::vector<double> dldp;
    LossResult r;
    r.value = lovasz_from_probs<T>(probs, labels, dldp);
    r.grad = Tensor(logits.dtype(), logits.shape());
    softmax_chain<T>(probs, dldp, r.grad);
    return r;
}

template <typename T> LossResult dispatch_loss(const LossSpec&, const Tensor&, const Tensor&);

} // namespace detail

inline LossResult cross_entropy(const Tensor& logits, const Tensor& labels) {
    detail::check_labels(logits, labels);
    return logits.dtype() == DType::f64
               ? detail::cross_entropy_impl<double>(logits, labels)
               : detail::cross_entropy_impl<float>(logits, labels);
}

inline LossResult focal(const Tensor& logits, const Tensor& labels, double gamma) {
    detail::check_labels(logits, labels);
    if (gamma < 0) throw error("focal: gamma must be >= 0");
    return logits.dtype() == DType::f64
               ? detail::focal_impl<double>(logits, labels, gamma, nullptr)
               : detail::focal_impl<float>(logits, labels, gamma, nullptr);
}

inline LossResult class_balanced_focal(const Tensor& logits, const Tensor& labels,
                                       double gamma, const std::vector<double>& weights) {
    detail::check_labels(logits, labels);
    return logits.dtype() == DType::f64
               ? detail::focal_impl<double>(logits, labels, gamma, &weights)
               : detail::focal_impl<float>(logits, labels, gamma, &weights);
}

inline LossResult dice(const Tensor& logits, const Tensor& labels, double eps = 1e-6) {
    detail::check_labels(logits, labels);
    if (eps <= 0) throw error("dice: eps must be positive");
    return logits.dtype() == DType::f64 ? detail::dice_impl<double>(logits, labels, eps)
                                        : detail::dice_impl<float>(logits, labels, eps);
}

inline LossResult lovasz_softmax(const Tensor& logits, const Tensor& labels) {
    detail::check_labels(logits, labels);
    return logits.dtype() == DType::f64 ? detail::lovasz_softmax_impl<double>(logits, labels)
                                        : detail::lovasz_softmax_impl<float>(logits, labels);
}

/// Lovász-softmax evaluated directly on probabilities; returns the loss and
/// dL/dp (before the softmax chain). Lets tests feed exact 0/1 predictions.
inline double lovasz_softmax_probs(const Tensor& probs, const Tensor& labels,
                                   std::vector<double>* dldp_out = nullptr) {
    std::vector<double> dldp;
    double v = probs.dtype() == DType::f64
                   ? detail::lovasz_from_probs<double>(probs, labels, dldp)
                   : detail::lovasz_from_probs<float>(probs, labels, dldp);
    if (dldp_out) *dldp_out = std::move(dldp);
    return v;
}

inline LossResult focal_lovasz(const Tensor& logits, const Tensor& labels, double gamma,
                               double lambda) {
    if (lambda < 0 || lambda > 1) throw error("focal_lovasz: lambda must be in [0,1]");
    LossResult f = focal(logits, labels, gamma);
    LossResult l = lovasz_softmax(logits, labels);
    LossResult r;
    r.value = lambda * f.value + (1.0 - lambda) * l.value;
    r.grad = Tensor(logits.dtype(), logits.shape());
    if (logits.dtype() == DType::f64) {
        auto *g = r.grad.data<double>(), *fg = f.grad.data<double>(),
             *lg = l.grad.data<double>();
        for (std::size_t i = 0; i < r.grad.numel(); ++i)
            g[i] = lambda * fg[i] + (1.0 - lambda) * lg[i];
    } else {
        auto *g = r.grad.data<float>(), *fg = f.grad.data<float>(), *lg = l.grad.data<float>();
        for (std::size_t i = 0; i < r.grad.numel(); ++i)
            g[i] = float(lambda) * fg[i] + float(1.0 - lambda) * lg[i];
    }
    return r;
}

inline LossResult evaluate_loss(const LossSpec& spec, const Tensor& logits,
                                const Tensor& labels) {
    spec.validate();
    switch (spec.kind) {
    case LossKind::cross_entropy: return cross_entropy(logits, labels);
    case LossKind::focal: return focal(logits, labels, spec.gamma);
    case LossKind::dice: return dice(logits, labels, spec.eps);
    case LossKind::class_balanced_focal:
        return class_balanced_focal(logits, labels, spec.gamma, spec.class_weights);
    case LossKind::lovasz: return lovasz_softmax(logits, labels);
    case LossKind::focal_lovasz:
        return focal_lovasz(logits, labels, spec.gamma, spec.lambda);
    }
    throw error("unknown loss kind");
}

} // namespace segkit

#endif
