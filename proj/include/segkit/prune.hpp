#ifndef SEGKIT_PRUNE_HPP
#define SEGKIT_PRUNE_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "rng.hpp"
#include "tensor.hpp"

// Per-layer pruning mask generation and application. Masks zero individual
// weights (unstructured) or whole output channels (structured); biases and
// the classifier head are exempt by default.

namespace segkit {

enum class PruneMethod {
    random_unstructured,
    l1_unstructured,
    random_structured,
    ln_structured,
};

inline PruneMethod prune_method_from_string(const std::string& s) {
    if (s == "random_unstructured") return PruneMethod::random_unstructured;
    if (s == "l1_unstructured") return PruneMethod::l1_unstructured;
    if (s == "random_structured") return PruneMethod::random_structured;
    if (s == "ln_structured") return PruneMethod::ln_structured;
    throw error("unknown prune method: " + s);
}

struct PruneSpec {
    PruneMethod method = PruneMethod::l1_unstructured;
    double amount = 0.0;
    double norm_order = 2.0; // n for ln_structured
    std::uint64_t seed = 0;
    bool exempt_head = true; // final classifier layer untouched

    void validate() const {
        if (amount < 0 || amount > 1) throw error("PruneSpec: amount must be in [0,1]");
        if (norm_order < 1) throw error("PruneSpec: norm order must be >= 1");
    }
};

/// Per-target binary masks, 0 = pruned. Stored as u8 tensors.
using PruneMask = std::map<std::string, Tensor>;

namespace detail {

inline Tensor ones_mask(const Tensor& w) {
    Tensor m(DType::u8, w.shape());
    std::fill(m.raw().begin(), m.raw().end(), 1);
    return m;
}

} // namespace detail

/// Zero exactly floor(amount*N) entries with smallest |w|, ties broken by
/// ascending flat index.
inline Tensor l1_unstructured_mask(const Tensor& w, double amount) {
    if (amount < 0 || amount > 1) throw error("l1_unstructured_mask: amount outside [0,1]");
    const float* d = w.data<float>();
    std::size_t n = w.numel();
    std::size_t kill = std::size_t(std::floor(amount * double(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        double ma = std::abs(double(d[a])), mb = std::abs(double(d[b]));
        if (ma != mb) return ma < mb;
        return a < b;
    });
    Tensor m = detail::ones_mask(w);
    for (std::size_t i = 0; i < kill; ++i) m.raw()[order[i]] = 0;
    return m;
}

inline Tensor random_unstructured_mask(const Tensor& w, double amount, std::uint64_t seed) {
    if (amount < 0 || amount > 1) throw error("random_unstructured_mask: amount outside [0,1]");
    std::size_t n = w.numel();
    std::size_t kill = std::size_t(std::floor(amount * double(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(stream_seed(seed, 0x9121));
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[std::size_t(rng.below(i))]);
    Tensor m = detail::ones_mask(w);
    for (std::size_t i = 0; i < kill; ++i) m.raw()[order[i]] = 0;
    return m;
}

namespace detail {

inline Tensor structured_mask(const Tensor& w, const std::vector<std::size_t>& channels) {
    if (w.ndim() < 2) throw error("structured pruning needs an output-channel axis");
    std::size_t c = w.extent(0), per = w.numel() / c;
    Tensor m = ones_mask(w);
    for (std::size_t ch : channels)
        std::fill(m.raw().begin() + std::ptrdiff_t(ch * per),
                  m.raw().begin() + std::ptrdiff_t((ch + 1) * per), 0);
    return m;
}

} // namespace detail

/// Zero round(amount*C) whole output channels chosen uniformly per seed.
inline Tensor random_structured_mask(const Tensor& w, double amount, std::uint64_t seed) {
    if (w.ndim() < 2) throw error("random_structured_mask: no channel axis");
    std::size_t c = w.extent(0);
    std::size_t kill = std::size_t(std::lround(amount * double(c)));
    std::vector<std::size_t> order(c);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(stream_seed(seed, 0x57a7));
    for (std::size_t i = c; i > 1; --i)
        std::swap(order[i - 1], order[std::size_t(rng.below(i))]);
    order.resize(kill);
    return detail::structured_mask(w, order);
}

/// Zero round(amount*C) output channels with smallest Ln norm, ties broken by
/// channel index.
inline Tensor ln_structured_mask(const Tensor& w, double amount, double n) {
    if (w.ndim() < 2) throw error("ln_structured_mask: no channel axis");
    if (n < 1) throw error("ln_structured_mask: norm order must be >= 1");
    std::size_t c = w.extent(0), per = w.numel() / c;
    const float* d = w.data<float>();
    std::vector<double> norms(c, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < per; ++i)
            norms[ch] += std::pow(std::abs(double(d[ch * per + i])), n);
        norms[ch] = std::pow(norms[ch], 1.0 / n);
    }
    std::vector<std::size_t> order(c);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (norms[a] != norms[b]) return norms[a] < norms[b];
        return a < b;
    });
    order.resize(std::size_t(std::lround(amount * double(c))));
    return detail::structured_mask(w, order);
}

inline bool is_prune_target(const std::string& name, bool exempt_head) {
    if (name.size() < 7 || name.substr(name.size() - 7) != ".weight") return false;
    if (exempt_head && name.rfind("head.", 0) == 0) return false;
    return true;
}

/// Build masks for every conv weight tensor selected by the spec.
inline PruneMask build_masks(const Checkpoint& ckpt, const PruneSpec& spec) {
    spec.validate();
    PruneMask masks;
    for (const auto& [name, e] : ckpt.entries()) {
        if (!is_prune_target(name, spec.exempt_head)) continue;
        if (e.tensor.dtype() != DType::f32)
            throw error("build_masks: prune targets must be f32");
        switch (spec.method) {
        case PruneMethod::l1_unstructured:
            masks[name] = l1_unstructured_mask(e.tensor, spec.amount);
            break;
        case PruneMethod::random_unstructured:
            masks[name] = random_unstructured_mask(e.tensor, spec.amount, spec.seed);
            break;
        case PruneMethod::random_structured:
            masks[name] = random_structured_mask(e.tensor, spec.amount, spec.seed);
            break;
        case PruneMethod::ln_structured:
            masks[name] = ln_structured_mask(e.tensor, spec.amount, spec.norm_order);
            break;
        }
    }
    return masks;
}

/// Elementwise multiply; idempotent.
inline Checkpoint apply_mask(const Checkpoint& ckpt, const PruneMask& masks) {
    Checkpoint out;
    for (const auto& [name, e] : ckpt.entries()) {
        auto it = masks.find(name);
        if (it == masks.end()) {
            out.add(name, e.tensor, e.quant, e.storage);
            continue;
        }
        if (it->second.shape() != e.tensor.shape())
            throw error("apply_mask: mask/checkpoint shape mismatch for " + name);
        Tensor t = e.tensor;
        float* d = t.data<float>();
        const std::uint8_t* m = it->second.data<std::uint8_t>();
        for (std::size_t i = 0; i < t.numel(); ++i)
            if (m[i] == 0) d[i] = 0.0f;
        out.add(name, std::move(t), e.quant, e.storage);
    }
    return out;
}

/// Fraction of zero elements across prune-target tensors.
inline double sparsity(const Checkpoint& ckpt, bool exempt_head = true) {
    std::uint64_t zeros = 0, total = 0;
    for (const auto& [name, e] : ckpt.entries()) {
        if (!is_prune_target(name, exempt_head)) continue;
        const float* d = e.tensor.data<float>();
        for (std::size_t i = 0; i < e.tensor.numel(); ++i)
            if (d[i] == 0.0f) ++zeros;
        total += e.tensor.numel();
    }
    if (total == 0) throw error("sparsity: no prune targets");
    return double(zeros) / double(total);
}

/// The amount-as-size-multiplier accounting used by the reference tables.
inline double pruned_size_mb(double dense_mb, double amount) {
    if (amount < 0 || amount > 1) throw error("pruned_size_mb: amount outside [0,1]");
    return dense_mb * (1.0 - amount);
}

/// Re-encode pruned dense entries as sparse (index, value) pairs so the size
/// reduction is physically real on disk.
inline Checkpoint to_sparse(const Checkpoint& ckpt, const PruneMask& masks) {
    Checkpoint out;
    for (const auto& [name, e] : ckpt.entries()) {
        if (masks.count(name) && e.storage == EntryStorage::dense)
            out.add(name, e.tensor, std::nullopt, EntryStorage::sparse);
        else
            out.add(name, e.tensor, e.quant, e.storage);
    }
    return out;
}

} // namespace segkit

#endif
