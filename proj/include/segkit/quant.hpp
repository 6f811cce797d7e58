#ifndef SEGKIT_QUANT_HPP
#define SEGKIT_QUANT_HPP

#include <cmath>
#include <functional>
#include <string>

#include "checkpoint.hpp"
#include "tensor.hpp"

// Post-training affine quantization: f32 -> uint8 with a per-tensor float32
// scale and int32 zero_point, reconstructed as (q - zero_point) * scale.

namespace segkit {

struct QuantizedTensor {
    Tensor payload; // u8
    QuantMeta params;
    std::vector<std::size_t> shape;
};

/// Round half away from zero (round-half-even would change payloads).
inline double round_half_away(double v) { return std::round(v); }

/// Min-max calibration: scale = (max-min)/255, zero_point = clamp(round(-min/scale)).
inline QuantMeta calibrate_minmax(const Tensor& w) {
    if (w.dtype() != DType::f32) throw error("calibrate_minmax: f32 input required");
    if (w.numel() == 0) throw error("calibrate_minmax: empty tensor");
    const float* d = w.data<float>();
    double mn = d[0], mx = d[0];
    for (std::size_t i = 0; i < w.numel(); ++i) {
        if (!std::isfinite(double(d[i]))) throw error("calibrate_minmax: non-finite input");
        mn = std::min(mn, double(d[i]));
        mx = std::max(mx, double(d[i]));
    }
    QuantMeta q;
    // zero_point derives from the exact double ratio, not the narrowed f32
    // scale, so e.g. [-1,1] lands on round(127.5) = 128
    double scale = mx == mn ? 1.0 : (mx - mn) / 255.0;
    q.scale = float(scale);
    double zp = round_half_away(-mn / scale);
    q.zero_point = std::int32_t(std::clamp(zp, 0.0, 255.0));
    return q;
}

inline QuantizedTensor quantize(const Tensor& w, const QuantMeta& params) {
    if (w.dtype() != DType::f32) throw error("quantize: f32 input required");
    if (params.scale <= 0) throw error("quantize: scale must be positive");
    QuantizedTensor qt;
    qt.params = params;
    qt.shape = w.shape();
    qt.payload = Tensor(DType::u8, w.shape());
    const float* src = w.data<float>();
    std::uint8_t* dst = qt.payload.data<std::uint8_t>();
    for (std::size_t i = 0; i < w.numel(); ++i) {
        double q = round_half_away(double(src[i]) / double(params.scale)) +
                   double(params.zero_point);
        dst[i] = std::uint8_t(std::clamp(q, 0.0, 255.0));
    }
    return qt;
}

inline Tensor dequantize(const QuantizedTensor& qt) {
    Tensor out(DType::f32, qt.shape);
    const std::uint8_t* src = qt.payload.data<std::uint8_t>();
    float* dst = out.data<float>();
    for (std::size_t i = 0; i < out.numel(); ++i)
        dst[i] = float(std::int32_t(src[i]) - qt.params.zero_point) * qt.params.scale;
    return out;
}

/// Integer-accumulated matmul of quantized [M,K] x [K,N] operands; the i32
/// accumulator is safe for inner dims up to 2^15.
inline Tensor quantized_matmul(const QuantizedTensor& a, const QuantizedTensor& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2)
        throw error("quantized_matmul: 2-d operands required");
    std::size_t m = a.shape[0], k = a.shape[1];
    if (b.shape[0] != k) throw error("quantized_matmul: inner dimension mismatch");
    if (k > (1u << 15)) throw error("quantized_matmul: inner dim too large for i32 accumulator");
    std::size_t n = b.shape[1];
    Tensor out(DType::f32, {m, n});
    const std::uint8_t* ad = a.payload.data<std::uint8_t>();
    const std::uint8_t* bd = b.payload.data<std::uint8_t>();
    float* od = out.data<float>();
    float scale = a.params.scale * b.params.scale;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            std::int32_t acc = 0;
            for (std::size_t t = 0; t < k; ++t)
                acc += (std::int32_t(ad[i * k + t]) - a.params.zero_point) *
                       (std::int32_t(bd[t * n + j]) - b.params.zero_point);
            od[i * n + j] = float(acc) * scale;
        }
    return out;
}

/// Weight-only PTQ: quantize every f32 entry accepted by the filter.
inline Checkpoint ptq_checkpoint(
    const Checkpoint& ckpt,
    const std::function<bool(const std::string&)>& layer_filter = nullptr) {
    Checkpoint out;
    for (const auto& [name, e] : ckpt.entries()) {
        bool selected = layer_filter ? layer_filter(name) : true;
        if (!selected) {
            out.add(name, e.tensor, e.quant, e.storage);
            continue;
        }
        if (e.storage == EntryStorage::quantized)
            throw error("ptq_checkpoint: entry already quantized: " + name);
        QuantMeta params = calibrate_minmax(e.tensor);
        QuantizedTensor qt = quantize(e.tensor, params);
        out.add(name, std::move(qt.payload), params, EntryStorage::quantized);
    }
    return out;
}

inline double quant_size_mb(const Checkpoint& ckpt) { return model_size_mb(ckpt); }

/// Reconstruct every quantized entry back to f32 (for running the model).
inline Checkpoint dequantize_checkpoint(const Checkpoint& ckpt) {
    Checkpoint out;
    for (const auto& [name, e] : ckpt.entries()) {
        if (e.storage != EntryStorage::quantized) {
            out.add(name, e.tensor, e.quant, EntryStorage::dense);
            continue;
        }
        QuantizedTensor qt{e.tensor, *e.quant, e.tensor.shape()};
        out.add(name, dequantize(qt));
    }
    return out;
}

} // namespace segkit

#endif
