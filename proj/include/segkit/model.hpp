#ifndef SEGKIT_MODEL_HPP
#define SEGKIT_MODEL_HPP

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "dataset.hpp"
#include "kernels.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "rng.hpp"
#include "tensor.hpp"

// Tiny encoder-decoder segmentation network with hand-written backward,
// Adam/SGD, and the stepped LR schedule.

namespace segkit {

enum class Optimizer { adam, sgd };

struct TrainConfig {
    double lr = 5e-4;
    std::optional<double> lr_decay;   // gamma, e.g. 0.995
    std::optional<std::size_t> step_lr; // epochs per decay step
    std::size_t epochs = 100;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::adam;

    void validate() const {
        if (lr <= 0) throw error("TrainConfig: lr must be positive");
        if (lr_decay && (!step_lr || *step_lr == 0))
            throw error("TrainConfig: step_lr must be positive when decay is set");
        if (batch_size == 0) throw error("TrainConfig: batch_size must be positive");
    }
};

inline double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
    cfg.validate();
    if (cfg.lr_decay && cfg.step_lr)
        return cfg.lr * std::pow(*cfg.lr_decay, double(epoch / *cfg.step_lr));
    return cfg.lr;
}

namespace detail {

// One zero row on top and one zero column on the left. The stride-2 conv
// needs an effective padding of 1/2 per side to halve an even extent; a
// top-left-only pad keeps the conv kernel's integral-output contract.
template <typename T>
Tensor pad_topleft_impl(const Tensor& x) {
    std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    Tensor out(x.dtype(), {n, c, h + 1, w + 1});
    const T* src = x.data<T>();
    T* dst = out.data<T>();
    for (std::size_t nc = 0; nc < n * c; ++nc)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
                dst[(nc * (h + 1) + y + 1) * (w + 1) + xx + 1] = src[(nc * h + y) * w + xx];
    return out;
}

inline Tensor pad_topleft(const Tensor& x) {
    return x.dtype() == DType::f64 ? pad_topleft_impl<double>(x) : pad_topleft_impl<float>(x);
}

template <typename T>
Tensor crop_topleft_impl(const Tensor& g) {
    std::size_t n = g.extent(0), c = g.extent(1), h = g.extent(2) - 1, w = g.extent(3) - 1;
    Tensor out(g.dtype(), {n, c, h, w});
    const T* src = g.data<T>();
    T* dst = out.data<T>();
    for (std::size_t nc = 0; nc < n * c; ++nc)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
                dst[(nc * h + y) * w + xx] = src[(nc * (h + 1) + y + 1) * (w + 1) + xx + 1];
    return out;
}

inline Tensor crop_topleft(const Tensor& g) {
    return g.dtype() == DType::f64 ? crop_topleft_impl<double>(g) : crop_topleft_impl<float>(g);
}

} // namespace detail

/// conv3x3(3->F)+ReLU, conv3x3 stride-2 (F->2F)+ReLU, conv3x3(2F->2F)+ReLU,
/// nearest-upsample x2, conv1x1(2F->K). Output spatial size equals input.
struct TinySegNet {
    std::size_t features = 16;
    std::size_t num_classes = 5;
    Tensor w1, b1, w2, b2, w3, b3, wh, bh;

    static TinySegNet init(std::size_t features, std::size_t num_classes, std::uint64_t seed,
                           DType dtype = DType::f32) {
        TinySegNet net;
        net.features = features;
        net.num_classes = num_classes;
        Rng rng(stream_seed(seed, 0xa11c));
        std::size_t f = features, k = num_classes;
        net.w1 = he_init({f, 3, 3, 3}, rng, dtype);
        net.b1 = Tensor(dtype, {f});
        net.w2 = he_init({2 * f, f, 3, 3}, rng, dtype);
        net.b2 = Tensor(dtype, {2 * f});
        net.w3 = he_init({2 * f, 2 * f, 3, 3}, rng, dtype);
        net.b3 = Tensor(dtype, {2 * f});
        net.wh = he_init({k, 2 * f, 1, 1}, rng, dtype);
        net.bh = Tensor(dtype, {k});
        return net;
    }

    static Tensor he_init(std::vector<std::size_t> shape, Rng& rng, DType dtype) {
        std::size_t fan_in = shape[1] * shape[2] * shape[3];
        double std_dev = std::sqrt(2.0 / double(fan_in));
        Tensor t(DType::f64, shape);
        double* d = t.data<double>();
        for (std::size_t i = 0; i < t.numel(); ++i) d[i] = rng.normal() * std_dev;
        return dtype == DType::f64 ? t : t.cast<double, float>();
    }

    std::vector<std::pair<std::string, Tensor*>> params() {
        return {{"conv1.weight", &w1}, {"conv1.bias", &b1}, {"conv2.weight", &w2},
                {"conv2.bias", &b2},   {"conv3.weight", &w3}, {"conv3.bias", &b3},
                {"head.weight", &wh},  {"head.bias", &bh}};
    }

    std::vector<std::pair<std::string, const Tensor*>> params() const {
        auto mut = const_cast<TinySegNet*>(this)->params();
        std::vector<std::pair<std::string, const Tensor*>> out;
        for (auto& [n, t] : mut) out.emplace_back(n, t);
        return out;
    }

    struct Trace {
        Tensor x, z1, a1, z2, a2, z3, a3, up;
    };

    Tensor forward(const Tensor& images, Trace* trace = nullptr) const {
        if (images.ndim() != 4 || images.extent(1) != 3)
            throw error("TinySegNet: images must be [N,3,H,W]");
        if (images.extent(2) % 2 != 0 || images.extent(3) % 2 != 0)
            throw error("TinySegNet: H and W must be even");
        Tensor z1 = conv2d_forward(images, w1, b1, 1, 1);
        Tensor a1 = relu(z1);
        Tensor z2 = conv2d_forward(detail::pad_topleft(a1), w2, b2, 2, 0);
        Tensor a2 = relu(z2);
        Tensor z3 = conv2d_forward(a2, w3, b3, 1, 1);
        Tensor a3 = relu(z3);
        Tensor up = upsample_nearest(a3, 2);
        Tensor logits = conv2d_forward(up, wh, bh, 1, 0);
        if (trace) *trace = Trace{images, std::move(z1), std::move(a1), std::move(z2),
                                  std::move(a2), std::move(z3), std::move(a3), std::move(up)};
        return logits;
    }

    struct Grads {
        Tensor w1, b1, w2, b2, w3, b3, wh, bh;

        std::vector<Tensor*> list() {
            return {&w1, &b1, &w2, &b2, &w3, &b3, &wh, &bh};
        }
    };

    Grads backward(const Trace& t, const Tensor& grad_logits) const {
        Grads g;
        ConvGrads gh = conv2d_backward(t.up, wh, grad_logits, 1, 0);
        g.wh = std::move(gh.grad_w);
        g.bh = std::move(gh.grad_b);
        Tensor ga3 = upsample_nearest_backward(gh.grad_x, 2);
        Tensor gz3 = relu_backward(t.z3, ga3);
        ConvGrads g3 = conv2d_backward(t.a2, w3, gz3, 1, 1);
        g.w3 = std::move(g3.grad_w);
        g.b3 = std::move(g3.grad_b);
        Tensor gz2 = relu_backward(t.z2, g3.grad_x);
        ConvGrads g2 = conv2d_backward(detail::pad_topleft(t.a1), w2, gz2, 2, 0);
        g.w2 = std::move(g2.grad_w);
        g.b2 = std::move(g2.grad_b);
        Tensor gz1 = relu_backward(t.z1, detail::crop_topleft(g2.grad_x));
        ConvGrads g1 = conv2d_backward(t.x, w1, gz1, 1, 1);
        g.w1 = std::move(g1.grad_w);
        g.b1 = std::move(g1.grad_b);
        return g;
    }

    Checkpoint to_checkpoint() const {
        Checkpoint ckpt;
        for (auto& [name, t] : params()) ckpt.add(name, *t);
        return ckpt;
    }

    static TinySegNet from_checkpoint(const Checkpoint& ckpt) {
        TinySegNet net;
        net.w1 = ckpt.get("conv1.weight").tensor;
        net.b1 = ckpt.get("conv1.bias").tensor;
        net.w2 = ckpt.get("conv2.weight").tensor;
        net.b2 = ckpt.get("conv2.bias").tensor;
        net.w3 = ckpt.get("conv3.weight").tensor;
        net.b3 = ckpt.get("conv3.bias").tensor;
        net.wh = ckpt.get("head.weight").tensor;
        net.bh = ckpt.get("head.bias").tensor;
        net.features = net.w1.extent(0);
        net.num_classes = net.wh.extent(0);
        return net;
    }

    TinySegNet to_f64() const {
        TinySegNet net = *this;
        for (auto& [n, t] : net.params()) *t = t->cast<float, double>();
        return net;
    }
};

/// FLOPs of one forward pass: 2*kh*kw*Cin*Cout*Hout*Wout summed over convs.
inline std::uint64_t estimate_flops(const TinySegNet& net, std::size_t h, std::size_t w) {
    std::uint64_t f = net.features, k = net.num_classes;
    std::uint64_t total = 0;
    total += 2ull * 9 * 3 * f * h * w;
    total += 2ull * 9 * f * (2 * f) * (h / 2) * (w / 2);
    total += 2ull * 9 * (2 * f) * (2 * f) * (h / 2) * (w / 2);
    total += 2ull * 1 * (2 * f) * k * h * w;
    return total;
}

namespace detail {

inline void stack_batch(const std::vector<SceneSample>& data,
                        const std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi,
                        Tensor& images, Tensor& labels) {
    std::size_t h = data[idx[lo]].height(), w = data[idx[lo]].width();
    std::size_t b = hi - lo;
    images = Tensor(DType::f32, {b, 3, h, w});
    labels = Tensor(DType::i64, {b, h, w});
    for (std::size_t i = 0; i < b; ++i) {
        const SceneSample& s = data[idx[lo + i]];
        if (s.height() != h || s.width() != w) throw error("batch: mixed sample sizes");
        std::copy(s.image.data<float>(), s.image.data<float>() + 3 * h * w,
                  images.data<float>() + i * 3 * h * w);
        std::copy(s.labels.data<std::int64_t>(), s.labels.data<std::int64_t>() + h * w,
                  labels.data<std::int64_t>() + i * h * w);
    }
}

struct AdamState {
    std::vector<std::vector<float>> m, v;
    std::size_t step = 0;
};

} // namespace detail

inline ConfusionMatrix evaluate(const TinySegNet& net, const std::vector<SceneSample>& data) {
    if (data.empty()) throw error("evaluate: empty dataset");
    ConfusionMatrix cm(net.num_classes);
    for (const auto& s : data) {
        Tensor images(DType::f32, {1, 3, s.height(), s.width()});
        std::copy(s.image.data<float>(), s.image.data<float>() + s.image.numel(),
                  images.data<float>());
        Tensor pred = argmax_channels(net.forward(images));
        Tensor pred2d = Tensor::from<std::int64_t>(
            {s.height(), s.width()},
            std::vector<std::int64_t>(pred.data<std::int64_t>(),
                                      pred.data<std::int64_t>() + pred.numel()));
        cm.update(s.labels, pred2d);
    }
    return cm;
}

struct EpochStats {
    std::size_t epoch;
    std::vector<double> iou;
    double miou;
    double lr;
};

/// Deterministic training loop; records validation IoU/mIoU every epoch.
inline std::vector<EpochStats> train(TinySegNet& net, const std::vector<SceneSample>& train_set,
                                     const std::vector<SceneSample>& val_set,
                                     const TrainConfig& cfg, const LossSpec& loss,
                                     const AugmentConfig* aug = nullptr) {
    cfg.validate();
    if (train_set.empty()) throw error("train: empty dataset");

    // Adam: beta1=0.9, beta2=0.999, eps=1e-8
    const float beta1 = 0.9f, beta2 = 0.999f, adam_eps = 1e-8f;
    detail::AdamState opt;
    auto named = net.params();
    opt.m.resize(named.size());
    opt.v.resize(named.size());
    for (std::size_t i = 0; i < named.size(); ++i) {
        opt.m[i].assign(named[i].second->numel(), 0.0f);
        opt.v[i].assign(named[i].second->numel(), 0.0f);
    }

    std::vector<EpochStats> history;
    std::vector<std::size_t> idx(train_set.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = lr_at_epoch(cfg, epoch);
        // Fisher-Yates with a per-epoch stream
        Rng shuffle_rng(stream_seed(cfg.seed, 0x5u + epoch));
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[std::size_t(shuffle_rng.below(i))]);

        std::size_t nbatches = (idx.size() + cfg.batch_size - 1) / cfg.batch_size;
        for (std::size_t b = 0; b < nbatches; ++b) {
            std::size_t lo = b * cfg.batch_size;
            std::size_t hi = std::min(lo + cfg.batch_size, idx.size());

            Tensor images, labels;
            if (aug) {
                std::vector<SceneSample> batch;
                batch.reserve(hi - lo);
                Rng aug_rng(stream_seed(cfg.seed, 0xau + epoch * nbatches + b));
                for (std::size_t i = lo; i < hi; ++i)
                    batch.push_back(augment(train_set[idx[i]], *aug, aug_rng));
                std::vector<std::size_t> seq(batch.size());
                std::iota(seq.begin(), seq.end(), std::size_t{0});
                detail::stack_batch(batch, seq, 0, batch.size(), images, labels);
            } else {
                detail::stack_batch(train_set, idx, lo, hi, images, labels);
            }

            TinySegNet::Trace trace;
            Tensor logits = net.forward(images, &trace);
            LossResult lr_res = evaluate_loss(loss, logits, labels);
            if (!std::isfinite(lr_res.value))
                throw error("train: non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(b));
            TinySegNet::Grads grads = net.backward(trace, lr_res.grad);

            ++opt.step;
            auto glist = grads.list();
            for (std::size_t pi = 0; pi < named.size(); ++pi) {
                float* w = named[pi].second->data<float>();
                const float* g = glist[pi]->data<float>();
                std::size_t n = named[pi].second->numel();
                if (cfg.optimizer == Optimizer::sgd) {
                    for (std::size_t i = 0; i < n; ++i) w[i] -= float(lr) * g[i];
                    continue;
                }
                float bc1 = 1.0f - std::pow(beta1, float(opt.step));
                float bc2 = 1.0f - std::pow(beta2, float(opt.step));
                float* m = opt.m[pi].data();
                float* v = opt.v[pi].data();
                for (std::size_t i = 0; i < n; ++i) {
                    m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
                    v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
                    float mh = m[i] / bc1, vh = v[i] / bc2;
                    w[i] -= float(lr) * mh / (std::sqrt(vh) + adam_eps);
                }
            }
        }

        if (!val_set.empty()) {
            ConfusionMatrix cm = evaluate(net, val_set);
            history.push_back({epoch, iou_per_class(cm), miou(cm), lr});
        } else {
            history.push_back({epoch, {}, 0.0, lr});
        }
    }
    return history;
}

} // namespace segkit

#endif
