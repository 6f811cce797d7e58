#ifndef SEGKIT_METRICS_HPP
#define SEGKIT_METRICS_HPP

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <vector>

#include "tensor.hpp"

namespace segkit {

/// K x K pixel counts; entry (g, p) = pixels with ground truth g predicted p.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t k) : k_(k), counts_(k * k, 0) {
        if (k < 2) throw error("ConfusionMatrix: need K >= 2");
    }

    std::size_t num_classes() const { return k_; }
    std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * k_ + pred]; }
    std::uint64_t& at(std::size_t gt, std::size_t pred) { return counts_[gt * k_ + pred]; }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto c : counts_) t += c;
        return t;
    }

    /// Accumulate a labels/predictions map pair (both i64, same shape).
    void update(const Tensor& labels, const Tensor& predictions) {
        if (labels.shape() != predictions.shape())
            throw error("ConfusionMatrix::update: shape mismatch");
        const std::int64_t* g = labels.data<std::int64_t>();
        const std::int64_t* p = predictions.data<std::int64_t>();
        for (std::size_t i = 0; i < labels.numel(); ++i) {
            if (g[i] < 0 || std::size_t(g[i]) >= k_ || p[i] < 0 || std::size_t(p[i]) >= k_)
                throw error("ConfusionMatrix::update: class id out of range");
            ++counts_[std::size_t(g[i]) * k_ + std::size_t(p[i])];
        }
    }

    ConfusionMatrix& merge(const ConfusionMatrix& other) {
        if (other.k_ != k_) throw error("ConfusionMatrix::merge: size mismatch");
        for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
        return *this;
    }

    bool operator==(const ConfusionMatrix& o) const { return k_ == o.k_ && counts_ == o.counts_; }

private:
    std::size_t k_;
    std::vector<std::uint64_t> counts_;
};

/// Per-class IoU = TP / (TP + FP + FN). Classes with zero union get -1
/// (undefined, excluded from the mean); classes with ground-truth pixels but
/// no true positives score 0.
inline std::vector<double> iou_per_class(const ConfusionMatrix& cm) {
    std::size_t k = cm.num_classes();
    if (cm.total() == 0) throw error("iou_per_class: empty confusion matrix");
    std::vector<double> iou(k);
    for (std::size_t c = 0; c < k; ++c) {
        std::uint64_t tp = cm.at(c, c), fp = 0, fn = 0;
        for (std::size_t o = 0; o < k; ++o) {
            if (o == c) continue;
            fp += cm.at(o, c);
            fn += cm.at(c, o);
        }
        std::uint64_t uni = tp + fp + fn;
        iou[c] = uni == 0 ? -1.0 : double(tp) / double(uni);
    }
    return iou;
}

inline double miou(const ConfusionMatrix& cm, bool include_background = true) {
    std::vector<double> iou = iou_per_class(cm);
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t c = include_background ? 0 : 1; c < iou.size(); ++c) {
        if (iou[c] < 0) continue;
        sum += iou[c];
        ++n;
    }
    if (n == 0) throw error("miou: no class with nonzero union");
    return sum / double(n);
}

/// One table row: per-class IoU columns then mIoU, 3 decimals.
inline std::string format_iou_row(const std::string& label, const std::vector<double>& iou,
                                  double miou_value) {
    std::ostringstream os;
    os << label;
    os << std::fixed << std::setprecision(3);
    for (double v : iou) os << " " << (v < 0 ? 0.0 : v);
    os << " " << miou_value;
    return os.str();
}

} // namespace segkit

#endif
