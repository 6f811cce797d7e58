// Acceptance gate: one binary, ten numbered criteria, pinned tolerances.
// Prints one PASS/FAIL line per check and exits nonzero on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "segkit/dataset.hpp"
#include "segkit/losses.hpp"
#include "segkit/metrics.hpp"
#include "segkit/model.hpp"
#include "segkit/pipeline.hpp"
#include "segkit/prune.hpp"
#include "segkit/quant.hpp"

using namespace segkit;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
    std::printf("  %s  %s\n", ok ? "PASS" : "FAIL", what.c_str());
    if (!ok) ++failures;
}

void banner(int n, const char* title) {
    std::printf("[criterion %d] %s\n", n, title);
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_labels(std::size_t n, std::size_t k, std::size_t h, std::size_t w, Rng& rng) {
    Tensor labels(DType::i64, {n, h, w});
    for (std::size_t i = 0; i < labels.numel(); ++i)
        labels.data<std::int64_t>()[i] = std::int64_t(rng.below(k));
    return labels;
}

Tensor tie_free_logits(std::size_t n, std::size_t k, std::size_t h, std::size_t w, Rng& rng) {
    Tensor logits(DType::f64, {n, k, h, w});
    double* d = logits.data<double>();
    for (std::size_t i = 0; i < logits.numel(); ++i)
        d[i] = rng.uniform(-2.0, 2.0) + 1e-4 * double(i);
    return logits;
}

// ---------- criterion 1: Table 1 size accounting ----------
void criterion1() {
    banner(1, "size accounting: params x 4 B / 10^6");
    auto mb = [](std::uint64_t params) {
        Checkpoint c;
        c.add("w", Tensor(DType::f32, {params}));
        return model_size_mb(c);
    };
    auto two_dec = [](double v) { return std::round(v * 100.0) / 100.0; };
    check(two_dec(mb(363132)) == 1.45, "363,132 params -> 1.45 MB");
    check(two_dec(mb(1363168)) == 5.45, "1,363,168 params -> 5.45 MB");
    check(two_dec(mb(47489184)) == 189.96, "47,489,184 params -> 189.96 MB");
    // the fourth reference row is internally inconsistent: 5.2M params x 4 B
    // is 20.8 MB, not the printed 13.38 MB; report it rather than hide it
    double bisenet_from_params = mb(5200000);
    check(std::abs(bisenet_from_params - 13.38) > 1.0,
          "reference inconsistency reported: ~5.2M params -> " +
              std::to_string(bisenet_from_params) + " MB, printed table says 13.38 MB");
}

// ---------- criterion 2: Table 7 pruned-size arithmetic ----------
void criterion2() {
    banner(2, "pruned size: dense x (1 - amount)");
    double b = pruned_size_mb(13.38, 0.3);
    check(std::abs(b - 9.366) < 1e-9 && std::abs(b - 9.38) / 9.38 <= 0.002,
          "13.38 x 0.7 = 9.366 vs printed 9.38 (<= 0.2%)");
    double i = pruned_size_mb(189.96, 0.95);
    check(std::abs(i - 9.498) < 1e-9 && std::abs(i - 9.73) / 9.73 <= 0.025,
          "189.96 x 0.05 = 9.498 vs printed 9.73 (<= 2.5%, documented discrepancy)");
}

// ---------- criterion 3: Table 8 delta conventions ----------
void criterion3() {
    banner(3, "delta conventions: (v - base)/base x 100");
    double dm = delta_pct(0.707, 0.718);
    check(std::abs(dm - (-1.53)) <= 0.005, "(0.707-0.718)/0.718 = -1.53%");
    double ds = delta_pct(3.21, 13.38);
    check(std::abs(ds - (-76.02)) <= 0.02,
          "(3.21-13.38)/13.38 = -76.01% vs printed -76.02% (<= 0.02)");
}

// ---------- criterion 4: quantization round-trip ----------
void criterion4() {
    banner(4, "quantization round-trip, idempotence, 4x reduction");
    Rng rng(401);
    bool bound_ok = true, idem_ok = true;
    for (int cal = 0; cal < 4 && bound_ok; ++cal) {
        double lo = -double(cal + 1), hi = 0.5 * double(cal + 1);
        Tensor w(DType::f32, {1000000});
        for (std::size_t i = 0; i < w.numel(); ++i)
            w.data<float>()[i] = float(rng.uniform(lo, hi));
        QuantMeta q = calibrate_minmax(w);
        QuantizedTensor qt = quantize(w, q);
        Tensor back = dequantize(qt);
        for (std::size_t i = 0; i < w.numel(); ++i)
            if (std::abs(back.data<float>()[i] - w.data<float>()[i]) > q.scale / 2 + 1e-6f) {
                bound_ok = false;
                break;
            }
        QuantizedTensor again = quantize(back, q);
        if (!(again.payload == qt.payload)) idem_ok = false;
    }
    check(bound_ok, "|w - deq(quant(w))| <= scale/2 on 10^6 values x 4 calibrations");
    check(idem_ok, "grid idempotence: quant(deq(q)) == q exactly");

    Checkpoint c;
    c.add("w", Tensor(DType::f32, {1000000}));
    double ratio = model_size_mb(c) / quant_size_mb(ptq_checkpoint(c));
    check(ratio >= 3.999, "10^6-param checkpoint shrinks by " + std::to_string(ratio) + "x");
}

// ---------- criterion 5: gradient suite ----------
void criterion5() {
    banner(5, "loss gradients vs finite differences (f64, K=5, 8x8)");
    Rng rng(501);
    std::vector<double> weights = {1.3, 0.7, 2.0, 0.4, 0.6};
    struct Case {
        std::string name;
        std::function<LossResult(const Tensor&, const Tensor&)> f;
    };
    std::vector<Case> cases = {
        {"cross_entropy", [](const Tensor& z, const Tensor& y) { return cross_entropy(z, y); }},
        {"focal(g=1)", [](const Tensor& z, const Tensor& y) { return focal(z, y, 1.0); }},
        {"focal(g=2)", [](const Tensor& z, const Tensor& y) { return focal(z, y, 2.0); }},
        {"focal(g=5)", [](const Tensor& z, const Tensor& y) { return focal(z, y, 5.0); }},
        {"dice", [](const Tensor& z, const Tensor& y) { return dice(z, y); }},
        {"cb_focal", [&](const Tensor& z, const Tensor& y) {
             return class_balanced_focal(z, y, 2.0, weights);
         }},
        {"lovasz", [](const Tensor& z, const Tensor& y) { return lovasz_softmax(z, y); }},
        {"focal_lovasz", [](const Tensor& z, const Tensor& y) {
             return focal_lovasz(z, y, 2.0, 0.5);
         }},
    };
    for (const auto& c : cases) {
        double worst_rel = 0, worst_sum = 0;
        int probed = 0;
        for (int inst = 0; inst < 20; ++inst) {
            Tensor z = tie_free_logits(1, 5, 8, 8, rng);
            Tensor y = random_labels(1, 5, 8, 8, rng);
            LossResult r = c.f(z, y);
            double* zd = z.data<double>();
            // probe 12 coordinates per instance with central differences
            for (int p = 0; p < 12; ++p) {
                std::size_t i = rng.below(z.numel());
                double saved = zd[i];
                auto central = [&](double h) {
                    zd[i] = saved + h;
                    double fp = c.f(z, y).value;
                    zd[i] = saved - h;
                    double fm = c.f(z, y).value;
                    zd[i] = saved;
                    return (fp - fm) / (2 * h);
                };
                double fd = central(1e-5);
                double an = r.grad.data<double>()[i];
                ++probed;
                // FD carries an absolute noise floor of ~eps*|f|/h (~1e-11
                // here); gradients near that floor are compared absolutely
                if (std::abs(an - fd) <= 1e-10) continue;
                double rel = std::abs(an - fd) /
                             std::max({std::abs(an), std::abs(fd), 1e-12});
                worst_rel = std::max(worst_rel, rel);
            }
            // per-pixel channel sums
            for (std::size_t pix = 0; pix < 64; ++pix) {
                double s = 0;
                for (std::size_t ch = 0; ch < 5; ++ch)
                    s += r.grad.data<double>()[ch * 64 + pix];
                worst_sum = std::max(worst_sum, std::abs(s));
            }
        }
        check(worst_rel <= 1e-5 && probed == 240,
              c.name + ": max FD rel err " + std::to_string(worst_rel) + " <= 1e-5 (" +
                  std::to_string(probed) + " probes)");
        check(worst_sum <= 1e-9,
              c.name + ": max channel sum " + std::to_string(worst_sum) + " <= 1e-9");
    }
}

// ---------- criterion 6: lovasz brute-force oracle ----------
void criterion6() {
    banner(6, "lovasz_softmax == brute-force Jaccard on all 2^m binary maps");
    auto jacc = [](const std::vector<int>& p, const std::vector<int>& g) {
        std::size_t inter = 0, uni = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (p[i] && g[i]) ++inter;
            if (p[i] || g[i]) ++uni;
        }
        return uni == 0 ? 0.0 : 1.0 - double(inter) / double(uni);
    };
    Rng rng(601);
    bool all_ok = true;
    double worst = 0;
    for (std::size_t m = 1; m <= 10; ++m) {
        std::vector<int> gt(m);
        for (auto& g : gt) g = rng.bernoulli(0.5) ? 1 : 0;
        if (std::count(gt.begin(), gt.end(), 1) == 0) gt[0] = 1;
        Tensor labels(DType::i64, {1, 1, m});
        for (std::size_t i = 0; i < m; ++i) labels.data<std::int64_t>()[i] = gt[i];
        for (std::uint64_t bits = 0; bits < (1ull << m); ++bits) {
            Tensor probs(DType::f64, {1, 2, 1, m});
            std::vector<int> pred(m), pred0(m), gt0(m);
            for (std::size_t i = 0; i < m; ++i) {
                pred[i] = int((bits >> i) & 1);
                probs.data<double>()[m + i] = double(pred[i]);
                probs.data<double>()[i] = 1.0 - double(pred[i]);
                pred0[i] = 1 - pred[i];
                gt0[i] = 1 - gt[i];
            }
            double expect = jacc(pred, gt);
            std::size_t present = 1;
            if (std::count(gt0.begin(), gt0.end(), 1) > 0) {
                expect += jacc(pred0, gt0);
                present = 2;
            }
            expect /= double(present);
            double got = lovasz_softmax_probs(probs, labels);
            worst = std::max(worst, std::abs(got - expect));
            if (std::abs(got - expect) > 1e-12) all_ok = false;
        }
    }
    check(all_ok, "exact over all m <= 10 (worst |diff| " + std::to_string(worst) + ")");
}

// ---------- criterion 7: metrics oracle ----------
void criterion7() {
    banner(7, "confusion/IoU vs brute force; Table 4 background-inclusion arithmetic");
    Rng rng(701);
    bool all_ok = true;
    for (int pair = 0; pair < 100; ++pair) {
        std::size_t k = 5;
        std::vector<std::int64_t> gt(256), pr(256);
        for (std::size_t i = 0; i < 256; ++i) {
            gt[i] = std::int64_t(rng.below(k));
            pr[i] = std::int64_t(rng.below(k));
        }
        Tensor gt_t(DType::i64, {16, 16}), pr_t(DType::i64, {16, 16});
        std::copy(gt.begin(), gt.end(), gt_t.data<std::int64_t>());
        std::copy(pr.begin(), pr.end(), pr_t.data<std::int64_t>());
        ConfusionMatrix cm(k);
        cm.update(gt_t, pr_t);
        auto iou = iou_per_class(cm);
        for (std::size_t c = 0; c < k; ++c) {
            std::uint64_t inter = 0, uni = 0;
            for (std::size_t i = 0; i < 256; ++i) {
                bool a = std::size_t(gt[i]) == c, b = std::size_t(pr[i]) == c;
                if (a && b) ++inter;
                if (a || b) ++uni;
            }
            double want = uni == 0 ? -1.0 : double(inter) / double(uni);
            if (iou[c] != want) all_ok = false;
        }
    }
    check(all_ok, "exact equality on 100 random 16x16 map pairs");

    double mean = (0.567 + 0.988 + 0.569 + 0.618 + 0.668) / 5.0;
    check(std::abs(mean - 0.682) <= 0.001,
          "mean(0.567, 0.988, 0.569, 0.618, 0.668) = 0.682 +- 0.001");
}

// ---------- criterion 8 (+ report for criterion 10) ----------
struct DeskRun {
    double final_miou = 0, pruned_miou = 0, quant_miou = 0;
    std::string report;
};

DeskRun desk_run() {
    SynthConfig synth;
    synth.seed = 7;
    synth.image_size = 64;
    auto all = generate_dataset(synth, 200);
    std::vector<SceneSample> tr(all.begin(), all.begin() + 160);
    std::vector<SceneSample> va(all.begin() + 160, all.end());

    TinySegNet net = TinySegNet::init(16, 5, 0);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 8;
    cfg.lr = 5e-4;
    cfg.seed = 0;
    auto history = train(net, tr, va, cfg, LossSpec{});

    DeskRun r;
    r.final_miou = history.back().miou;

    Checkpoint base = net.to_checkpoint();
    PruneSpec ps;
    ps.amount = 0.3;
    Checkpoint pruned = apply_mask(base, build_masks(base, ps));
    r.pruned_miou = miou(evaluate(TinySegNet::from_checkpoint(pruned), va));
    Checkpoint q = ptq_checkpoint(base);
    r.quant_miou = miou(evaluate(TinySegNet::from_checkpoint(dequantize_checkpoint(q)), va));

    r.report = trace_csv(history, 5);
    char tail[160];
    std::snprintf(tail, sizeof(tail), "final=%.6f pruned=%.6f quant=%.6f\n", r.final_miou,
                  r.pruned_miou, r.quant_miou);
    r.report += tail;
    return r;
}

DeskRun criterion8() {
    banner(8, "end-to-end desk run: train, prune 0.3, PTQ");
    auto t0 = std::chrono::steady_clock::now();
    DeskRun r = desk_run();
    double secs = elapsed_s(t0);
    check(r.final_miou >= 0.80,
          "validation mIoU " + std::to_string(r.final_miou) + " >= 0.80");
    check(r.final_miou - r.pruned_miou <= 0.05,
          "L1 prune(0.3) degrades by " + std::to_string(r.final_miou - r.pruned_miou) +
              " <= 0.05");
    check(r.final_miou - r.quant_miou <= 0.02,
          "PTQ degrades by " + std::to_string(r.final_miou - r.quant_miou) + " <= 0.02");
    check(secs <= 600.0, "runtime " + std::to_string(secs) + " s <= 600 s");
    return r;
}

// ---------- criterion 9 (+ report for criterion 10) ----------
SweepResult sweep_run() {
    PipelineConfig cfg = PipelineConfig::parse(R"(
[data]
seed = 11
size = 32
count = 60
split = 0.8
min_objects = 1
max_objects = 3
class_weights = 8, 1, 0.5, 0.5
[model]
features = 8
[train]
epochs = 12
batch = 8
lr = 1e-3
)");
    return loss_sweep(cfg,
                      {LossKind::cross_entropy, LossKind::focal, LossKind::dice,
                       LossKind::class_balanced_focal, LossKind::lovasz,
                       LossKind::focal_lovasz},
                      {1, 2, 3, 4, 5});
}

SweepResult criterion9() {
    banner(9, "loss sweep: 6 losses x 5 seeds on an imbalanced set");
    auto t0 = std::chrono::steady_clock::now();
    SweepResult res = sweep_run();
    double secs = elapsed_s(t0);
    check(res.entries.size() == 6, "6 per-loss entries emitted");
    bool stats_ok = true;
    for (const auto& e : res.entries)
        if (e.final_miou.size() != 5 || e.mean < 0 || e.mean > 1 || e.sd < 0) stats_ok = false;
    check(stats_ok, "mean +- sd present for every loss over 5 seeds");
    // direction-only: the flag is reported, not required
    std::printf("  INFO  focal_lovasz >= cross_entropy: %s\n",
                res.focal_lovasz_ge_ce ? "yes" : "no");
    std::printf("%s", res.report_text.c_str());
    check(secs <= 2700.0, "runtime " + std::to_string(secs) + " s <= 2700 s");
    return res;
}

// ---------- criterion 10 ----------
void criterion10(const DeskRun& run8, const SweepResult& run9) {
    banner(10, "determinism: byte-identical reports on repetition");
    DeskRun again8 = desk_run();
    check(again8.report == run8.report, "desk-run report identical across repetitions");
    SweepResult again9 = sweep_run();
    check(again9.report_text == run9.report_text,
          "loss-sweep report identical across repetitions");
}

} // namespace

int main() {
    auto t0 = std::chrono::steady_clock::now();
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    criterion7();
    DeskRun run8 = criterion8();
    SweepResult run9 = criterion9();
    criterion10(run8, run9);
    std::printf("\n%s (%d failure%s, %.1f s total)\n", failures == 0 ? "ACCEPTED" : "REJECTED",
                failures, failures == 1 ? "" : "s", elapsed_s(t0));
    return failures == 0 ? 0 : 1;
}
