#ifndef SEGKIT_PIPELINE_HPP
#define SEGKIT_PIPELINE_HPP

#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "dataset.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "prune.hpp"
#include "quant.hpp"

// Config-driven orchestration: data -> train -> eval -> prune -> quantize ->
// combined, with publication-style report tables.

namespace segkit {

struct ReportRow {
    std::string label;
    std::vector<double> iou; // material classes only (background excluded)
    double miou = 0;
    double size_mb = 0;
    bool is_baseline = false;
    double dmiou_pct = 0;
    double dsize_pct = 0;
    bool over_budget = false;
};

inline double delta_pct(double value, double baseline) {
    return (value - baseline) / baseline * 100.0;
}

inline std::string format_signed_pct(double pct) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << std::showpos << pct << "%";
    return os.str();
}

/// Text table: label, material-class IoU columns (multi-class mode only),
/// mIoU, Size (MB), delta columns vs the baseline row.
inline std::string report_table(const std::vector<ReportRow>& rows, std::size_t num_classes) {
    if (rows.empty()) throw error("report_table: no rows");
    bool multiclass = num_classes > 2;
    std::ostringstream os;
    os << std::left << std::setw(22) << "label";
    if (multiclass)
        for (std::size_t c = 1; c < num_classes; ++c)
            os << std::right << std::setw(11) << class_names()[c];
    os << std::right << std::setw(9) << "mIoU" << std::setw(11) << "Size (MB)"
       << std::setw(11) << "dmIoU %" << std::setw(11) << "dSize %" << "\n";
    for (const auto& r : rows) {
        os << std::left << std::setw(22) << r.label << std::right << std::fixed;
        if (multiclass)
            for (double v : r.iou) os << std::setw(11) << std::setprecision(3) << v;
        os << std::setw(9) << std::setprecision(3) << r.miou;
        os << std::setw(11) << std::setprecision(2) << r.size_mb;
        if (r.is_baseline)
            os << std::setw(11) << "-" << std::setw(11) << "-";
        else
            os << std::setw(11) << format_signed_pct(r.dmiou_pct) << std::setw(11)
               << format_signed_pct(r.dsize_pct);
        if (r.over_budget) os << "  [over budget]";
        os << "\n";
    }
    return os.str();
}

inline std::string report_csv(const std::vector<ReportRow>& rows, std::size_t num_classes) {
    std::ostringstream os;
    os << "label";
    if (num_classes > 2)
        for (std::size_t c = 1; c < num_classes; ++c) os << "," << class_names()[c];
    os << ",miou,size_mb,dmiou_pct,dsize_pct,over_budget\n";
    os << std::fixed;
    for (const auto& r : rows) {
        os << r.label;
        if (num_classes > 2)
            for (double v : r.iou) os << "," << std::setprecision(3) << v;
        os << "," << std::setprecision(3) << r.miou;
        os << "," << std::setprecision(2) << r.size_mb;
        if (r.is_baseline)
            os << ",,";
        else
            os << "," << std::setprecision(2) << r.dmiou_pct << "," << std::setprecision(2)
               << r.dsize_pct;
        os << "," << (r.over_budget ? 1 : 0) << "\n";
    }
    return os.str();
}

inline std::string trace_csv(const std::vector<EpochStats>& history, std::size_t num_classes) {
    std::ostringstream os;
    os << "epoch";
    for (std::size_t c = 0; c < num_classes; ++c)
        os << ",iou_" << (num_classes == 5 ? class_names()[c] : "class" + std::to_string(c));
    os << ",miou,lr\n";
    for (const auto& e : history) {
        os << e.epoch << std::fixed;
        for (double v : e.iou) os << "," << std::setprecision(6) << std::max(v, 0.0);
        os << "," << std::setprecision(6) << e.miou;
        os << "," << std::setprecision(10) << e.lr << "\n";
    }
    return os.str();
}

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::vector<double> material_iou(const ConfusionMatrix& cm) {
    auto iou = iou_per_class(cm);
    std::vector<double> out;
    for (std::size_t c = 1; c < iou.size(); ++c) out.push_back(std::max(iou[c], 0.0));
    return out;
}

} // namespace detail

struct PipelineResult {
    std::vector<ReportRow> rows;
    std::vector<EpochStats> history;
    bool budget_ok = true;
    std::string report_text;
};

/// Run the full pipeline into out_dir. When a manifest from a previous run
/// with the same config hash is present and the trained checkpoint exists,
/// training is resumed (skipped) from that artifact.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, const std::string& config_text,
                                   const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "dataset");
    std::string cfg_hash = std::to_string(detail::fnv1a(config_text));

    // --- data ---
    std::vector<std::pair<std::string, std::string>> manifest;
    for (std::size_t i = 0; i < cfg.count; ++i) {
        SceneSample s = generate_scene(cfg.synth, i);
        std::string img = (fs::path(out_dir) / "dataset" /
                           ("scene_" + std::to_string(i) + ".ppm")).string();
        std::string lab = (fs::path(out_dir) / "dataset" /
                           ("scene_" + std::to_string(i) + ".pgm")).string();
        save_sample(s, img, lab);
        manifest.emplace_back(img, lab);
    }
    std::string manifest_path = (fs::path(out_dir) / "manifest.tsv").string();
    save_manifest(manifest, manifest_path);

    // Training consumes the on-disk dataset, so the file formats are on the
    // critical path.
    std::vector<SceneSample> all;
    for (const auto& [img, lab] : manifest) all.push_back(load_sample(img, lab));
    std::size_t ntrain = std::size_t(std::lround(cfg.split * double(all.size())));
    ntrain = std::clamp<std::size_t>(ntrain, 1, all.size() - 1);
    std::vector<SceneSample> train_set(all.begin(), all.begin() + std::ptrdiff_t(ntrain));
    std::vector<SceneSample> val_set(all.begin() + std::ptrdiff_t(ntrain), all.end());

    // --- train (resumable) ---
    std::string baseline_path = (fs::path(out_dir) / "baseline.csgc").string();
    std::string trace_path = (fs::path(out_dir) / "trace.csv").string();
    std::string stamp_path = (fs::path(out_dir) / "run_manifest.txt").string();

    LossSpec loss = cfg.loss;
    if (loss.kind == LossKind::class_balanced_focal && loss.class_weights.empty())
        loss.class_weights = effective_number_weights(
            class_pixel_counts(train_set, cfg.synth.num_classes), loss.beta);

    PipelineResult result;
    TinySegNet net;
    bool resumed = false;
    if (fs::exists(stamp_path) && fs::exists(baseline_path)) {
        std::istringstream stamp(detail::read_file_bytes(stamp_path));
        std::string prev_hash, stage;
        stamp >> prev_hash >> stage;
        if (prev_hash == cfg_hash && stage == "trained") {
            net = TinySegNet::from_checkpoint(Checkpoint::load(baseline_path));
            resumed = true;
        }
    }
    if (!resumed) {
        net = TinySegNet::init(cfg.features, cfg.synth.num_classes, cfg.train.seed);
        result.history = train(net, train_set, val_set, cfg.train, loss,
                               cfg.augment_enabled ? &cfg.augment : nullptr);
        net.to_checkpoint().save(baseline_path);
        detail::write_file_bytes(trace_path, trace_csv(result.history, cfg.synth.num_classes));
        detail::write_file_bytes(stamp_path, cfg_hash + " trained\n");
    }

    Checkpoint baseline = net.to_checkpoint();
    double base_size = model_size_mb(baseline);

    auto eval_row = [&](const TinySegNet& m, const std::string& label, double size_mb,
                        bool is_baseline) {
        ConfusionMatrix cm = evaluate(m, val_set);
        ReportRow row;
        row.label = label;
        row.iou = detail::material_iou(cm);
        row.miou = miou(cm);
        row.size_mb = size_mb;
        row.is_baseline = is_baseline;
        row.over_budget = size_mb > cfg.max_mb;
        return row;
    };

    ReportRow base_row = eval_row(net, "baseline", base_size, true);
    result.rows.push_back(base_row);

    Checkpoint pruned; // reused by the combined stage
    bool have_pruned = false;
    if (cfg.prune_enabled) {
        PruneMask masks = build_masks(baseline, cfg.prune);
        pruned = apply_mask(baseline, masks);
        have_pruned = true;
        to_sparse(pruned, masks).save((fs::path(out_dir) / "pruned.csgc").string());
        std::ostringstream label;
        label << "pruned(" << cfg.prune.amount << ")";
        result.rows.push_back(eval_row(TinySegNet::from_checkpoint(pruned), label.str(),
                                       pruned_size_mb(base_size, cfg.prune.amount), false));
    }

    auto quant_filter = [&](const std::string& name) {
        if (cfg.quant_layer_filter.empty()) return true;
        for (const auto& sub : cfg.quant_layer_filter)
            if (name.find(sub) != std::string::npos) return true;
        return false;
    };

    if (cfg.quant_enabled) {
        Checkpoint q = ptq_checkpoint(baseline, quant_filter);
        q.save((fs::path(out_dir) / "quantized.csgc").string());
        result.rows.push_back(eval_row(TinySegNet::from_checkpoint(dequantize_checkpoint(q)),
                                       "quantized", quant_size_mb(q), false));
    }

    if (cfg.prune_enabled && cfg.quant_enabled && have_pruned) {
        Checkpoint pq = ptq_checkpoint(pruned, quant_filter);
        pq.save((fs::path(out_dir) / "pruned_quantized.csgc").string());
        std::ostringstream label;
        label << "pruned(" << cfg.prune.amount << ")+quantized";
        result.rows.push_back(eval_row(TinySegNet::from_checkpoint(dequantize_checkpoint(pq)),
                                       label.str(), quant_size_mb(pq), false));
    }

    for (auto& row : result.rows) {
        if (row.is_baseline) continue;
        row.dmiou_pct = delta_pct(row.miou, base_row.miou);
        row.dsize_pct = delta_pct(row.size_mb, base_row.size_mb);
    }

    // Budget is violated only if no produced artifact fits.
    result.budget_ok = false;
    for (const auto& row : result.rows)
        if (!row.over_budget) result.budget_ok = true;

    result.report_text = report_table(result.rows, cfg.synth.num_classes);
    detail::write_file_bytes((fs::path(out_dir) / "report.txt").string(), result.report_text);
    detail::write_file_bytes((fs::path(out_dir) / "report.csv").string(),
                             report_csv(result.rows, cfg.synth.num_classes));
    return result;
}

struct SweepEntry {
    std::string loss_name;
    std::vector<double> final_miou; // one per seed
    double mean = 0, sd = 0;
    double last10_mean = 0, last10_sd = 0;
};

struct SweepResult {
    std::vector<SweepEntry> entries;
    bool focal_lovasz_ge_ce = false;
    std::string report_text;
};

/// Train one model per (loss, seed) on identical data and report mean/sd of
/// the validation mIoU, plus the last-10-epoch stability statistics.
inline SweepResult loss_sweep(const PipelineConfig& cfg, const std::vector<LossKind>& losses,
                              const std::vector<std::uint64_t>& seeds) {
    if (losses.size() < 2) throw error("loss_sweep: need at least 2 losses");
    if (seeds.empty()) throw error("loss_sweep: need at least 1 seed");

    std::vector<SceneSample> all = generate_dataset(cfg.synth, cfg.count);
    std::size_t ntrain = std::size_t(std::lround(cfg.split * double(all.size())));
    ntrain = std::clamp<std::size_t>(ntrain, 1, all.size() - 1);
    std::vector<SceneSample> train_set(all.begin(), all.begin() + std::ptrdiff_t(ntrain));
    std::vector<SceneSample> val_set(all.begin() + std::ptrdiff_t(ntrain), all.end());

    SweepResult result;
    for (LossKind kind : losses) {
        SweepEntry entry;
        entry.loss_name = loss_kind_name(kind);
        std::vector<double> last10_all;
        for (std::uint64_t seed : seeds) {
            LossSpec loss = cfg.loss;
            loss.kind = kind;
            if (kind == LossKind::class_balanced_focal)
                loss.class_weights = effective_number_weights(
                    class_pixel_counts(train_set, cfg.synth.num_classes), loss.beta);
            TrainConfig tc = cfg.train;
            tc.seed = seed;
            TinySegNet net = TinySegNet::init(cfg.features, cfg.synth.num_classes, seed);
            auto history = train(net, train_set, val_set, tc, loss,
                                 cfg.augment_enabled ? &cfg.augment : nullptr);
            if (history.empty()) throw error("loss_sweep: zero epochs");
            entry.final_miou.push_back(history.back().miou);
            std::size_t tail = std::min<std::size_t>(10, history.size());
            for (std::size_t i = history.size() - tail; i < history.size(); ++i)
                last10_all.push_back(history[i].miou);
        }
        auto stats = [](const std::vector<double>& v) {
            double m = 0;
            for (double x : v) m += x;
            m /= double(v.size());
            double s2 = 0;
            for (double x : v) s2 += (x - m) * (x - m);
            return std::pair<double, double>{m, v.size() > 1 ? std::sqrt(s2 / double(v.size() - 1))
                                                             : 0.0};
        };
        std::tie(entry.mean, entry.sd) = stats(entry.final_miou);
        std::tie(entry.last10_mean, entry.last10_sd) = stats(last10_all);
        result.entries.push_back(std::move(entry));
    }

    double ce_mean = -1, fl_mean = -1;
    for (const auto& e : result.entries) {
        if (e.loss_name == "cross_entropy") ce_mean = e.mean;
        if (e.loss_name == "focal_lovasz") fl_mean = e.mean;
    }
    if (ce_mean >= 0 && fl_mean >= 0) result.focal_lovasz_ge_ce = fl_mean >= ce_mean;

    std::ostringstream os;
    os << std::left << std::setw(22) << "loss" << std::right << std::setw(12) << "mean mIoU"
       << std::setw(9) << "sd" << std::setw(14) << "last10 mean" << std::setw(11)
       << "last10 sd" << "\n"
       << std::fixed << std::setprecision(4);
    for (const auto& e : result.entries)
        os << std::left << std::setw(22) << e.loss_name << std::right << std::setw(12) << e.mean
           << std::setw(9) << e.sd << std::setw(14) << e.last10_mean << std::setw(11)
           << e.last10_sd << "\n";
    if (ce_mean >= 0 && fl_mean >= 0)
        os << "focal_lovasz >= cross_entropy: " << (result.focal_lovasz_ge_ce ? "yes" : "no")
           << "\n";
    result.report_text = os.str();
    return result;
}

} // namespace segkit

#endif
