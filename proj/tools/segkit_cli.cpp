// Command-line driver for the segmentation compression toolkit.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "segkit/pipeline.hpp"

namespace fs = std::filesystem;
using namespace segkit;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "run";
    std::int64_t seed_override = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "pipeline config (INI)")->required();
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed_override, "override data+train seed");
}

std::pair<PipelineConfig, std::string> load_config(const CommonArgs& args) {
    std::string text = detail::read_file_bytes(args.config_path);
    PipelineConfig cfg = PipelineConfig::parse(text, args.config_path);
    if (args.seed_override >= 0) {
        cfg.synth.seed = std::uint64_t(args.seed_override);
        cfg.train.seed = std::uint64_t(args.seed_override);
        text += "\n# seed override " + std::to_string(args.seed_override) + "\n";
    }
    return {cfg, text};
}

std::vector<SceneSample> load_val_split(const PipelineConfig& cfg, const std::string& out_dir) {
    std::string manifest = (fs::path(out_dir) / "manifest.tsv").string();
    std::vector<SceneSample> all;
    if (fs::exists(manifest)) {
        for (const auto& [img, lab] : load_manifest(manifest))
            all.push_back(load_sample(img, lab));
    } else {
        all = generate_dataset(cfg.synth, cfg.count);
    }
    std::size_t ntrain = std::size_t(std::lround(cfg.split * double(all.size())));
    ntrain = std::clamp<std::size_t>(ntrain, 1, all.size() - 1);
    return {all.begin() + std::ptrdiff_t(ntrain), all.end()};
}

int cmd_gen_data(const CommonArgs& args) {
    auto [cfg, text] = load_config(args);
    fs::create_directories(fs::path(args.out_dir) / "dataset");
    std::vector<std::pair<std::string, std::string>> manifest;
    for (std::size_t i = 0; i < cfg.count; ++i) {
        SceneSample s = generate_scene(cfg.synth, i);
        std::string img =
            (fs::path(args.out_dir) / "dataset" / ("scene_" + std::to_string(i) + ".ppm"))
                .string();
        std::string lab =
            (fs::path(args.out_dir) / "dataset" / ("scene_" + std::to_string(i) + ".pgm"))
                .string();
        save_sample(s, img, lab);
        manifest.emplace_back(img, lab);
    }
    save_manifest(manifest, (fs::path(args.out_dir) / "manifest.tsv").string());
    std::cout << "wrote " << cfg.count << " scenes to " << args.out_dir << "/dataset\n";
    return 0;
}

int cmd_pipeline(const CommonArgs& args) {
    auto [cfg, text] = load_config(args);
    PipelineResult result = run_pipeline(cfg, text, args.out_dir);
    std::cout << result.report_text;
    if (!result.budget_ok) {
        std::cerr << "budget violation: no artifact fits " << cfg.max_mb << " MB\n";
        return 2;
    }
    return 0;
}

int cmd_train(const CommonArgs& args) {
    // The train subcommand runs the data+train stages of the pipeline.
    auto [cfg, text] = load_config(args);
    PipelineConfig train_only = cfg;
    train_only.prune_enabled = false;
    train_only.quant_enabled = false;
    PipelineResult result = run_pipeline(train_only, text, args.out_dir);
    std::cout << result.report_text;
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& ckpt_path) {
    auto [cfg, text] = load_config(args);
    std::string path = ckpt_path.empty()
                           ? (fs::path(args.out_dir) / "baseline.csgc").string()
                           : ckpt_path;
    Checkpoint ckpt = dequantize_checkpoint(Checkpoint::load(path));
    TinySegNet net = TinySegNet::from_checkpoint(ckpt);
    ConfusionMatrix cm = evaluate(net, load_val_split(cfg, args.out_dir));
    auto iou = iou_per_class(cm);
    std::cout << format_iou_row(path, iou, miou(cm)) << "\n";
    return 0;
}

int cmd_prune(const CommonArgs& args, const std::string& ckpt_path) {
    auto [cfg, text] = load_config(args);
    std::string path = ckpt_path.empty()
                           ? (fs::path(args.out_dir) / "baseline.csgc").string()
                           : ckpt_path;
    Checkpoint baseline = Checkpoint::load(path);
    PruneMask masks = build_masks(baseline, cfg.prune);
    Checkpoint pruned = apply_mask(baseline, masks);
    fs::create_directories(args.out_dir);
    std::string out = (fs::path(args.out_dir) / "pruned.csgc").string();
    to_sparse(pruned, masks).save(out);
    std::cout << "pruned " << path << " -> " << out << "  amount=" << cfg.prune.amount
              << "  sparsity=" << sparsity(pruned, cfg.prune.exempt_head)
              << "  accounted size=" << pruned_size_mb(model_size_mb(baseline), cfg.prune.amount)
              << " MB\n";
    return 0;
}

int cmd_quantize(const CommonArgs& args, const std::string& ckpt_path) {
    auto [cfg, text] = load_config(args);
    std::string path = ckpt_path.empty()
                           ? (fs::path(args.out_dir) / "baseline.csgc").string()
                           : ckpt_path;
    Checkpoint baseline = Checkpoint::load(path);
    auto filter = [&](const std::string& name) {
        if (cfg.quant_layer_filter.empty()) return true;
        for (const auto& sub : cfg.quant_layer_filter)
            if (name.find(sub) != std::string::npos) return true;
        return false;
    };
    Checkpoint q = ptq_checkpoint(baseline, filter);
    fs::create_directories(args.out_dir);
    std::string out = (fs::path(args.out_dir) / "quantized.csgc").string();
    q.save(out);
    std::cout << "quantized " << path << " -> " << out << "  " << model_size_mb(baseline)
              << " MB -> " << quant_size_mb(q) << " MB\n";
    return 0;
}

int cmd_sweep(const CommonArgs& args, const std::string& seeds_csv) {
    auto [cfg, text] = load_config(args);
    std::vector<std::uint64_t> seeds;
    std::istringstream ss(seeds_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) seeds.push_back(std::stoull(tok));
    std::vector<LossKind> losses = {LossKind::cross_entropy, LossKind::focal,
                                    LossKind::lovasz,        LossKind::dice,
                                    LossKind::class_balanced_focal,
                                    LossKind::focal_lovasz};
    SweepResult result = loss_sweep(cfg, losses, seeds);
    fs::create_directories(args.out_dir);
    detail::write_file_bytes((fs::path(args.out_dir) / "sweep_report.txt").string(),
                             result.report_text);
    std::cout << result.report_text;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"byte-budget compression toolkit for tiny segmentation models"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string ckpt_path;
    std::string seeds_csv = "1,2,3,4,5";

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
    add_common(gen, args);
    auto* train = app.add_subcommand("train", "generate data and train the model");
    add_common(train, args);
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the validation split");
    add_common(eval, args);
    eval->add_option("--ckpt", ckpt_path, "checkpoint to evaluate");
    auto* prune = app.add_subcommand("prune", "prune a trained checkpoint");
    add_common(prune, args);
    prune->add_option("--ckpt", ckpt_path, "checkpoint to prune");
    auto* quant = app.add_subcommand("quantize", "post-training-quantize a checkpoint");
    add_common(quant, args);
    quant->add_option("--ckpt", ckpt_path, "checkpoint to quantize");
    auto* pipeline = app.add_subcommand("pipeline", "run the full pipeline");
    add_common(pipeline, args);
    auto* sweep = app.add_subcommand("sweep", "comparative loss sweep");
    add_common(sweep, args);
    sweep->add_option("--seeds", seeds_csv, "comma-separated seeds");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(args);
        if (train->parsed()) return cmd_train(args);
        if (eval->parsed()) return cmd_eval(args, ckpt_path);
        if (prune->parsed()) return cmd_prune(args, ckpt_path);
        if (quant->parsed()) return cmd_quantize(args, ckpt_path);
        if (pipeline->parsed()) return cmd_pipeline(args);
        if (sweep->parsed()) return cmd_sweep(args, seeds_csv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
