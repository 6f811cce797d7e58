#ifndef SEGKIT_CONFIG_HPP
#define SEGKIT_CONFIG_HPP

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "losses.hpp"
#include "model.hpp"
#include "prune.hpp"
#include "tensor.hpp"

namespace segkit {

namespace detail {

struct IniFile {
    // section -> key -> value
    std::map<std::string, std::map<std::string, std::string>> sections;

    static std::string trim(const std::string& s) {
        std::size_t a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return "";
        std::size_t b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }

    static IniFile parse(const std::string& text, const std::string& origin) {
        IniFile ini;
        std::istringstream in(text);
        std::string line, section;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string t = trim(line);
            if (t.empty() || t[0] == '#' || t[0] == ';') continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw error(origin + ":" + std::to_string(lineno) +
                                ": unterminated section header");
                section = trim(t.substr(1, t.size() - 2));
                ini.sections[section];
                continue;
            }
            std::size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw error(origin + ":" + std::to_string(lineno) + ": expected key=value");
            std::string key = trim(t.substr(0, eq)), value = trim(t.substr(eq + 1));
            if (key.empty())
                throw error(origin + ":" + std::to_string(lineno) + ": empty key");
            ini.sections[section][key] = value;
        }
        return ini;
    }

    std::optional<std::string> get(const std::string& sec, const std::string& key) const {
        auto s = sections.find(sec);
        if (s == sections.end()) return std::nullopt;
        auto k = s->second.find(key);
        if (k == s->second.end()) return std::nullopt;
        return k->second;
    }

    double get_double(const std::string& sec, const std::string& key, double dflt) const {
        auto v = get(sec, key);
        if (!v) return dflt;
        try {
            return std::stod(*v);
        } catch (...) {
            throw error("config [" + sec + "] " + key + ": not a number: " + *v);
        }
    }

    std::size_t get_size(const std::string& sec, const std::string& key, std::size_t dflt) const {
        auto v = get(sec, key);
        if (!v) return dflt;
        try {
            long long n = std::stoll(*v);
            if (n < 0) throw error("negative");
            return std::size_t(n);
        } catch (...) {
            throw error("config [" + sec + "] " + key + ": not a non-negative integer: " + *v);
        }
    }

    bool get_bool(const std::string& sec, const std::string& key, bool dflt) const {
        auto v = get(sec, key);
        if (!v) return dflt;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        throw error("config [" + sec + "] " + key + ": not a boolean: " + *v);
    }

    std::string get_string(const std::string& sec, const std::string& key,
                           const std::string& dflt) const {
        auto v = get(sec, key);
        return v ? *v : dflt;
    }
};

} // namespace detail

/// Full experiment description, parsed from INI-style text.
struct PipelineConfig {
    // [data]
    SynthConfig synth;
    std::size_t count = 200;
    double split = 0.8; // train fraction
    bool augment_enabled = false;
    AugmentConfig augment;
    // [train]
    TrainConfig train;
    LossSpec loss;
    // [prune]
    bool prune_enabled = false;
    PruneSpec prune;
    std::vector<double> prune_amounts; // report evaluates each
    // [quant]
    bool quant_enabled = false;
    std::vector<std::string> quant_layer_filter; // substrings; empty = all
    // [budget]
    double max_mb = 10.0;
    // [model]
    std::size_t features = 16;

    static PipelineConfig parse(const std::string& text, const std::string& origin = "config") {
        auto ini = detail::IniFile::parse(text, origin);
        PipelineConfig cfg;

        cfg.synth.seed = ini.get_size("data", "seed", 1);
        cfg.synth.image_size = ini.get_size("data", "size", 64);
        cfg.synth.num_classes = ini.get_size("data", "classes", 5);
        cfg.synth.min_objects = ini.get_size("data", "min_objects", 2);
        cfg.synth.max_objects = ini.get_size("data", "max_objects", 5);
        if (auto w = ini.get("data", "class_weights")) {
            std::istringstream ws(*w);
            std::string tok;
            std::size_t i = 0;
            while (std::getline(ws, tok, ',') && i < 4)
                cfg.synth.class_weights[i++] = std::stod(tok);
        }
        cfg.count = ini.get_size("data", "count", 200);
        cfg.split = ini.get_double("data", "split", 0.8);
        if (cfg.split <= 0 || cfg.split >= 1) throw error("config [data] split: must be in (0,1)");
        cfg.augment_enabled = ini.get_bool("data", "augment", false);
        cfg.augment.p_hflip = ini.get_double("data", "p_hflip", 0.5);
        cfg.augment.p_vflip = ini.get_double("data", "p_vflip", 0.5);
        cfg.augment.p_colorjitter = ini.get_double("data", "p_colorjitter", 0.25);
        cfg.augment.scale_min = ini.get_double("data", "scale_min", 1.0);
        cfg.augment.scale_max = ini.get_double("data", "scale_max", 1.0);
        cfg.augment.crop_size = ini.get_size("data", "crop", 0);
        cfg.synth.validate();
        cfg.augment.validate();

        cfg.train.lr = ini.get_double("train", "lr", 5e-4);
        if (auto d = ini.get("train", "lr_decay"); d && *d != "none")
            cfg.train.lr_decay = std::stod(*d);
        if (auto s = ini.get("train", "step_lr"); s && *s != "none")
            cfg.train.step_lr = std::size_t(std::stoll(*s));
        cfg.train.epochs = ini.get_size("train", "epochs", 30);
        cfg.train.batch_size = ini.get_size("train", "batch", 8);
        cfg.train.seed = ini.get_size("train", "seed", 0);
        std::string opt = ini.get_string("train", "optimizer", "adam");
        if (opt == "adam")
            cfg.train.optimizer = Optimizer::adam;
        else if (opt == "sgd")
            cfg.train.optimizer = Optimizer::sgd;
        else
            throw error("config [train] optimizer: unknown: " + opt);
        cfg.train.validate();

        cfg.loss.kind = loss_kind_from_string(ini.get_string("train", "loss", "cross_entropy"));
        cfg.loss.gamma = ini.get_double("train", "gamma", 2.0);
        cfg.loss.beta = ini.get_double("train", "beta", 0.999);
        cfg.loss.eps = ini.get_double("train", "eps", 1e-6);
        cfg.loss.lambda = ini.get_double("train", "lambda", 0.5);
        cfg.loss.validate();

        cfg.prune_enabled = ini.get_bool("prune", "enabled", false);
        cfg.prune.method =
            prune_method_from_string(ini.get_string("prune", "method", "l1_unstructured"));
        cfg.prune.amount = ini.get_double("prune", "amount", 0.3);
        cfg.prune.norm_order = ini.get_double("prune", "n", 2.0);
        cfg.prune.seed = ini.get_size("prune", "seed", 0);
        cfg.prune.exempt_head = ini.get_bool("prune", "exempt_head", true);
        cfg.prune.validate();
        if (auto a = ini.get("prune", "amounts")) {
            std::istringstream as(*a);
            std::string tok;
            while (std::getline(as, tok, ',')) cfg.prune_amounts.push_back(std::stod(tok));
        }

        cfg.quant_enabled = ini.get_bool("quant", "enabled", false);
        if (auto f = ini.get("quant", "layer_filter")) {
            std::istringstream fs(*f);
            std::string tok;
            while (std::getline(fs, tok, ','))
                if (!detail::IniFile::trim(tok).empty())
                    cfg.quant_layer_filter.push_back(detail::IniFile::trim(tok));
        }

        cfg.max_mb = ini.get_double("budget", "max_mb", 10.0);
        cfg.features = ini.get_size("model", "features", 16);
        return cfg;
    }

    static PipelineConfig load(const std::string& path) {
        return parse(detail::read_file_bytes(path), path);
    }
};

} // namespace segkit

#endif
