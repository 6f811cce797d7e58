#ifndef SEGKIT_DATASET_HPP
#define SEGKIT_DATASET_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

// Synthetic waste scenes: shape/color-coded objects composited over colorful
// backgrounds, plus the training-time augmentations.

namespace segkit {

struct SceneSample {
    Tensor image;  // f32 [3,H,W] in [0,1]
    Tensor labels; // i64 [H,W], 0 = background

    std::size_t height() const { return labels.extent(0); }
    std::size_t width() const { return labels.extent(1); }
};

inline const std::vector<std::string>& class_names() {
    static const std::vector<std::string> names = {"Background", "Aluminium", "Paper",
                                                   "Bottle", "Nylon"};
    return names;
}

struct SynthConfig {
    std::uint64_t seed = 1;
    std::size_t image_size = 64;
    std::size_t num_classes = 5; // 2 = binary mode
    std::size_t min_objects = 2;
    std::size_t max_objects = 5;
    // Relative draw frequency of the four material families (Aluminium, Paper,
    // Bottle, Nylon); skewing these produces class imbalance.
    std::array<double, 4> class_weights = {1.0, 1.0, 1.0, 1.0};

    void validate() const {
        if (image_size < 16) throw error("SynthConfig: image_size must be >= 16");
        if (num_classes != 2 && num_classes != 5)
            throw error("SynthConfig: num_classes must be 2 or 5");
        if (min_objects > max_objects) throw error("SynthConfig: object range inverted");
        for (double w : class_weights)
            if (w <= 0) throw error("SynthConfig: class weights must be positive");
    }
};

struct AugmentConfig {
    double p_hflip = 0.5;
    double p_vflip = 0.5;
    double p_colorjitter = 0.25;
    double brightness = 0.2; // multiplicative factor in [1-a, 1+a]
    double contrast = 0.2;
    double saturation = 0.2;
    double hue = 0.05;       // shift as fraction of the hue circle
    double scale_min = 1.0;
    double scale_max = 1.0;
    std::size_t crop_size = 0; // 0 = keep the pre-scaling size

    void validate() const {
        for (double p : {p_hflip, p_vflip, p_colorjitter})
            if (p < 0 || p > 1) throw error("AugmentConfig: probability outside [0,1]");
        if (scale_min <= 0 || scale_max < scale_min)
            throw error("AugmentConfig: bad scale range");
    }
};

namespace detail {

struct Vec2 {
    double x, y;
};

// Object families: membership test in the unit frame of the object.
inline bool shape_contains(std::size_t family, Vec2 u) {
    switch (family) {
    case 0: return u.x * u.x + u.y * u.y <= 1.0;                       // disk
    case 1: return std::abs(u.x) <= 1.0 && std::abs(u.y) <= 0.65;      // sheet
    case 2: return std::abs(u.x) <= 0.42 && std::abs(u.y) <= 1.0;      // bottle
    default: {                                                          // triangle
        double a = (u.y + 1.0) / 1.8; // 0 at apex, 1 at base
        return u.y >= -1.0 && u.y <= 0.8 && std::abs(u.x) <= 0.9 * a;
    }
    }
}

inline std::array<double, 3> family_color(std::size_t family, Rng& rng) {
    switch (family) {
    case 0: { // aluminium: near-neutral silver
        double v = rng.uniform(0.68, 0.9);
        return {v, v * rng.uniform(0.97, 1.0), v * rng.uniform(0.97, 1.0)};
    }
    case 1: // paper: warm off-white
        return {rng.uniform(0.85, 1.0), rng.uniform(0.78, 0.92), rng.uniform(0.55, 0.72)};
    case 2: // bottle: green
        return {rng.uniform(0.0, 0.18), rng.uniform(0.5, 0.8), rng.uniform(0.08, 0.3)};
    default: // nylon: blue
        return {rng.uniform(0.08, 0.3), rng.uniform(0.08, 0.3), rng.uniform(0.6, 0.92)};
    }
}

// Backgrounds stay in the red/magenta/brown range, away from the object
// color families.
inline std::array<double, 3> background_color(Rng& rng) {
    static constexpr std::array<std::array<double, 3>, 6> palette = {{
        {0.55, 0.10, 0.15},
        {0.65, 0.20, 0.45},
        {0.72, 0.38, 0.12},
        {0.45, 0.22, 0.18},
        {0.60, 0.12, 0.30},
        {0.50, 0.30, 0.35},
    }};
    auto base = palette[rng.below(palette.size())];
    for (double& c : base) c = std::clamp(c + rng.uniform(-0.05, 0.05), 0.0, 1.0);
    return base;
}

} // namespace detail

/// Deterministic scene synthesis: a pure function of (cfg.seed, index).
inline SceneSample generate_scene(const SynthConfig& cfg, std::uint64_t index) {
    cfg.validate();
    Rng rng(stream_seed(cfg.seed, index));
    const std::size_t hw = cfg.image_size;

    SceneSample s;
    s.image = Tensor(DType::f32, {3, hw, hw});
    s.labels = Tensor(DType::i64, {hw, hw});
    float* img = s.image.data<float>();
    std::int64_t* lab = s.labels.data<std::int64_t>();

    auto c0 = detail::background_color(rng);
    auto c1 = detail::background_color(rng);
    bool horiz = rng.bernoulli(0.5);
    for (std::size_t y = 0; y < hw; ++y)
        for (std::size_t x = 0; x < hw; ++x) {
            double t = horiz ? double(x) / double(hw - 1) : double(y) / double(hw - 1);
            double noise = rng.uniform(-0.03, 0.03);
            for (std::size_t ch = 0; ch < 3; ++ch)
                img[ch * hw * hw + y * hw + x] = static_cast<float>(
                    std::clamp(c0[ch] * (1.0 - t) + c1[ch] * t + noise, 0.0, 1.0));
        }

    double wsum = cfg.class_weights[0] + cfg.class_weights[1] + cfg.class_weights[2] +
                  cfg.class_weights[3];
    std::size_t nobj = std::size_t(
        rng.range_int(std::int64_t(cfg.min_objects), std::int64_t(cfg.max_objects)));
    for (std::size_t obj = 0; obj < nobj; ++obj) {
        double pick = rng.uniform(0.0, wsum);
        std::size_t family = 0;
        double acc = 0;
        for (std::size_t f = 0; f < 4; ++f) {
            acc += cfg.class_weights[f];
            if (pick < acc) { family = f; break; }
        }
        std::int64_t label = cfg.num_classes == 2 ? 1 : std::int64_t(family) + 1;
        auto color = detail::family_color(family, rng);

        // Random affine placement: translate, rotate, scale.
        double cx = rng.uniform(0.15, 0.85) * double(hw);
        double cy = rng.uniform(0.15, 0.85) * double(hw);
        double scale = rng.uniform(0.10, 0.18) * double(hw);
        double theta = rng.uniform(0.0, 6.283185307179586);
        double ct = std::cos(theta), st = std::sin(theta);
        double shade_seed = rng.uniform(0.0, 1.0);

        for (std::size_t y = 0; y < hw; ++y)
            for (std::size_t x = 0; x < hw; ++x) {
                double dx = (double(x) + 0.5 - cx) / scale;
                double dy = (double(y) + 0.5 - cy) / scale;
                detail::Vec2 u{ct * dx + st * dy, -st * dx + ct * dy};
                if (!detail::shape_contains(family, u)) continue;
                lab[y * hw + x] = label; // later objects occlude earlier ones
                double shade =
                    0.92 + 0.08 * std::sin(12.0 * (u.x + shade_seed) + 5.0 * u.y);
                for (std::size_t ch = 0; ch < 3; ++ch)
                    img[ch * hw * hw + y * hw + x] =
                        static_cast<float>(std::clamp(color[ch] * shade, 0.0, 1.0));
            }
    }
    return s;
}

inline std::vector<SceneSample> generate_dataset(const SynthConfig& cfg, std::size_t count) {
    std::vector<SceneSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(generate_scene(cfg, i));
    return out;
}

namespace detail {

inline SceneSample resize(const SceneSample& s, std::size_t oh, std::size_t ow) {
    std::size_t h = s.height(), w = s.width();
    SceneSample out;
    out.image = Tensor(DType::f32, {3, oh, ow});
    out.labels = Tensor(DType::i64, {oh, ow});
    const float* src = s.image.data<float>();
    const std::int64_t* slab = s.labels.data<std::int64_t>();
    float* dst = out.image.data<float>();
    std::int64_t* dlab = out.labels.data<std::int64_t>();
    double fy = double(h) / double(oh), fx = double(w) / double(ow);
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            // bilinear for the image
            double sy = (double(y) + 0.5) * fy - 0.5;
            double sx = (double(x) + 0.5) * fx - 0.5;
            double cy = std::clamp(sy, 0.0, double(h - 1));
            double cx = std::clamp(sx, 0.0, double(w - 1));
            std::size_t y0 = std::size_t(cy), x0 = std::size_t(cx);
            std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
            double ty = cy - double(y0), tx = cx - double(x0);
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const float* p = src + ch * h * w;
                double v = (1 - ty) * ((1 - tx) * p[y0 * w + x0] + tx * p[y0 * w + x1]) +
                           ty * ((1 - tx) * p[y1 * w + x0] + tx * p[y1 * w + x1]);
                dst[ch * oh * ow + y * ow + x] = static_cast<float>(v);
            }
            // nearest for the labels: never invents a class
            std::size_t ny = std::min(std::size_t(std::max(sy + 0.5, 0.0)), h - 1);
            std::size_t nx = std::min(std::size_t(std::max(sx + 0.5, 0.0)), w - 1);
            dlab[y * ow + x] = slab[ny * w + nx];
        }
    return out;
}

inline void flip(SceneSample& s, bool horizontal) {
    std::size_t h = s.height(), w = s.width();
    float* img = s.image.data<float>();
    std::int64_t* lab = s.labels.data<std::int64_t>();
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                std::size_t yy = horizontal ? y : h - 1 - y;
                std::size_t xx = horizontal ? w - 1 - x : x;
                if ((horizontal && x < xx) || (!horizontal && y < yy))
                    std::swap(img[ch * h * w + y * w + x], img[ch * h * w + yy * w + xx]);
            }
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            std::size_t yy = horizontal ? y : h - 1 - y;
            std::size_t xx = horizontal ? w - 1 - x : x;
            if ((horizontal && x < xx) || (!horizontal && y < yy))
                std::swap(lab[y * w + x], lab[yy * w + xx]);
        }
}

inline void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    v = mx;
    double d = mx - mn;
    s = mx == 0 ? 0 : d / mx;
    if (d == 0) { h = 0; return; }
    if (mx == r)
        h = std::fmod((g - b) / d, 6.0);
    else if (mx == g)
        h = (b - r) / d + 2.0;
    else
        h = (r - g) / d + 4.0;
    h /= 6.0;
    if (h < 0) h += 1.0;
}

inline void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    double hh = std::fmod(h, 1.0) * 6.0;
    int i = int(hh);
    double f = hh - i;
    double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (i % 6) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
    }
}

inline void color_jitter(SceneSample& s, const AugmentConfig& cfg, Rng& rng) {
    double kb = rng.uniform(1.0 - cfg.brightness, 1.0 + cfg.brightness);
    double kc = rng.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast);
    double ks = rng.uniform(1.0 - cfg.saturation, 1.0 + cfg.saturation);
    double dh = rng.uniform(-cfg.hue, cfg.hue);
    float* img = s.image.data<float>();
    std::size_t hw = s.height() * s.width();

    double mean = 0;
    for (std::size_t i = 0; i < 3 * hw; ++i) mean += img[i];
    mean /= double(3 * hw);

    for (std::size_t p = 0; p < hw; ++p) {
        double r = img[p], g = img[hw + p], b = img[2 * hw + p];
        r *= kb; g *= kb; b *= kb;
        r = (r - mean) * kc + mean;
        g = (g - mean) * kc + mean;
        b = (b - mean) * kc + mean;
        double gray = 0.299 * r + 0.587 * g + 0.114 * b;
        r = gray + (r - gray) * ks;
        g = gray + (g - gray) * ks;
        b = gray + (b - gray) * ks;
        if (dh != 0.0) {
            double h, sv, v;
            rgb_to_hsv(std::clamp(r, 0.0, 1.0), std::clamp(g, 0.0, 1.0),
                       std::clamp(b, 0.0, 1.0), h, sv, v);
            hsv_to_rgb(h + dh + 1.0, sv, v, r, g, b);
        }
        img[p] = float(std::clamp(r, 0.0, 1.0));
        img[hw + p] = float(std::clamp(g, 0.0, 1.0));
        img[2 * hw + p] = float(std::clamp(b, 0.0, 1.0));
    }
}

} // namespace detail

/// Training-time augmentation. Geometric transforms move image and labels
/// together (bilinear vs nearest); color jitter touches the image only.
inline SceneSample augment(const SceneSample& s, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    SceneSample out = s;

    double f = cfg.scale_min == cfg.scale_max ? cfg.scale_min
                                              : rng.uniform(cfg.scale_min, cfg.scale_max);
    std::size_t crop_h = cfg.crop_size ? cfg.crop_size : s.height();
    std::size_t crop_w = cfg.crop_size ? cfg.crop_size : s.width();
    if (f != 1.0) {
        std::size_t nh = std::size_t(std::lround(double(s.height()) * f));
        std::size_t nw = std::size_t(std::lround(double(s.width()) * f));
        out = detail::resize(out, nh, nw);
    }
    if (crop_h > out.height() || crop_w > out.width())
        throw error("augment: crop larger than scaled image");
    if (crop_h != out.height() || crop_w != out.width()) {
        std::size_t oy = std::size_t(rng.below(out.height() - crop_h + 1));
        std::size_t ox = std::size_t(rng.below(out.width() - crop_w + 1));
        SceneSample c;
        c.image = Tensor(DType::f32, {3, crop_h, crop_w});
        c.labels = Tensor(DType::i64, {crop_h, crop_w});
        std::size_t h = out.height(), w = out.width();
        for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t y = 0; y < crop_h; ++y)
                for (std::size_t x = 0; x < crop_w; ++x)
                    c.image.data<float>()[ch * crop_h * crop_w + y * crop_w + x] =
                        out.image.data<float>()[ch * h * w + (y + oy) * w + (x + ox)];
        for (std::size_t y = 0; y < crop_h; ++y)
            for (std::size_t x = 0; x < crop_w; ++x)
                c.labels.data<std::int64_t>()[y * crop_w + x] =
                    out.labels.data<std::int64_t>()[(y + oy) * w + (x + ox)];
        out = std::move(c);
    }

    if (cfg.p_hflip > 0 && rng.bernoulli(cfg.p_hflip)) detail::flip(out, true);
    if (cfg.p_vflip > 0 && rng.bernoulli(cfg.p_vflip)) detail::flip(out, false);
    if (cfg.p_colorjitter > 0 && rng.bernoulli(cfg.p_colorjitter))
        detail::color_jitter(out, cfg, rng);
    return out;
}

/// Exact per-class pixel histogram over a dataset.
inline std::vector<std::uint64_t> class_pixel_counts(const std::vector<SceneSample>& data,
                                                     std::size_t num_classes) {
    if (data.empty()) throw error("class_pixel_counts: empty dataset");
    std::vector<std::uint64_t> counts(num_classes, 0);
    for (const auto& s : data) {
        const std::int64_t* lab = s.labels.data<std::int64_t>();
        for (std::size_t i = 0; i < s.labels.numel(); ++i) {
            auto c = lab[i];
            if (c < 0 || std::size_t(c) >= num_classes)
                throw error("class_pixel_counts: label out of range");
            ++counts[std::size_t(c)];
        }
    }
    return counts;
}

// ---- PPM (P6) / PGM (P5) sample IO ------------------------------------

namespace detail {

inline std::string netpbm_header(const char* magic, std::size_t w, std::size_t h) {
    std::ostringstream os;
    os << magic << "\n" << w << " " << h << "\n255\n";
    return os.str();
}

struct PnmHeader {
    std::string magic;
    std::size_t w, h;
    std::size_t data_offset;
};

inline PnmHeader parse_pnm_header(const std::string& bytes, const std::string& path) {
    std::size_t pos = 0;
    auto next_token = [&]() -> std::string {
        while (pos < bytes.size()) {
            if (std::isspace(static_cast<unsigned char>(bytes[pos]))) { ++pos; continue; }
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])))
            ++pos;
        if (start == pos) throw error("malformed netpbm header: " + path);
        return bytes.substr(start, pos - start);
    };
    PnmHeader hdr;
    hdr.magic = next_token();
    if (hdr.magic != "P5" && hdr.magic != "P6")
        throw error("malformed netpbm header (bad magic): " + path);
    try {
        hdr.w = std::stoul(next_token());
        hdr.h = std::stoul(next_token());
        if (next_token() != "255") throw error("netpbm maxval must be 255: " + path);
    } catch (const std::invalid_argument&) {
        throw error("malformed netpbm header: " + path);
    }
    if (pos >= bytes.size()) throw error("malformed netpbm header: " + path);
    hdr.data_offset = pos + 1; // single whitespace after maxval
    return hdr;
}

} // namespace detail

inline void save_sample(const SceneSample& s, const std::string& image_path,
                        const std::string& label_path) {
    std::size_t h = s.height(), w = s.width();
    std::string ppm = detail::netpbm_header("P6", w, h);
    const float* img = s.image.data<float>();
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < 3; ++ch) {
                double v = std::clamp(double(img[ch * h * w + y * w + x]), 0.0, 1.0);
                ppm.push_back(static_cast<char>(std::lround(v * 255.0)));
            }
    detail::write_file_bytes(image_path, ppm);

    std::string pgm = detail::netpbm_header("P5", w, h);
    const std::int64_t* lab = s.labels.data<std::int64_t>();
    for (std::size_t i = 0; i < h * w; ++i) {
        if (lab[i] < 0 || lab[i] > 255) throw error("label out of PGM range");
        pgm.push_back(static_cast<char>(lab[i]));
    }
    detail::write_file_bytes(label_path, pgm);
}

inline SceneSample load_sample(const std::string& image_path, const std::string& label_path) {
    std::string pbytes = detail::read_file_bytes(image_path);
    auto phdr = detail::parse_pnm_header(pbytes, image_path);
    if (phdr.magic != "P6") throw error("expected P6 image: " + image_path);
    if (pbytes.size() - phdr.data_offset < 3 * phdr.w * phdr.h)
        throw error("truncated PPM payload: " + image_path);

    std::string lbytes = detail::read_file_bytes(label_path);
    auto lhdr = detail::parse_pnm_header(lbytes, label_path);
    if (lhdr.magic != "P5") throw error("expected P5 label map: " + label_path);
    if (lhdr.w != phdr.w || lhdr.h != phdr.h)
        throw error("image/label size mismatch: " + label_path);
    if (lbytes.size() - lhdr.data_offset < lhdr.w * lhdr.h)
        throw error("truncated PGM payload: " + label_path);

    SceneSample s;
    s.image = Tensor(DType::f32, {3, phdr.h, phdr.w});
    s.labels = Tensor(DType::i64, {lhdr.h, lhdr.w});
    float* img = s.image.data<float>();
    const auto* pd = reinterpret_cast<const unsigned char*>(pbytes.data() + phdr.data_offset);
    for (std::size_t y = 0; y < phdr.h; ++y)
        for (std::size_t x = 0; x < phdr.w; ++x)
            for (std::size_t ch = 0; ch < 3; ++ch)
                img[ch * phdr.h * phdr.w + y * phdr.w + x] =
                    float(pd[(y * phdr.w + x) * 3 + ch]) / 255.0f;
    const auto* ld = reinterpret_cast<const unsigned char*>(lbytes.data() + lhdr.data_offset);
    std::int64_t* lab = s.labels.data<std::int64_t>();
    for (std::size_t i = 0; i < lhdr.w * lhdr.h; ++i) lab[i] = ld[i];
    return s;
}

// Dataset manifest: one "image_path<TAB>label_path" per line.
inline void save_manifest(const std::vector<std::pair<std::string, std::string>>& entries,
                          const std::string& path) {
    std::string out;
    for (const auto& [img, lab] : entries) out += img + "\t" + lab + "\n";
    detail::write_file_bytes(path, out);
}

inline std::vector<std::pair<std::string, std::string>> load_manifest(const std::string& path) {
    std::istringstream in(detail::read_file_bytes(path));
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw error("manifest line missing tab: " + path);
        entries.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return entries;
}

} // namespace segkit

#endif
