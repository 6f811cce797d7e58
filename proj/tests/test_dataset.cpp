#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <map>

#include "segkit/dataset.hpp"

using namespace segkit;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

// Brute-force per-class histogram over one sample, written separately from
// class_pixel_counts.
std::map<std::int64_t, std::uint64_t> histogram(const SceneSample& s) {
    std::map<std::int64_t, std::uint64_t> h;
    const std::int64_t* lab = s.labels.data<std::int64_t>();
    for (std::size_t i = 0; i < s.labels.numel(); ++i) ++h[lab[i]];
    return h;
}

bool samples_equal(const SceneSample& a, const SceneSample& b) {
    return a.image == b.image && a.labels == b.labels;
}

} // namespace

TEST_CASE("scene generation is a pure function of (seed, index)") {
    SynthConfig cfg;
    cfg.seed = 9;
    cfg.image_size = 32;
    SceneSample a = generate_scene(cfg, 3);
    SceneSample b = generate_scene(cfg, 3);
    CHECK(samples_equal(a, b));

    SceneSample c = generate_scene(cfg, 4);
    CHECK_FALSE(samples_equal(a, c));

    cfg.seed = 10;
    SceneSample d = generate_scene(cfg, 3);
    CHECK_FALSE(samples_equal(a, d));
}

TEST_CASE("scene labels stay inside the class set and images inside [0,1]") {
    SynthConfig cfg;
    cfg.seed = 2;
    cfg.image_size = 48;
    for (std::uint64_t i = 0; i < 20; ++i) {
        SceneSample s = generate_scene(cfg, i);
        for (auto [cls, cnt] : histogram(s)) {
            CHECK(cls >= 0);
            CHECK(cls < std::int64_t(cfg.num_classes));
        }
        const float* img = s.image.data<float>();
        for (std::size_t j = 0; j < s.image.numel(); ++j) {
            CHECK(img[j] >= 0.0f);
            CHECK(img[j] <= 1.0f);
        }
    }
}

TEST_CASE("min_objects=0 can produce a pure-background scene") {
    SynthConfig cfg;
    cfg.seed = 5;
    cfg.image_size = 32;
    cfg.min_objects = 0;
    cfg.max_objects = 0;
    SceneSample s = generate_scene(cfg, 0);
    auto h = histogram(s);
    REQUIRE(h.size() == 1);
    CHECK(h.count(0) == 1);
}

TEST_CASE("background dominates the pixel distribution over many scenes") {
    SynthConfig cfg;
    cfg.seed = 123;
    cfg.image_size = 32;
    auto data = generate_dataset(cfg, 1000);
    auto counts = class_pixel_counts(data, cfg.num_classes);
    std::uint64_t total = 0, fg = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        total += counts[c];
        if (c > 0) fg += counts[c];
    }
    CHECK(total == 1000ull * 32 * 32);
    CHECK(counts[0] > total / 2);  // imbalance: background majority
    CHECK(fg > 0);
    for (std::size_t c = 1; c < counts.size(); ++c) CHECK(counts[c] > 0);
}

TEST_CASE("binary mode collapses all materials to class 1") {
    SynthConfig cfg;
    cfg.seed = 7;
    cfg.image_size = 32;
    cfg.num_classes = 2;
    cfg.min_objects = 3;
    auto data = generate_dataset(cfg, 50);
    auto counts = class_pixel_counts(data, 2);
    CHECK(counts[1] > 0);
    for (const auto& s : data)
        for (auto [cls, cnt] : histogram(s)) CHECK(cls <= 1);
}

TEST_CASE("class_weights skew the material frequencies") {
    SynthConfig heavy;
    heavy.seed = 11;
    heavy.image_size = 32;
    heavy.class_weights = {10.0, 0.1, 0.1, 0.1}; // almost everything aluminium
    auto data = generate_dataset(heavy, 200);
    auto counts = class_pixel_counts(data, 5);
    for (std::size_t c = 2; c < 5; ++c) CHECK(counts[1] > counts[c]);
}

TEST_CASE("class_pixel_counts matches a brute-force histogram") {
    SynthConfig cfg;
    cfg.seed = 31;
    cfg.image_size = 24;
    auto data = generate_dataset(cfg, 25);
    auto counts = class_pixel_counts(data, 5);
    std::map<std::int64_t, std::uint64_t> ref;
    for (const auto& s : data)
        for (auto [cls, cnt] : histogram(s)) ref[cls] += cnt;
    for (std::size_t c = 0; c < 5; ++c)
        CHECK(counts[c] == (ref.count(std::int64_t(c)) ? ref[std::int64_t(c)] : 0));
}

TEST_CASE("flips are involutions that keep image and labels aligned") {
    SynthConfig cfg;
    cfg.seed = 13;
    cfg.image_size = 33; // odd size exercises the middle row/column
    SceneSample s = generate_scene(cfg, 0);

    for (bool horizontal : {true, false}) {
        SceneSample t = s;
        detail::flip(t, horizontal);
        CHECK_FALSE(samples_equal(t, s));
        detail::flip(t, horizontal);
        CHECK(samples_equal(t, s));
    }

    // single hand-checked pixel: hflip moves (y, 0) to (y, w-1)
    SceneSample t = s;
    detail::flip(t, true);
    std::size_t w = s.width();
    CHECK(t.labels.data<std::int64_t>()[0] == s.labels.data<std::int64_t>()[w - 1]);
    CHECK(t.image.data<float>()[0] == s.image.data<float>()[w - 1]);
}

TEST_CASE("augment with all probabilities zero and unit scale is the identity") {
    SynthConfig cfg;
    cfg.seed = 17;
    cfg.image_size = 32;
    SceneSample s = generate_scene(cfg, 1);
    AugmentConfig a;
    a.p_hflip = a.p_vflip = a.p_colorjitter = 0.0;
    Rng rng(99);
    SceneSample out = augment(s, a, rng);
    CHECK(samples_equal(out, s));
}

TEST_CASE("augment geometry") {
    SynthConfig cfg;
    cfg.seed = 19;
    cfg.image_size = 32;
    SceneSample s = generate_scene(cfg, 2);

    SECTION("crop yields the requested size and a label subset") {
        AugmentConfig a;
        a.p_hflip = a.p_vflip = a.p_colorjitter = 0.0;
        a.crop_size = 20;
        Rng rng(4);
        SceneSample out = augment(s, a, rng);
        CHECK(out.height() == 20);
        CHECK(out.width() == 20);
        auto before = histogram(s);
        for (auto [cls, cnt] : histogram(out)) CHECK(before.count(cls) == 1);
    }
    SECTION("scale then default crop returns to the original size") {
        AugmentConfig a;
        a.p_hflip = a.p_vflip = a.p_colorjitter = 0.0;
        a.scale_min = a.scale_max = 1.5;
        Rng rng(4);
        SceneSample out = augment(s, a, rng);
        CHECK(out.height() == 32); // crop_size = 0 keeps the pre-scaling size
        CHECK(out.width() == 32);
        auto before = histogram(s);
        for (auto [cls, cnt] : histogram(out)) CHECK(before.count(cls) == 1);
    }
    SECTION("crop larger than the scaled image throws") {
        AugmentConfig a;
        a.crop_size = 64;
        Rng rng(4);
        CHECK_THROWS_AS(augment(s, a, rng), error);
    }
}

TEST_CASE("color jitter moves pixels but never labels") {
    SynthConfig cfg;
    cfg.seed = 23;
    cfg.image_size = 32;
    SceneSample s = generate_scene(cfg, 0);
    AugmentConfig a;
    a.p_hflip = a.p_vflip = 0.0;
    a.p_colorjitter = 1.0;
    Rng rng(8);
    SceneSample out = augment(s, a, rng);
    CHECK(out.labels == s.labels);
    CHECK_FALSE(out.image == s.image);
    const float* img = out.image.data<float>();
    for (std::size_t i = 0; i < out.image.numel(); ++i) {
        CHECK(img[i] >= 0.0f);
        CHECK(img[i] <= 1.0f);
    }
}

TEST_CASE("zero-amplitude color jitter is the identity") {
    SynthConfig cfg;
    cfg.seed = 29;
    cfg.image_size = 24;
    SceneSample s = generate_scene(cfg, 0);
    AugmentConfig a;
    a.p_hflip = a.p_vflip = 0.0;
    a.p_colorjitter = 1.0;
    a.brightness = a.contrast = a.saturation = a.hue = 0.0;
    Rng rng(8);
    SceneSample out = augment(s, a, rng);
    CHECK(out.labels == s.labels);
    const float* x = s.image.data<float>();
    const float* y = out.image.data<float>();
    for (std::size_t i = 0; i < s.image.numel(); ++i)
        CHECK(std::abs(x[i] - y[i]) < 1e-6f);
}

TEST_CASE("sample IO round-trips through PPM/PGM") {
    SynthConfig cfg;
    cfg.seed = 37;
    cfg.image_size = 32;
    SceneSample s = generate_scene(cfg, 5);
    std::string ipath = temp_path("segkit_s.ppm"), lpath = temp_path("segkit_s.pgm");
    save_sample(s, ipath, lpath);
    SceneSample back = load_sample(ipath, lpath);

    // labels are exact; image is quantized to 8 bits, so within half a step
    CHECK(back.labels == s.labels);
    const float* a = s.image.data<float>();
    const float* b = back.image.data<float>();
    for (std::size_t i = 0; i < s.image.numel(); ++i)
        CHECK(std::abs(a[i] - b[i]) <= 0.5f / 255.0f + 1e-6f);

    // header arithmetic: P6 header + 3 bytes per pixel
    std::string bytes = detail::read_file_bytes(ipath);
    std::string header = "P6\n32 32\n255\n";
    CHECK(bytes.size() == header.size() + 3 * 32 * 32);
    CHECK(bytes.compare(0, header.size(), header) == 0);
    std::string lbytes = detail::read_file_bytes(lpath);
    CHECK(lbytes.size() == std::string("P5\n32 32\n255\n").size() + 32 * 32);

    fs::remove(ipath);
    fs::remove(lpath);
}

TEST_CASE("netpbm loader rejects malformed files") {
    std::string path = temp_path("segkit_bad.ppm");
    std::string lpath = temp_path("segkit_bad.pgm");

    SECTION("bad magic") {
        detail::write_file_bytes(path, "P3\n2 2\n255\nxxxx");
        CHECK_THROWS_AS(load_sample(path, path), error);
    }
    SECTION("truncated payload") {
        detail::write_file_bytes(path, "P6\n4 4\n255\nshort");
        CHECK_THROWS_AS(load_sample(path, path), error);
    }
    SECTION("comments in the header are accepted") {
        SynthConfig cfg;
        cfg.image_size = 16;
        SceneSample s = generate_scene(cfg, 0);
        save_sample(s, path, lpath);
        std::string bytes = detail::read_file_bytes(path);
        detail::write_file_bytes(path, "P6\n# a comment\n" + bytes.substr(3));
        SceneSample back = load_sample(path, lpath);
        CHECK(back.labels == s.labels);
    }
    SECTION("image/label size mismatch") {
        SynthConfig cfg;
        cfg.image_size = 16;
        SceneSample s = generate_scene(cfg, 0);
        save_sample(s, path, lpath);
        SynthConfig cfg2;
        cfg2.image_size = 17;
        std::string l2 = temp_path("segkit_bad2.pgm");
        save_sample(generate_scene(cfg2, 0), temp_path("segkit_bad2.ppm"), l2);
        CHECK_THROWS_AS(load_sample(path, l2), error);
        fs::remove(temp_path("segkit_bad2.ppm"));
        fs::remove(l2);
    }
    fs::remove(path);
    fs::remove(lpath);
}

TEST_CASE("manifest round-trip") {
    std::string path = temp_path("segkit_manifest.tsv");
    std::vector<std::pair<std::string, std::string>> entries = {
        {"a/img0.ppm", "a/lab0.pgm"},
        {"b/img1.ppm", "b/lab1.pgm"},
    };
    save_manifest(entries, path);
    CHECK(load_manifest(path) == entries);

    detail::write_file_bytes(path, "no-tab-here\n");
    CHECK_THROWS_AS(load_manifest(path), error);
    fs::remove(path);
}
