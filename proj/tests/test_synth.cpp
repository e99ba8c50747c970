#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dadiff/dataset.hpp"
#include "dadiff/rng.hpp"
#include "dadiff/synth.hpp"

namespace fs = std::filesystem;
using namespace dadiff;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("dadiff_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

RunConfig small_cfg() {
    RunConfig cfg;
    cfg.frames = 5;
    cfg.image_size = 128;
    return cfg;
}

} // namespace

TEST_CASE("gen_pair: LR bound, identical boxes, determinism") {
    RunConfig cfg = small_cfg();
    auto [day, night] = gen_pair(cfg, 7);
    CHECK(day.frames.size() == 5);
    CHECK(night.frames.size() == 5);
    CHECK(day.meta.boxes.size() == night.meta.boxes.size());
    for (std::size_t i = 0; i < day.meta.boxes.size(); ++i) {
        const BoundingBox& b = day.meta.boxes[i];
        CHECK(std::max(b.w, b.h) < 25.0); // the low-resolution bound
        CHECK(b.x >= 0);
        CHECK(b.y >= 0);
        CHECK(b.x + b.w <= cfg.image_size);
        CHECK(b.y + b.h <= cfg.image_size);
        CHECK(b.x == night.meta.boxes[i].x);
        CHECK(b.w == night.meta.boxes[i].w);
    }
    // night sequences always carry an illumination attribute
    CHECK(night.meta.attributes.count("LAI") == 1);

    // same seed twice: bit-identical pixels
    auto [day2, night2] = gen_pair(cfg, 7);
    for (std::size_t f = 0; f < day.frames.size(); ++f) {
        CHECK(day.frames[f].rgb == day2.frames[f].rgb);
        CHECK(night.frames[f].rgb == night2.frames[f].rgb);
    }
    auto [day3, night3] = gen_pair(cfg, 8);
    CHECK(day.frames[0].rgb != day3.frames[0].rgb);
}

TEST_CASE("gen_pair: identity night transform reproduces day bitwise") {
    RunConfig cfg = small_cfg();
    cfg.night_ambient = 1.0;
    cfg.night_gamma = 1.0;
    cfg.night_noise = 0.0;
    auto [day, night] = gen_pair(cfg, 11);
    for (std::size_t f = 0; f < day.frames.size(); ++f)
        CHECK(day.frames[f].rgb == night.frames[f].rgb);
}

TEST_CASE("gen_pair: config-range errors") {
    RunConfig cfg = small_cfg();
    cfg.frames = 1;
    CHECK_THROWS_AS(gen_pair(cfg, 1), std::invalid_argument);
    cfg = small_cfg();
    cfg.image_size = 64;
    CHECK_THROWS_AS(gen_pair(cfg, 1), std::invalid_argument);
    cfg = small_cfg();
    cfg.night_gamma = 5.0;
    CHECK_THROWS_AS(gen_pair(cfg, 1), std::invalid_argument);
}

TEST_CASE("save_sequence round-trips through load_sequence") {
    RunConfig cfg = small_cfg();
    fs::path root = temp_dir("roundtrip");
    auto [day, night] = gen_pair(cfg, 13, "rt");
    save_sequence(root.string(), day);
    save_sequence(root.string(), night);

    TrackSequence loaded = load_sequence((root / "rt_night").string());
    CHECK(loaded.name == "rt_night");
    CHECK(loaded.domain == Domain::Night);
    CHECK(loaded.size() == night.meta.boxes.size());
    for (std::size_t i = 0; i < loaded.boxes.size(); ++i) {
        CHECK(loaded.boxes[i].x == night.meta.boxes[i].x);
        CHECK(loaded.boxes[i].y == night.meta.boxes[i].y);
        CHECK(loaded.boxes[i].w == night.meta.boxes[i].w);
        CHECK(loaded.boxes[i].h == night.meta.boxes[i].h);
    }
    CHECK(loaded.attributes == night.meta.attributes);

    // pixels survive the png round trip
    std::vector<Image> frames = load_frames(loaded);
    CHECK(frames.size() == night.frames.size());
    for (std::size_t f = 0; f < frames.size(); ++f)
        CHECK(frames[f].rgb == night.frames[f].rgb);

    CHECK(list_sequence_dirs(root.string()).size() == 2);
}

TEST_CASE("load_sequence error paths") {
    fs::path root = temp_dir("seq_errors");
    CHECK_THROWS_WITH_AS(load_sequence((root / "nope").string()),
                         doctest::Contains("missing directory"), std::runtime_error);

    // 3 images + 2 gt lines: count mismatch
    fs::path dir = root / "broken";
    fs::create_directories(dir / "img");
    Image img = make_image(130, 130);
    for (int i = 1; i <= 3; ++i) {
        char fn[16];
        std::snprintf(fn, sizeof(fn), "%04d.png", i);
        write_png((dir / "img" / fn).string(), img);
    }
    {
        std::ofstream gt(dir / "groundtruth.txt");
        gt << "10,20,15,18\n1,2,3,4\n";
    }
    CHECK_THROWS_WITH_AS(load_sequence(dir.string()), doctest::Contains("ground-truth"),
                         std::runtime_error);

    // malformed line reports its number
    {
        std::ofstream gt(dir / "groundtruth.txt");
        gt << "10,20,15,18\n1,2,bad,4\n5,6,7,8\n";
    }
    CHECK_THROWS_WITH_AS(load_sequence(dir.string()), doctest::Contains(":2"),
                         std::runtime_error);

    // happy path parse
    {
        std::ofstream gt(dir / "groundtruth.txt");
        gt << "10,20,15,18\n10,20,15,18\n10,20,15,18\n";
    }
    TrackSequence seq = load_sequence(dir.string());
    CHECK(seq.size() == 3);
    CHECK(seq.boxes[0].x == 10);
    CHECK(seq.boxes[0].y == 20);
    CHECK(seq.boxes[0].w == 15);
    CHECK(seq.boxes[0].h == 18);
}

TEST_CASE("feature dump round trip and payload size") {
    fs::path root = temp_dir("features");
    Rng rng(17);
    std::vector<FeatureMap> maps;
    std::vector<std::string> labels;
    for (int i = 0; i < 2; ++i) {
        FeatureMap m = rng.normal_tensor({32, 8, 8});
        for (std::size_t j = 0; j < m.size(); ++j)
            m[j] = static_cast<double>(static_cast<float>(m[j])); // float-exact values
        maps.push_back(std::move(m));
        labels.push_back(i == 0 ? "day" : "night");
    }
    fs::path path = root / "feats.bin";
    dump_features(maps, labels, path.string());

    // payload = header line + 2*32*8*8 float32
    std::ifstream in(path, std::ios::binary);
    std::string header;
    std::getline(in, header);
    std::size_t expected_payload = 2 * 32 * 8 * 8 * 4;
    CHECK(fs::file_size(path) == header.size() + 1 + expected_payload);

    FeatureDump dump = load_features(path.string());
    CHECK(dump.labels == labels);
    REQUIRE(dump.maps.size() == 2);
    for (int i = 0; i < 2; ++i) CHECK(max_abs_diff(dump.maps[i], maps[i]) == 0.0);

    // empty dump: header with count 0, no payload
    fs::path empty = root / "empty.bin";
    dump_features({}, {}, empty.string());
    FeatureDump edump = load_features(empty.string());
    CHECK(edump.maps.empty());
    CHECK(edump.labels.empty());
    std::ifstream ein(empty, std::ios::binary);
    std::string eheader;
    std::getline(ein, eheader);
    CHECK(fs::file_size(empty) == eheader.size() + 1);

    CHECK_THROWS_AS(dump_features(maps, {"one"}, (root / "x.bin").string()),
                    std::invalid_argument);
}

TEST_CASE("night transform invariants") {
    NightTransform identity{1.0, 1.0, 0.0};
    CHECK(identity.is_identity());
    identity.validate(); // the identity is always acceptable
    for (double v : {0.0, 0.25, 0.9, 1.0}) CHECK(identity.apply(v, 3.0) == v);

    NightTransform bad{0.5, 2.0, 0.02};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    NightTransform night{0.2, 2.5, 0.02};
    night.validate();
    // monotone before noise, and clamped to [0,1]
    double prev = -1.0;
    for (double v = 0.0; v <= 1.0; v += 0.05) {
        double out = night.apply(v, 0.0);
        CHECK(out >= prev);
        CHECK(out >= 0.0);
        CHECK(out <= 1.0);
        prev = out;
    }
}
