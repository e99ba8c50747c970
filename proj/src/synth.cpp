#include "dadiff/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "dadiff/rng.hpp"

namespace fs = std::filesystem;

namespace dadiff {

void NightTransform::validate() const {
    if (is_identity()) return;
    if (!(ambient >= 0.05 && ambient <= 0.3))
        throw std::invalid_argument("NightTransform: ambient out of [0.05, 0.3]");
    if (!(gamma >= 2.0 && gamma <= 3.5))
        throw std::invalid_argument("NightTransform: gamma out of [2.0, 3.5]");
    if (!(noise_sigma >= 0.01 && noise_sigma <= 0.05))
        throw std::invalid_argument("NightTransform: noise_sigma out of [0.01, 0.05]");
}

double NightTransform::apply(double v, double n) const {
    double out = std::pow(ambient * v, gamma) + noise_sigma * n;
    return std::clamp(out, 0.0, 1.0);
}

namespace {

struct Rgb {
    double r, g, b;
};

struct Shape {
    bool ellipse;
    double cx, cy, w, h;
    Rgb color;
};

std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void paint(Image& img, const Shape& s) {
    int x0 = std::max(0, static_cast<int>(std::floor(s.cx - s.w / 2)));
    int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(s.cx + s.w / 2)));
    int y0 = std::max(0, static_cast<int>(std::floor(s.cy - s.h / 2)));
    int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(s.cy + s.h / 2)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            double dx = (x + 0.5 - s.cx) / (s.w / 2);
            double dy = (y + 0.5 - s.cy) / (s.h / 2);
            bool inside = s.ellipse ? dx * dx + dy * dy <= 1.0
                                    : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
            if (!inside) continue;
            img.at(y, x, 0) = quantize(s.color.r);
            img.at(y, x, 1) = quantize(s.color.g);
            img.at(y, x, 2) = quantize(s.color.b);
        }
}

} // namespace

std::pair<GeneratedSequence, GeneratedSequence>
gen_pair(const RunConfig& cfg, std::uint64_t seed, const std::string& name_base) {
    if (cfg.frames < 2) throw std::invalid_argument("gen_pair: frame count must be >= 2");
    if (cfg.image_size < 128)
        throw std::invalid_argument("gen_pair: image size must be >= 128");
    NightTransform night{cfg.night_ambient, cfg.night_gamma, cfg.night_noise};
    night.validate();

    Rng rng(Rng::derive(seed, 0));
    Rng noise_rng(Rng::derive(seed, 1));
    int sz = cfg.image_size;

    // background: smooth two-corner gradient
    Rgb bg0{rng.uniform(0.30, 0.50), rng.uniform(0.30, 0.50), rng.uniform(0.30, 0.50)};
    Rgb bg1{rng.uniform(0.50, 0.70), rng.uniform(0.50, 0.70), rng.uniform(0.50, 0.70)};
    bool horiz = rng.uniform() < 0.5;

    // static clutter shapes with mid contrast
    int n_clutter = rng.uniform_int(3, 7);
    std::vector<Shape> clutter;
    for (int i = 0; i < n_clutter; ++i) {
        Shape s;
        s.ellipse = rng.uniform() < 0.5;
        s.w = rng.uniform(8, 30);
        s.h = rng.uniform(8, 30);
        s.cx = rng.uniform(0, sz);
        s.cy = rng.uniform(0, sz);
        double base = rng.uniform() < 0.5 ? rng.uniform(0.15, 0.30) : rng.uniform(0.70, 0.85);
        s.color = {base + rng.uniform(-0.05, 0.05), base + rng.uniform(-0.05, 0.05),
                   base + rng.uniform(-0.05, 0.05)};
        clutter.push_back(s);
    }

    // the moving low-resolution target (strictly below 25x25)
    Shape target;
    target.ellipse = rng.uniform() < 0.5;
    target.w = rng.uniform(12, 24);
    target.h = rng.uniform(12, 24);
    bool bright = rng.uniform() < 0.5;
    double tb = bright ? rng.uniform(0.88, 0.98) : rng.uniform(0.02, 0.12);
    target.color = {tb, std::clamp(tb + (bright ? -0.1 : 0.1), 0.0, 1.0), tb};
    double margin = 20.0;
    double tx = rng.uniform(margin + 12, sz - margin - 12);
    double ty = rng.uniform(margin + 12, sz - margin - 12);
    double speed = rng.uniform(1.5, 4.5);
    double dir = rng.uniform(0, 2 * 3.14159265358979323846);
    double vx = speed * std::cos(dir), vy = speed * std::sin(dir);

    GeneratedSequence day, nightseq;
    std::string base = name_base;
    if (base.empty()) {
        char name[32];
        std::snprintf(name, sizeof(name), "seq%04u", static_cast<unsigned>(seed % 10000));
        base = name;
    }
    day.meta.name = base + "_day";
    nightseq.meta.name = base + "_night";
    day.meta.domain = Domain::Day;
    nightseq.meta.domain = Domain::Night;
    if (n_clutter >= 5) day.meta.attributes.insert("BC");
    if (speed > 3.5) day.meta.attributes.insert("FM");
    nightseq.meta.attributes = day.meta.attributes;
    nightseq.meta.attributes.insert("LAI");

    for (int f = 0; f < cfg.frames; ++f) {
        Image frame = make_image(sz, sz);
        for (int y = 0; y < sz; ++y)
            for (int x = 0; x < sz; ++x) {
                double a = horiz ? static_cast<double>(x) / (sz - 1)
                                 : static_cast<double>(y) / (sz - 1);
                frame.at(y, x, 0) = quantize(bg0.r + (bg1.r - bg0.r) * a);
                frame.at(y, x, 1) = quantize(bg0.g + (bg1.g - bg0.g) * a);
                frame.at(y, x, 2) = quantize(bg0.b + (bg1.b - bg0.b) * a);
            }
        for (const Shape& s : clutter) paint(frame, s);
        Shape t = target;
        t.cx = tx;
        t.cy = ty;
        paint(frame, t);

        BoundingBox box;
        box.x = std::floor(tx - target.w / 2);
        box.y = std::floor(ty - target.h / 2);
        box.w = std::ceil(target.w);
        box.h = std::ceil(target.h);
        day.meta.boxes.push_back(box);
        nightseq.meta.boxes.push_back(box);

        Image dark = make_image(sz, sz);
        for (int y = 0; y < sz; ++y)
            for (int x = 0; x < sz; ++x)
                for (int c = 0; c < 3; ++c)
                    dark.at(y, x, c) = quantize(
                        night.apply(frame.at(y, x, c) / 255.0, noise_rng.normal()));

        day.frames.push_back(std::move(frame));
        nightseq.frames.push_back(std::move(dark));

        tx += vx;
        ty += vy;
        if (tx < margin || tx > sz - margin) vx = -vx, tx += 2 * vx;
        if (ty < margin || ty > sz - margin) vy = -vy, ty += 2 * vy;
    }
    return {std::move(day), std::move(nightseq)};
}

TrackSequence save_sequence(const std::string& root, const GeneratedSequence& seq) {
    fs::path dir = fs::path(root) / seq.meta.name;
    fs::create_directories(dir / "img");
    TrackSequence out = seq.meta;
    out.frame_paths.clear();
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        char fn[16];
        std::snprintf(fn, sizeof(fn), "%04zu.png", i + 1);
        fs::path p = dir / "img" / fn;
        write_png(p.string(), seq.frames[i]);
        out.frame_paths.push_back(p.string());
    }
    std::ofstream gt(dir / "groundtruth.txt");
    for (const BoundingBox& b : seq.meta.boxes)
        gt << static_cast<long>(b.x) << "," << static_cast<long>(b.y) << ","
           << static_cast<long>(b.w) << "," << static_cast<long>(b.h) << "\n";
    std::ofstream at(dir / "attributes.txt");
    bool first = true;
    for (const std::string& a : seq.meta.attributes) {
        at << (first ? "" : ",") << a;
        first = false;
    }
    at << "\n";
    return out;
}

} // namespace dadiff
