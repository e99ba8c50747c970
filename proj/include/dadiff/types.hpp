#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace dadiff {

struct BoundingBox {
    double x = 0, y = 0; // top-left pixel
    double w = 0, h = 0; // width/height in pixels, > 0

    double cx() const { return x + w / 2.0; }
    double cy() const { return y + h / 2.0; }
    double area() const { return w * h; }

    void validate() const {
        if (!(w > 0) || !(h > 0))
            throw std::invalid_argument("BoundingBox: width and height must be positive");
    }
};

enum class Domain { Day, Night };

inline std::string to_string(Domain d) { return d == Domain::Day ? "day" : "night"; }

/// The ten benchmark attribute tags.
inline const std::vector<std::string>& known_attributes() {
    static const std::vector<std::string> a = {"ARC", "BC",  "CM", "FM", "OCC",
                                               "SV",  "SOB", "VC", "IV", "LAI"};
    return a;
}

inline bool is_known_attribute(const std::string& s) {
    for (const auto& a : known_attributes())
        if (a == s) return true;
    return false;
}

/// Ordered frames with per-frame ground-truth boxes, a domain tag, and
/// attribute flags. Frames are file references; pixel data is loaded
/// separately when needed.
struct TrackSequence {
    std::string name;
    std::vector<std::string> frame_paths;
    std::vector<BoundingBox> boxes;
    Domain domain = Domain::Day;
    std::set<std::string> attributes;

    std::size_t size() const { return frame_paths.size(); }
};

} // namespace dadiff
