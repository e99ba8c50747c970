#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dadiff/config.hpp"
#include "dadiff/image.hpp"
#include "dadiff/types.hpp"

namespace dadiff {

/// Day-to-night pixel model: ambient scale, then a tone-curve exponent,
/// then additive Gaussian noise, then clamp to [0,1]. The generator draws
/// parameters from the stated ranges; apply() also accepts the exact
/// identity (1, 1, 0).
struct NightTransform {
    double ambient = 0.3;    // [0.05, 0.3]
    double gamma = 2.0;      // [2.0, 3.5]
    double noise_sigma = 0.03; // [0.01, 0.05]

    bool is_identity() const {
        return ambient == 1.0 && gamma == 1.0 && noise_sigma == 0.0;
    }
    void validate() const;

    /// v in [0,1], n a standard-normal draw.
    double apply(double v, double n) const;
};

struct GeneratedSequence {
    TrackSequence meta;
    std::vector<Image> frames;
};

/// Render a paired day/night sequence: smooth gradient background, static
/// clutter shapes, one moving target whose box never reaches 25x25. Night
/// frames are derived pixel-wise from the (quantized) day frames; boxes are
/// identical between the pair. Bit-reproducible per seed. Sequences are
/// named "<name_base>_day" / "<name_base>_night"; an empty name_base
/// derives one from the seed.
std::pair<GeneratedSequence, GeneratedSequence>
gen_pair(const RunConfig& cfg, std::uint64_t seed, const std::string& name_base = "");

/// Write a sequence in the benchmark layout:
///   <root>/<name>/img/0001.png ..., groundtruth.txt, attributes.txt
/// Returns the sequence with frame paths filled in.
TrackSequence save_sequence(const std::string& root, const GeneratedSequence& seq);

} // namespace dadiff
