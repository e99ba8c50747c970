#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dadiff/config.hpp"
#include "dadiff/diffusion.hpp"
#include "dadiff/image.hpp"
#include "dadiff/networks.hpp"
#include "dadiff/tracker.hpp"
#include "dadiff/types.hpp"

namespace dadiff {

/// All learned components plus the schedule they were built for.
struct DadiffModel {
    RunConfig cfg;
    NoiseSchedule sched;
    SiameseBackbone backbone;
    AlignmentEncoder encoder;
    TrackingOrientedLayer tol;
    Discriminator disc;
    CorrelationHead head;

    static DadiffModel init(const RunConfig& cfg);

    /// Generator-side parameters (everything the model optimizer updates).
    nn::NamedParams model_params();
    nn::NamedParams disc_params();
    nn::NamedParams all_params();
};

struct AlignOutput {
    DiffusionTrajectory traj; // reverse chain from xT down to X_0
    FeatureMap aligned;       // N_f^a, the tracking-oriented layer output
};

/// Full alignment pass on one feature map: noise the features up to T,
/// reverse-sample conditioned on them, then integrate through the
/// tracking-oriented layer. Deterministic given the rng state.
AlignOutput align_features(const DadiffModel& m, const FeatureMap& feats, Rng& noise_rng);

/// One-pass tracking: the template comes from frame 0's box; per frame the
/// search region is cropped around the previous prediction, optionally
/// aligned, and the response argmax moves the (fixed-size) box.
std::vector<BoundingBox> track_sequence(const DadiffModel& m, const TrackSequence& seq,
                                        const std::vector<Image>& frames,
                                        bool use_alignment, std::uint64_t seed);

/// Convenience overload that loads the frames from the sequence's paths.
std::vector<BoundingBox> track_sequence(const DadiffModel& m, const TrackSequence& seq,
                                        bool use_alignment, std::uint64_t seed);

} // namespace dadiff
