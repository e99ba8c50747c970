#pragma once

#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dadiff/losses.hpp"
#include "dadiff/pipeline.hpp"
#include "dadiff/synth.hpp"

namespace dadiff {

/// One training example: crops plus the label center in response cells.
struct TrainSample {
    Tensor template_img; // 3 x template_size x template_size
    Tensor search_img;   // 3 x search_size x search_size
    double gt_cy = 0, gt_cx = 0;
};

/// A batch stream yields fixed-size lists of samples for one domain.
class BatchStream {
public:
    virtual ~BatchStream() = default;
    virtual std::optional<std::vector<TrainSample>> next() = 0;
    virtual Domain domain() const = 0;
};

/// Paired day/night scenes held in memory. Day and night streams built on
/// the same dataset draw geometrically identical crops at equal cursor
/// positions (sequence, frame, and jitter derive from the sample index), so
/// paired-mode training sees pixel-correspondent day/night samples.
class PairedDataset {
public:
    /// Generate cfg.sequences synthetic pairs.
    PairedDataset(const RunConfig& cfg, std::uint64_t seed);

    /// Load benchmark-layout directories, paired by sorted order.
    PairedDataset(const RunConfig& cfg, std::uint64_t seed, const std::string& day_root,
                  const std::string& night_root);

    TrainSample sample(Domain d, long index) const;
    const std::vector<GeneratedSequence>& sequences(Domain d) const {
        return d == Domain::Day ? day_ : night_;
    }

private:
    RunConfig cfg_;
    std::uint64_t seed_;
    std::vector<GeneratedSequence> day_, night_;
};

std::unique_ptr<BatchStream> make_stream(const PairedDataset& data, Domain d,
                                         int batch_size, long max_batches);

struct StepMetrics {
    long step = 0;
    double loss_total = 0, loss_trc = 0, loss_adv = 0, loss_align = 0, loss_disc = 0;
    double lr_model = 0, lr_disc = 0;

    std::string to_json_line() const;
};

struct TrainState {
    DadiffModel model;
    nn::Adam opt_model;
    nn::Adam opt_disc;
    long step = 0;
    long max_steps = 0;
    Rng train_rng;

    explicit TrainState(const RunConfig& cfg);
};

/// One alternating update: discriminator first on detached trajectories,
/// then the generator side on the total objective.
StepMetrics train_step(TrainState& st, const std::vector<TrainSample>& day,
                       const std::vector<TrainSample>& night);

/// Runs cfg.steps_per_epoch steps, appending one JSON line per step to
/// metrics_out when given. Aborts with a diagnostic on data exhaustion or
/// non-finite losses.
std::vector<StepMetrics> train_epoch(TrainState& st, BatchStream& day_stream,
                                     BatchStream& night_stream,
                                     std::ostream* metrics_out = nullptr);

} // namespace dadiff
