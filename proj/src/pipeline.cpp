#include "dadiff/pipeline.hpp"

#include <cmath>
#include <stdexcept>

#include "dadiff/dataset.hpp"

namespace dadiff {

DadiffModel DadiffModel::init(const RunConfig& cfg) {
    cfg.validate();
    DadiffModel m;
    m.cfg = cfg;
    m.sched = make_schedule(ScheduleKind::Linear, cfg.T, cfg.beta_start, cfg.beta_end, cfg.S);
    Rng rng(Rng::derive(cfg.seed, 0));
    std::size_t c = static_cast<std::size_t>(cfg.C);
    m.backbone = SiameseBackbone(c, rng);
    m.encoder = AlignmentEncoder(c, rng);
    m.tol = TrackingOrientedLayer(c, static_cast<std::size_t>(cfg.heads),
                                  static_cast<std::size_t>(cfg.H),
                                  static_cast<std::size_t>(cfg.W), rng);
    m.disc = Discriminator(c, rng, cfg.disc_t_embed);
    m.head = CorrelationHead(c, rng);
    return m;
}

nn::NamedParams DadiffModel::model_params() {
    nn::NamedParams out = backbone.named_params("backbone");
    for (auto& p : encoder.named_params("encoder")) out.push_back(p);
    for (auto& p : tol.named_params("tol")) out.push_back(p);
    for (auto& p : head.named_params("head")) out.push_back(p);
    return out;
}

nn::NamedParams DadiffModel::disc_params() { return disc.named_params("disc"); }

nn::NamedParams DadiffModel::all_params() {
    nn::NamedParams out = model_params();
    for (auto& p : disc_params()) out.push_back(p);
    return out;
}

AlignOutput align_features(const DadiffModel& m, const FeatureMap& feats, Rng& noise_rng) {
    Tensor eps = noise_rng.normal_tensor(feats.shape());
    FeatureMap xT = q_sample(feats, m.sched.T(), eps, m.sched);
    EpsFn predict = [&m](const FeatureMap& xt, const FeatureMap& cond, int t) {
        return m.encoder.eps_predict(xt, cond, t);
    };
    AlignOutput out;
    out.traj = sample(predict, feats, xT, m.sched);
    out.aligned = m.tol.forward_nograd(out.traj.final_x0());
    return out;
}

std::vector<BoundingBox> track_sequence(const DadiffModel& m, const TrackSequence& seq,
                                        const std::vector<Image>& frames,
                                        bool use_alignment, std::uint64_t seed) {
    if (seq.size() < 2)
        throw std::invalid_argument("track_sequence: sequence '" + seq.name +
                                    "' has fewer than 2 frames");
    if (frames.size() != seq.size())
        throw std::invalid_argument("track_sequence: frame/box count mismatch");
    seq.boxes.at(0).validate();

    Rng noise_rng(Rng::derive(seed, 42));
    const BoundingBox& init = seq.boxes[0];
    double cx = init.cx(), cy = init.cy();

    Tensor tmpl = crop_chw(frames[0], cx, cy, m.cfg.template_size);
    FeatureMap ft = m.backbone.extract(tmpl);

    std::vector<BoundingBox> out;
    out.reserve(seq.size());
    out.push_back(init);
    std::size_t half_h = 0, half_w = 0;
    for (std::size_t f = 1; f < seq.size(); ++f) {
        Tensor search = crop_chw(frames[f], cx, cy, m.cfg.search_size);
        FeatureMap fs = m.backbone.extract(search);
        if (use_alignment) fs = align_features(m, fs, noise_rng).aligned;
        Tensor resp = m.head.response(ft, fs);
        if (half_h == 0) {
            half_h = resp.dim(0) / 2;
            half_w = resp.dim(1) / 2;
        }
        auto [r, c] = argmax_2d(resp);
        cx += (static_cast<double>(c) - static_cast<double>(half_w)) * 8.0;
        cy += (static_cast<double>(r) - static_cast<double>(half_h)) * 8.0;
        out.push_back({cx - init.w / 2.0, cy - init.h / 2.0, init.w, init.h});
    }
    return out;
}

std::vector<BoundingBox> track_sequence(const DadiffModel& m, const TrackSequence& seq,
                                        bool use_alignment, std::uint64_t seed) {
    return track_sequence(m, seq, load_frames(seq), use_alignment, seed);
}

} // namespace dadiff
