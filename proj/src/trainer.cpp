#include "dadiff/trainer.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "dadiff/dataset.hpp"

namespace dadiff {

PairedDataset::PairedDataset(const RunConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), seed_(seed) {
    for (int i = 0; i < cfg.sequences; ++i) {
        char base[16];
        std::snprintf(base, sizeof(base), "seq%04d", i);
        auto [day, night] = gen_pair(cfg, Rng::derive(seed, 100 + i), base);
        day_.push_back(std::move(day));
        night_.push_back(std::move(night));
    }
}

PairedDataset::PairedDataset(const RunConfig& cfg, std::uint64_t seed,
                             const std::string& day_root, const std::string& night_root)
    : cfg_(cfg), seed_(seed) {
    auto load_all = [](const std::string& root) {
        std::vector<GeneratedSequence> out;
        for (const std::string& dir : list_sequence_dirs(root)) {
            GeneratedSequence g;
            g.meta = load_sequence(dir);
            g.frames = load_frames(g.meta);
            out.push_back(std::move(g));
        }
        return out;
    };
    day_ = load_all(day_root);
    night_ = load_all(night_root);
    if (day_.empty() || day_.size() != night_.size())
        throw std::runtime_error("PairedDataset: day/night sequence counts differ (" +
                                 std::to_string(day_.size()) + " vs " +
                                 std::to_string(night_.size()) + ")");
    for (std::size_t i = 0; i < day_.size(); ++i)
        if (day_[i].meta.size() != night_[i].meta.size())
            throw std::runtime_error("PairedDataset: frame count mismatch between '" +
                                     day_[i].meta.name + "' and '" + night_[i].meta.name +
                                     "'");
    cfg_.sequences = static_cast<int>(day_.size());
    cfg_.frames = static_cast<int>(day_[0].meta.size());
}

TrainSample PairedDataset::sample(Domain d, long index) const {
    // geometry derives from the index alone, so day/night samples at the
    // same cursor are pixel-correspondent
    Rng r(Rng::derive(seed_, 0x7000 + static_cast<std::uint64_t>(index)));
    int s = r.uniform_int(0, static_cast<int>(day_.size()) - 1);
    int f = r.uniform_int(1, cfg_.frames - 1);
    double dx = r.uniform(-20.0, 20.0);
    double dy = r.uniform(-20.0, 20.0);

    const GeneratedSequence& seq = (d == Domain::Day ? day_ : night_)[s];
    const BoundingBox& b0 = seq.meta.boxes[0];
    const BoundingBox& bf = seq.meta.boxes[static_cast<std::size_t>(f)];

    TrainSample out;
    out.template_img = crop_chw(seq.frames[0], b0.cx(), b0.cy(), cfg_.template_size);
    out.search_img =
        crop_chw(seq.frames[static_cast<std::size_t>(f)], bf.cx() + dx, bf.cy() + dy,
                 cfg_.search_size);
    double half = static_cast<double>((cfg_.search_size - cfg_.template_size) / 8 / 2);
    out.gt_cx = half - dx / 8.0;
    out.gt_cy = half - dy / 8.0;
    return out;
}

namespace {

class SynthStream : public BatchStream {
public:
    SynthStream(const PairedDataset& data, Domain d, int batch_size, long max_batches)
        : data_(data), domain_(d), batch_(batch_size), max_batches_(max_batches) {}

    std::optional<std::vector<TrainSample>> next() override {
        if (max_batches_ >= 0 && served_ >= max_batches_) return std::nullopt;
        std::vector<TrainSample> out;
        out.reserve(static_cast<std::size_t>(batch_));
        for (int i = 0; i < batch_; ++i) out.push_back(data_.sample(domain_, cursor_++));
        ++served_;
        return out;
    }

    Domain domain() const override { return domain_; }

private:
    const PairedDataset& data_;
    Domain domain_;
    int batch_;
    long max_batches_;
    long cursor_ = 0;
    long served_ = 0;
};

} // namespace

std::unique_ptr<BatchStream> make_stream(const PairedDataset& data, Domain d,
                                         int batch_size, long max_batches) {
    return std::make_unique<SynthStream>(data, d, batch_size, max_batches);
}

std::string StepMetrics::to_json_line() const {
    nlohmann::json j;
    j["step"] = step;
    j["loss_total"] = loss_total;
    j["loss_trc"] = loss_trc;
    j["loss_adv"] = loss_adv;
    j["loss_align"] = loss_align;
    j["loss_disc"] = loss_disc;
    j["lr_model"] = lr_model;
    j["lr_disc"] = lr_disc;
    return j.dump();
}

TrainState::TrainState(const RunConfig& cfg)
    : model(DadiffModel::init(cfg)), opt_model(model.model_params()),
      opt_disc(model.disc_params()),
      max_steps(static_cast<long>(cfg.epochs) * cfg.steps_per_epoch),
      train_rng(Rng::derive(cfg.seed, 3)) {}

namespace {

/// States fed to the discriminator for one branch, per the disc_input flag.
DiffusionTrajectory disc_states(const RunConfig& cfg, const NoiseSchedule& sched,
                                const TrajectoryG& reverse, const FeatureMap& feats,
                                Rng& rng) {
    DiffusionTrajectory out;
    if (cfg.disc_input == "reverse" || cfg.disc_input == "both")
        out = reverse.values();
    if (cfg.disc_input == "forward" || cfg.disc_input == "both") {
        for (int t : sched.tau())
            out.states.push_back(
                {t, q_sample(feats, t, rng.normal_tensor(feats.shape()), sched)});
        out.states.push_back({0, feats});
    }
    return out;
}

} // namespace

StepMetrics train_step(TrainState& st, const std::vector<TrainSample>& day,
                       const std::vector<TrainSample>& night) {
    const RunConfig& cfg = st.model.cfg;
    if (day.empty() || day.size() != night.size())
        throw std::runtime_error("train_step: day/night batch sizes differ (" +
                                 std::to_string(day.size()) + " vs " +
                                 std::to_string(night.size()) + ")");
    std::size_t bsz = day.size();
    bool adversarial = cfg.lambda2 > 0.0;
    bool build_day_chain = cfg.use_alignment || adversarial;

    ag::Graph gm;
    gm.freeze(nn::values(st.model.disc_params()));

    std::vector<ag::Var> ft_day(bsz), fs_day(bsz), fs_night(bsz);
    std::vector<TrajectoryG> day_traj(bsz), night_traj(bsz);
    for (std::size_t b = 0; b < bsz; ++b) {
        ft_day[b] = st.model.backbone.forward(gm, gm.leaf(day[b].template_img));
        fs_day[b] = st.model.backbone.forward(gm, gm.leaf(day[b].search_img));
        if (adversarial || cfg.lambda3 > 0.0)
            fs_night[b] = st.model.backbone.forward(gm, gm.leaf(night[b].search_img));
        if (build_day_chain) {
            Tensor eps = st.train_rng.normal_tensor(fs_day[b].val().shape());
            ag::Var xT = q_sample_g(gm, fs_day[b], st.model.sched.T(), eps, st.model.sched);
            day_traj[b] = sample_g(gm, st.model.encoder, fs_day[b], xT, st.model.sched);
        }
        if (adversarial) {
            Tensor eps = st.train_rng.normal_tensor(fs_night[b].val().shape());
            ag::Var xT =
                q_sample_g(gm, fs_night[b], st.model.sched.T(), eps, st.model.sched);
            night_traj[b] = sample_g(gm, st.model.encoder, fs_night[b], xT, st.model.sched);
        }
    }

    StepMetrics m;
    m.step = st.step;
    m.lr_model = poly_lr(cfg.lr_model, st.step, st.max_steps, cfg.poly_power);
    m.lr_disc = poly_lr(cfg.lr_disc, st.step, st.max_steps, cfg.poly_power);

    // (c) discriminator update on detached trajectory states
    if (adversarial) {
        ag::Graph gd;
        ag::Var dloss;
        for (std::size_t b = 0; b < bsz; ++b) {
            DiffusionTrajectory d_states = disc_states(cfg, st.model.sched, day_traj[b],
                                                       fs_day[b].val(), st.train_rng);
            DiffusionTrajectory n_states = disc_states(cfg, st.model.sched, night_traj[b],
                                                       fs_night[b].val(), st.train_rng);
            ag::Var term = adv_disc_loss_g(gd, st.model.disc, d_states, n_states);
            dloss = dloss.defined() ? ag::add(dloss, term) : term;
        }
        dloss = ag::affine(dloss, 1.0 / static_cast<double>(bsz), 0.0);
        m.loss_disc = dloss.val()[0];
        if (!std::isfinite(m.loss_disc))
            throw std::runtime_error("train_step: non-finite discriminator loss at step " +
                                     std::to_string(st.step));
        st.opt_disc.zero_grad();
        gd.backward(dloss);
        st.opt_disc.step(m.lr_disc, cfg.grad_clip);
    }

    // (d) model update: trc on the day branch, align per mode, adv on the
    // night trajectory against the (just updated) discriminator
    ag::Var trc, align, adv;
    for (std::size_t b = 0; b < bsz; ++b) {
        ag::Var search_feats = fs_day[b];
        if (cfg.use_alignment)
            search_feats = st.model.tol.forward(gm, day_traj[b].final_x0());
        ag::Var resp = st.model.head.forward(gm, ft_day[b], search_feats);
        ag::Var t = trc_loss(gm, resp, day[b].gt_cy, day[b].gt_cx);
        trc = trc.defined() ? ag::add(trc, t) : t;
        if (cfg.lambda3 > 0.0) {
            ag::Var cond = cfg.mode == "paired" ? fs_night[b] : fs_day[b];
            ag::Var a = align_loss_g(gm, st.model.encoder, fs_day[b], cond, st.model.sched,
                                     st.train_rng);
            align = align.defined() ? ag::add(align, a) : a;
        }
        if (adversarial) {
            ag::Var a = adv_gen_loss_g(gm, st.model.disc, night_traj[b]);
            adv = adv.defined() ? ag::add(adv, a) : a;
        }
    }
    double inv_b = 1.0 / static_cast<double>(bsz);
    trc = ag::affine(trc, inv_b, 0.0);
    m.loss_trc = trc.val()[0];
    ag::Var total = ag::affine(trc, cfg.lambda1, 0.0);
    if (align.defined()) {
        align = ag::affine(align, inv_b, 0.0);
        m.loss_align = align.val()[0];
        total = ag::add(total, ag::affine(align, cfg.lambda3, 0.0));
    }
    if (adv.defined()) {
        adv = ag::affine(adv, inv_b, 0.0);
        m.loss_adv = adv.val()[0];
        total = ag::add(total, ag::affine(adv, cfg.lambda2, 0.0));
    }
    m.loss_total = total_loss(m.loss_trc, m.loss_adv, m.loss_align, cfg.lambda1,
                              cfg.lambda2, cfg.lambda3);

    st.opt_model.zero_grad();
    gm.backward(total);
    st.opt_model.step(m.lr_model, cfg.grad_clip);

    ++st.step;
    return m;
}

std::vector<StepMetrics> train_epoch(TrainState& st, BatchStream& day_stream,
                                     BatchStream& night_stream, std::ostream* metrics_out) {
    const RunConfig& cfg = st.model.cfg;
    std::vector<StepMetrics> out;
    out.reserve(static_cast<std::size_t>(cfg.steps_per_epoch));
    for (int i = 0; i < cfg.steps_per_epoch; ++i) {
        auto day = day_stream.next();
        auto night = night_stream.next();
        if (!day || !night)
            throw std::runtime_error("train_epoch: data exhausted at step " +
                                     std::to_string(st.step) + " (epoch step " +
                                     std::to_string(i) + ")");
        StepMetrics metrics = train_step(st, *day, *night);
        if (metrics_out) *metrics_out << metrics.to_json_line() << "\n";
        out.push_back(metrics);
    }
    return out;
}

} // namespace dadiff
