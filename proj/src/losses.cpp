#include "dadiff/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace dadiff {

double poly_lr(double base_lr, long iter, long max_iter, double power) {
    if (max_iter <= 0) throw std::invalid_argument("poly_lr: max_iter must be > 0");
    if (iter < 0 || iter > max_iter)
        throw std::invalid_argument("poly_lr: iter " + std::to_string(iter) +
                                    " outside [0," + std::to_string(max_iter) + "]");
    return base_lr * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iter),
                              power);
}

ag::Var q_sample_g(ag::Graph& g, ag::Var x0, int t, const Tensor& eps,
                   const NoiseSchedule& sched) {
    if (!x0.val().same_shape(eps))
        throw std::invalid_argument("q_sample_g: noise shape mismatch");
    sched.check_timestep(t, 0);
    double ab = sched.alpha_bar(t);
    Tensor scaled_eps = eps;
    double cn = std::sqrt(1.0 - ab);
    for (std::size_t i = 0; i < scaled_eps.size(); ++i) scaled_eps[i] *= cn;
    return ag::add(ag::affine(x0, std::sqrt(ab), 0.0), g.leaf(std::move(scaled_eps)));
}

ag::Var ddim_step_g(ag::Graph& g, ag::Var xt, ag::Var eps_pred, int t, int t_prev,
                    const NoiseSchedule& sched) {
    (void)g;
    if (t_prev >= t) throw std::invalid_argument("ddim_step_g: t_prev must be below t");
    sched.check_timestep(t, 1);
    double ab = sched.alpha_bar(t);
    double abp = sched.alpha_bar(t_prev);
    // sqrt(abp) * (xt - sqrt(1-ab) eps)/sqrt(ab) + sqrt(1-abp) eps
    double k_x = std::sqrt(abp) / std::sqrt(ab);
    double k_e = std::sqrt(1.0 - abp) - std::sqrt(abp) * std::sqrt(1.0 - ab) / std::sqrt(ab);
    return ag::add(ag::affine(xt, k_x, 0.0), ag::affine(eps_pred, k_e, 0.0));
}

DiffusionTrajectory TrajectoryG::values() const {
    DiffusionTrajectory out;
    out.states.reserve(states.size());
    for (const auto& [t, v] : states) out.states.push_back({t, v.val()});
    return out;
}

TrajectoryG sample_g(ag::Graph& g, const AlignmentEncoder& enc, ag::Var condition,
                     ag::Var xT, const NoiseSchedule& sched) {
    const std::vector<int>& tau = sched.tau();
    TrajectoryG traj;
    ag::Var x = xT;
    traj.states.emplace_back(tau.back(), x);
    for (std::size_t i = tau.size(); i-- > 0;) {
        int t = tau[i];
        int t_prev = i == 0 ? 0 : tau[i - 1];
        ag::Var eps = enc.forward(g, x, condition, t);
        x = ddim_step_g(g, x, eps, t, t_prev, sched);
        traj.states.emplace_back(t_prev, x);
    }
    return traj;
}

ag::Var align_loss_g(ag::Graph& g, const AlignmentEncoder& enc, ag::Var x0, ag::Var nf,
                     const NoiseSchedule& sched, Rng& rng) {
    int t = rng.uniform_int(1, sched.T());
    Tensor eps = rng.normal_tensor(x0.val().shape());
    ag::Var xt = q_sample_g(g, x0, t, eps, sched);
    ag::Var pred = enc.forward(g, xt, nf, t);
    return ag::mse(g.leaf(std::move(eps)), pred);
}

double align_loss(const AlignmentEncoder& enc, const FeatureMap& x0, const FeatureMap& nf,
                  const NoiseSchedule& sched, Rng& rng) {
    ag::Graph g(/*grad_enabled=*/false);
    return align_loss_g(g, enc, g.leaf(x0), g.leaf(nf), sched, rng).val()[0];
}

namespace {

ag::Var lsq_to_label(ag::Graph& g, ag::Var score, double label) {
    ag::Var d = ag::affine(score, 1.0, -label);
    return ag::mean_all(ag::mul(d, d));
}

} // namespace

ag::Var adv_gen_loss_g(ag::Graph& g, const Discriminator& disc, const TrajectoryG& night) {
    if (night.states.empty()) throw std::invalid_argument("adv_gen_loss: empty trajectory");
    ag::Var total;
    for (const auto& [t, x] : night.states) {
        ag::Var term = lsq_to_label(g, disc.forward(g, x, t), 1.0);
        total = total.defined() ? ag::add(total, term) : term;
    }
    return total;
}

double adv_gen_loss(const Discriminator& disc, const DiffusionTrajectory& night) {
    ag::Graph g(/*grad_enabled=*/false);
    TrajectoryG traj;
    for (const auto& s : night.states) traj.states.emplace_back(s.t, g.leaf(s.x));
    return adv_gen_loss_g(g, disc, traj).val()[0];
}

ag::Var adv_disc_loss_g(ag::Graph& g, const Discriminator& disc,
                        const DiffusionTrajectory& day, const DiffusionTrajectory& night) {
    if (day.states.empty() || night.states.empty())
        throw std::invalid_argument("adv_disc_loss: empty trajectory");
    ag::Var total;
    for (const auto& s : day.states) {
        ag::Var term = lsq_to_label(g, disc.forward(g, g.leaf(s.x), s.t), 1.0);
        total = total.defined() ? ag::add(total, term) : term;
    }
    for (const auto& s : night.states) {
        ag::Var term = lsq_to_label(g, disc.forward(g, g.leaf(s.x), s.t), 0.0);
        total = ag::add(total, term);
    }
    return total;
}

double adv_disc_loss(const Discriminator& disc, const DiffusionTrajectory& day,
                     const DiffusionTrajectory& night) {
    ag::Graph g(/*grad_enabled=*/false);
    return adv_disc_loss_g(g, disc, day, night).val()[0];
}

double total_loss(double trc, double adv, double align, double lambda1, double lambda2,
                  double lambda3) {
    if (!std::isfinite(trc) || !std::isfinite(adv) || !std::isfinite(align))
        throw std::runtime_error("total_loss: non-finite component (trc=" +
                                 std::to_string(trc) + ", adv=" + std::to_string(adv) +
                                 ", align=" + std::to_string(align) + ")");
    return lambda1 * trc + lambda2 * adv + lambda3 * align;
}

} // namespace dadiff
