#pragma once

#include <vector>

#include "dadiff/diffusion.hpp"
#include "dadiff/networks.hpp"
#include "dadiff/rng.hpp"

namespace dadiff {

/// Poly decay: base_lr * (1 - iter/max_iter)^power.
double poly_lr(double base_lr, long iter, long max_iter, double power = 0.8);

/// Graph-level forward diffusion with a fixed noise draw.
ag::Var q_sample_g(ag::Graph& g, ag::Var x0, int t, const Tensor& eps,
                   const NoiseSchedule& sched);

/// Graph-level deterministic reverse step.
ag::Var ddim_step_g(ag::Graph& g, ag::Var xt, ag::Var eps_pred, int t, int t_prev,
                    const NoiseSchedule& sched);

/// Reverse-sampling chain recorded on the tape (gradients flow through
/// every encoder call).
struct TrajectoryG {
    std::vector<std::pair<int, ag::Var>> states;

    ag::Var final_x0() const { return states.back().second; }
    DiffusionTrajectory values() const;
};

TrajectoryG sample_g(ag::Graph& g, const AlignmentEncoder& enc, ag::Var condition,
                     ag::Var xT, const NoiseSchedule& sched);

/// Denoising objective: draw t uniform from {1..T} and eps standard normal,
/// return mean squared error between eps and the conditional prediction.
ag::Var align_loss_g(ag::Graph& g, const AlignmentEncoder& enc, ag::Var x0, ag::Var nf,
                     const NoiseSchedule& sched, Rng& rng);
double align_loss(const AlignmentEncoder& enc, const FeatureMap& x0, const FeatureMap& nf,
                  const NoiseSchedule& sched, Rng& rng);

/// Generator-side adversarial term: sum over trajectory states of
/// mean((D(X_t) - 1)^2), the all-ones map being the day label. Discriminator
/// parameters must be frozen in the surrounding graph.
ag::Var adv_gen_loss_g(ag::Graph& g, const Discriminator& disc, const TrajectoryG& night);
double adv_gen_loss(const Discriminator& disc, const DiffusionTrajectory& night);

/// Discriminator objective on detached states: day labeled 1, night labeled 0.
ag::Var adv_disc_loss_g(ag::Graph& g, const Discriminator& disc,
                        const DiffusionTrajectory& day, const DiffusionTrajectory& night);
double adv_disc_loss(const Discriminator& disc, const DiffusionTrajectory& day,
                     const DiffusionTrajectory& night);

/// lambda1*trc + lambda2*adv + lambda3*align; rejects non-finite components.
double total_loss(double trc, double adv, double align, double lambda1, double lambda2,
                  double lambda3);

} // namespace dadiff
