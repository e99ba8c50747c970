#pragma once

#include <functional>
#include <vector>

#include "dadiff/schedule.hpp"
#include "dadiff/tensor.hpp"

namespace dadiff {

/// Ordered intermediate states of a reverse sampling run, from the largest
/// sampled timestep down to 0.
struct DiffusionTrajectory {
    struct State {
        int t;
        FeatureMap x;
    };
    std::vector<State> states;

    const FeatureMap& final_x0() const { return states.back().x; }
};

/// Forward diffusion: sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps.
/// t = 0 is accepted as the identity endpoint (alpha_bar[0] = 1).
FeatureMap q_sample(const FeatureMap& x0, int t, const FeatureMap& eps,
                    const NoiseSchedule& sched);

/// Invert the forward identity given a noise estimate:
/// (xt - sqrt(1 - ab_t) * eps_pred) / sqrt(ab_t).
FeatureMap predict_x0(const FeatureMap& xt, const FeatureMap& eps_pred, int t,
                      const NoiseSchedule& sched);

/// Deterministic reverse update (no injected randomness):
/// sqrt(ab_{t_prev}) * x0_hat + sqrt(1 - ab_{t_prev}) * eps_pred.
FeatureMap ddim_step(const FeatureMap& xt, const FeatureMap& eps_pred, int t, int t_prev,
                     const NoiseSchedule& sched);

/// Noise predictor signature: (xt, condition, t) -> eps estimate.
using EpsFn = std::function<FeatureMap(const FeatureMap&, const FeatureMap&, int)>;

/// Reverse sampling over the respaced subsequence tau, from T down to 0.
/// Records every intermediate state including xT and the final X_0.
DiffusionTrajectory sample(const EpsFn& eps_predict, const FeatureMap& condition,
                           const FeatureMap& xT, const NoiseSchedule& sched);

} // namespace dadiff
