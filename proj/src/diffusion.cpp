#include "dadiff/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace dadiff {

namespace {

void require_same_shape(const FeatureMap& a, const FeatureMap& b, const char* who) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(who) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

} // namespace

FeatureMap q_sample(const FeatureMap& x0, int t, const FeatureMap& eps,
                    const NoiseSchedule& sched) {
    require_same_shape(x0, eps, "q_sample");
    sched.check_timestep(t, 0); // t = 0 extension is the identity
    double ab = sched.alpha_bar(t);
    double cs = std::sqrt(ab);
    double cn = std::sqrt(1.0 - ab);
    FeatureMap out(x0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = cs * x0[i] + cn * eps[i];
    return out;
}

FeatureMap predict_x0(const FeatureMap& xt, const FeatureMap& eps_pred, int t,
                      const NoiseSchedule& sched) {
    require_same_shape(xt, eps_pred, "predict_x0");
    sched.check_timestep(t, 1);
    double ab = sched.alpha_bar(t);
    double cn = std::sqrt(1.0 - ab);
    double inv = 1.0 / std::sqrt(ab);
    FeatureMap out(xt.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (xt[i] - cn * eps_pred[i]) * inv;
    return out;
}

FeatureMap ddim_step(const FeatureMap& xt, const FeatureMap& eps_pred, int t, int t_prev,
                     const NoiseSchedule& sched) {
    if (t_prev >= t)
        throw std::invalid_argument("ddim_step: t_prev (" + std::to_string(t_prev) +
                                    ") must be strictly below t (" + std::to_string(t) + ")");
    if (t_prev < 0) throw std::out_of_range("ddim_step: t_prev must be >= 0");
    sched.check_timestep(t, 1);
    FeatureMap x0 = predict_x0(xt, eps_pred, t, sched);
    double abp = sched.alpha_bar(t_prev);
    double cs = std::sqrt(abp);
    double cn = std::sqrt(1.0 - abp);
    FeatureMap out(xt.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = cs * x0[i] + cn * eps_pred[i];
    return out;
}

DiffusionTrajectory sample(const EpsFn& eps_predict, const FeatureMap& condition,
                           const FeatureMap& xT, const NoiseSchedule& sched) {
    const std::vector<int>& tau = sched.tau();
    DiffusionTrajectory traj;
    traj.states.reserve(tau.size() + 1);
    FeatureMap x = xT;
    traj.states.push_back({tau.back(), x});
    for (std::size_t i = tau.size(); i-- > 0;) {
        int t = tau[i];
        int t_prev = i == 0 ? 0 : tau[i - 1];
        FeatureMap eps = eps_predict(x, condition, t);
        x = ddim_step(x, eps, t, t_prev, sched);
        traj.states.push_back({t_prev, x});
    }
    return traj;
}

} // namespace dadiff
