#include <doctest.h>

#include <cmath>

#include "dadiff/diffusion.hpp"
#include "dadiff/rng.hpp"

using namespace dadiff;

namespace {

NoiseSchedule default_sched() {
    return make_schedule(ScheduleKind::Linear, 100, 1e-4, 0.02, 5);
}

double max_rel_err(const Tensor& a, const Tensor& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a[i] - b[i]) /
                                    std::max({std::abs(a[i]), std::abs(b[i]), 1e-8}));
    return worst;
}

} // namespace

TEST_CASE("q_sample endpoints") {
    NoiseSchedule s = default_sched();
    Rng rng(1);
    FeatureMap x0 = rng.normal_tensor({4, 6, 6});
    FeatureMap zero(x0.shape());
    int t = 50;
    FeatureMap out = q_sample(x0, t, zero, s);
    double cs = std::sqrt(s.alpha_bar(t));
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(out[i] == doctest::Approx(cs * x0[i]).epsilon(1e-15));

    // t = 0 extension: identity
    FeatureMap eps = rng.normal_tensor(x0.shape());
    FeatureMap id = q_sample(x0, 0, eps, s);
    CHECK(max_abs_diff(id, x0) == 0.0);
}

TEST_CASE("q_sample Monte-Carlo moments at t = T/2") {
    NoiseSchedule s = default_sched();
    Rng rng(2);
    FeatureMap x0 = rng.normal_tensor({2, 4, 4});
    int t = 50;
    const int n = 10000;
    Tensor mean(x0.shape()), m2(x0.shape());
    for (int k = 0; k < n; ++k) {
        FeatureMap eps = rng.normal_tensor(x0.shape());
        FeatureMap xt = q_sample(x0, t, eps, s);
        for (std::size_t i = 0; i < xt.size(); ++i) {
            mean[i] += xt[i];
            m2[i] += xt[i] * xt[i];
        }
    }
    double cs = std::sqrt(s.alpha_bar(t));
    double var_expected = 1.0 - s.alpha_bar(t);
    double se = std::sqrt(var_expected / n);
    double var_acc = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
        mean[i] /= n;
        double var = m2[i] / n - mean[i] * mean[i];
        CHECK(std::abs(mean[i] - cs * x0[i]) < 3.0 * se);
        var_acc += var;
    }
    var_acc /= static_cast<double>(mean.size());
    CHECK(std::abs(var_acc - var_expected) / var_expected < 0.02);
}

TEST_CASE("predict_x0 inverts q_sample with planted noise") {
    NoiseSchedule s = default_sched();
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        FeatureMap x0 = rng.normal_tensor({3, 5, 5});
        int t = rng.uniform_int(1, s.T());
        FeatureMap eps = rng.normal_tensor(x0.shape());
        FeatureMap xt = q_sample(x0, t, eps, s);
        FeatureMap rec = predict_x0(xt, eps, t, s);
        CHECK(max_rel_err(rec, x0) < 1e-5);
    }
}

TEST_CASE("predict_x0 against a separately coded formula oracle") {
    NoiseSchedule s = default_sched();
    Rng rng(4);
    for (int trial = 0; trial < 25; ++trial) {
        FeatureMap xt = rng.normal_tensor({2, 3, 3});
        FeatureMap ep = rng.normal_tensor(xt.shape());
        int t = rng.uniform_int(1, s.T());
        FeatureMap got = predict_x0(xt, ep, t, s);
        for (std::size_t i = 0; i < xt.size(); ++i) {
            double oracle =
                (xt[i] - std::sqrt(1.0 - s.alpha_bar(t)) * ep[i]) / std::sqrt(s.alpha_bar(t));
            CHECK(std::abs(got[i] - oracle) <= 1e-12);
        }
    }
    // zero-prediction case
    FeatureMap xt = rng.normal_tensor({2, 3, 3});
    FeatureMap zero(xt.shape());
    int t = 30;
    FeatureMap got = predict_x0(xt, zero, t, s);
    for (std::size_t i = 0; i < xt.size(); ++i)
        CHECK(got[i] == doctest::Approx(xt[i] / std::sqrt(s.alpha_bar(t))).epsilon(1e-14));
}

TEST_CASE("ddim_step edge cases and chain consistency") {
    NoiseSchedule s = default_sched();
    Rng rng(5);
    FeatureMap x0 = rng.normal_tensor({3, 4, 4});
    FeatureMap eps = rng.normal_tensor(x0.shape());

    // full inversion to t_prev = 0 (alpha_bar = 1) with the true noise
    int t = 60;
    FeatureMap xt = q_sample(x0, t, eps, s);
    FeatureMap rec = ddim_step(xt, eps, t, 0, s);
    CHECK(max_rel_err(rec, x0) < 1e-5);

    // degenerate no-op: eps_pred = 0 and equal alpha_bar means xt unchanged
    NoiseSchedule flat = make_schedule(ScheduleKind::Linear, 2, 1e-12, 1e-12, 2);
    FeatureMap zero(x0.shape());
    FeatureMap same = ddim_step(xt, zero, 2, 1, flat);
    CHECK(max_rel_err(same, xt) < 1e-9);

    // multi-step chain with the true noise equals the closed-form inversion
    FeatureMap x = q_sample(x0, s.T(), eps, s);
    const auto& tau = s.tau();
    for (std::size_t i = tau.size(); i-- > 0;)
        x = ddim_step(x, eps, tau[i], i == 0 ? 0 : tau[i - 1], s);
    CHECK(max_rel_err(x, x0) < 1e-5);

    CHECK_THROWS_AS(ddim_step(xt, eps, 10, 10, s), std::invalid_argument);
    CHECK_THROWS_AS(ddim_step(xt, eps, 10, 12, s), std::invalid_argument);
}

TEST_CASE("sample() records a strictly decreasing trajectory and is deterministic") {
    NoiseSchedule s = default_sched();
    Rng rng(6);
    FeatureMap cond = rng.normal_tensor({2, 4, 4});
    FeatureMap xT = rng.normal_tensor(cond.shape());

    // planted-noise encoder: returns the true eps of xT regardless of state
    FeatureMap x0 = rng.normal_tensor(cond.shape());
    FeatureMap eps = rng.normal_tensor(cond.shape());
    FeatureMap xT_planted = q_sample(x0, s.T(), eps, s);
    EpsFn oracle = [&](const FeatureMap&, const FeatureMap&, int) { return eps; };

    DiffusionTrajectory traj = sample(oracle, cond, xT_planted, s);
    CHECK(traj.states.size() == static_cast<std::size_t>(s.S() + 1));
    CHECK(traj.states.front().t == s.T());
    CHECK(traj.states.back().t == 0);
    for (std::size_t i = 1; i < traj.states.size(); ++i) {
        CHECK(traj.states[i].t < traj.states[i - 1].t);
        CHECK(traj.states[i].x.same_shape(xT_planted));
    }
    CHECK(max_abs_diff(traj.final_x0(), x0) < 1e-4);

    // identical inputs, two invocations: identical trajectories
    DiffusionTrajectory traj2 = sample(oracle, cond, xT_planted, s);
    for (std::size_t i = 0; i < traj.states.size(); ++i)
        CHECK(max_abs_diff(traj.states[i].x, traj2.states[i].x) == 0.0);

    // S = 1: trajectory of length 2
    NoiseSchedule s1 = make_schedule(ScheduleKind::Linear, 100, 1e-4, 0.02, 1);
    DiffusionTrajectory short_traj = sample(oracle, cond, xT_planted, s1);
    CHECK(short_traj.states.size() == 2);
    FeatureMap expect = ddim_step(xT_planted, eps, 100, 0, s1);
    CHECK(max_abs_diff(short_traj.states[1].x, expect) == 0.0);
}

TEST_CASE("shape and timestep errors") {
    NoiseSchedule s = default_sched();
    FeatureMap a({2, 3, 3}), b({2, 3, 4});
    CHECK_THROWS_AS(q_sample(a, 5, b, s), std::invalid_argument);
    CHECK_THROWS_AS(q_sample(a, 101, a, s), std::out_of_range);
    CHECK_THROWS_AS(predict_x0(a, a, 0, s), std::out_of_range);
    CHECK_THROWS_AS(predict_x0(a, b, 5, s), std::invalid_argument);
}
