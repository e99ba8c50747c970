#include "dadiff/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dadiff {

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > T_)
        throw std::out_of_range("NoiseSchedule::alpha_bar: timestep " + std::to_string(t) +
                                " out of range [0," + std::to_string(T_) + "]");
    return alpha_bar_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::beta(int t) const {
    if (t < 1 || t > T_)
        throw std::out_of_range("NoiseSchedule::beta: timestep " + std::to_string(t) +
                                " out of range [1," + std::to_string(T_) + "]");
    return beta_[static_cast<std::size_t>(t - 1)];
}

void NoiseSchedule::check_timestep(int t, int lo) const {
    if (t < lo || t > T_)
        throw std::out_of_range("timestep " + std::to_string(t) + " out of range [" +
                                std::to_string(lo) + "," + std::to_string(T_) + "]");
}

NoiseSchedule make_schedule(ScheduleKind kind, int T, double beta_start, double beta_end,
                            int S) {
    (void)kind; // only linear exists
    if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw std::invalid_argument(
            "make_schedule: need 0 < beta_start <= beta_end < 1, got [" +
            std::to_string(beta_start) + "," + std::to_string(beta_end) + "]");
    if (S < 1 || S > T) throw std::invalid_argument("make_schedule: need 1 <= S <= T");

    NoiseSchedule s;
    s.T_ = T;
    s.beta_.resize(static_cast<std::size_t>(T));
    s.alpha_bar_.resize(static_cast<std::size_t>(T) + 1);
    s.alpha_bar_[0] = 1.0;
    for (int t = 1; t <= T; ++t) {
        double frac = T > 1 ? static_cast<double>(t - 1) / static_cast<double>(T - 1) : 0.0;
        double beta = beta_start + (beta_end - beta_start) * frac;
        s.beta_[static_cast<std::size_t>(t - 1)] = beta;
        s.alpha_bar_[static_cast<std::size_t>(t)] =
            s.alpha_bar_[static_cast<std::size_t>(t - 1)] * (1.0 - beta);
    }
    s.tau_.resize(static_cast<std::size_t>(S));
    for (int i = 0; i < S; ++i)
        s.tau_[static_cast<std::size_t>(i)] = static_cast<int>(
            std::llround(static_cast<double>(T) * (i + 1) / static_cast<double>(S)));
    return s;
}

} // namespace dadiff
