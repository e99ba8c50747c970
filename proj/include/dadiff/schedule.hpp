#pragma once

#include <cstddef>
#include <vector>

#include "dadiff/tensor.hpp"

namespace dadiff {

enum class ScheduleKind { Linear };

/// Diffusion timetable. alpha_bar is the cumulative signal level indexed
/// 0..T with alpha_bar[0] = 1; beta holds the per-step noise rates for
/// t = 1..T, tied to alpha_bar by beta_t = 1 - alpha_bar_t / alpha_bar_{t-1}.
/// tau is the strictly increasing respaced sampling subsequence ending at T.
class NoiseSchedule {
public:
    NoiseSchedule() = default;

    int T() const { return T_; }
    int S() const { return static_cast<int>(tau_.size()); }

    double alpha_bar(int t) const;
    double beta(int t) const; // t in [1, T]
    const std::vector<int>& tau() const { return tau_; }

    void check_timestep(int t, int lo = 1) const;

    friend NoiseSchedule make_schedule(ScheduleKind kind, int T, double beta_start,
                                       double beta_end, int S);

private:
    int T_ = 0;
    std::vector<double> alpha_bar_; // length T+1
    std::vector<double> beta_;      // length T, beta_[i] is beta_{i+1}
    std::vector<int> tau_;
};

/// Build a schedule with per-step betas interpolated linearly from
/// beta_start to beta_end, alpha_bar as the running product of (1 - beta),
/// and tau as S indices spread uniformly over {1..T} ending at T.
NoiseSchedule make_schedule(ScheduleKind kind, int T, double beta_start, double beta_end,
                            int S);

} // namespace dadiff
