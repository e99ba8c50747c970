#include <doctest.h>

#include <cmath>

#include "dadiff/rng.hpp"
#include "dadiff/schedule.hpp"

using namespace dadiff;

TEST_CASE("single-step schedule is the trivial product") {
    NoiseSchedule s = make_schedule(ScheduleKind::Linear, 1, 0.5, 0.5, 1);
    CHECK(s.alpha_bar(0) == 1.0);
    CHECK(s.alpha_bar(1) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s.beta(1) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s.tau() == std::vector<int>{1});
}

TEST_CASE("T=1000 cumulative product matches the independent oracle") {
    // frozen by a decimal cumulative-product script run before the build
    NoiseSchedule s = make_schedule(ScheduleKind::Linear, 1000, 1e-4, 0.02, 5);
    CHECK(s.alpha_bar(1000) ==
          doctest::Approx(4.0358297653756833e-05).epsilon(1e-12));
}

TEST_CASE("beta identity holds for every constructed schedule") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        int T = rng.uniform_int(1, 500);
        double b0 = rng.uniform(1e-5, 0.01);
        double b1 = b0 + rng.uniform(0.0, 0.05);
        int S = rng.uniform_int(1, T);
        NoiseSchedule s = make_schedule(ScheduleKind::Linear, T, b0, b1, S);
        double worst = 0.0;
        for (int t = 1; t <= T; ++t)
            worst = std::max(worst, std::abs(s.beta(t) - (1.0 - s.alpha_bar(t) /
                                                                    s.alpha_bar(t - 1))));
        CHECK(worst <= 1e-12);

        CHECK(s.alpha_bar(0) == 1.0);
        for (int t = 1; t <= T; ++t) {
            CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1)); // strictly decreasing
            CHECK(s.alpha_bar(t) > 0.0);
        }
        const auto& tau = s.tau();
        CHECK(tau.back() == T);
        CHECK(static_cast<int>(tau.size()) == S);
        for (std::size_t i = 1; i < tau.size(); ++i) CHECK(tau[i] > tau[i - 1]);
        CHECK(tau.front() >= 1);
    }
}

TEST_CASE("uniform respacing of T=100 with S=5") {
    NoiseSchedule s = make_schedule(ScheduleKind::Linear, 100, 1e-4, 0.02, 5);
    CHECK(s.tau() == std::vector<int>{20, 40, 60, 80, 100});
}

TEST_CASE("invalid ranges are rejected") {
    CHECK_THROWS_AS(make_schedule(ScheduleKind::Linear, 0, 1e-4, 0.02, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(ScheduleKind::Linear, 10, 0.0, 0.02, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(ScheduleKind::Linear, 10, 0.03, 0.02, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(ScheduleKind::Linear, 10, 1e-4, 1.0, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(ScheduleKind::Linear, 10, 1e-4, 0.02, 0),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(ScheduleKind::Linear, 10, 1e-4, 0.02, 11),
                    std::invalid_argument);
}
