#include <doctest.h>

#include <cmath>

#include "dadiff/rng.hpp"
#include "dadiff/tracker.hpp"
#include "test_util.hpp"

using namespace dadiff;

TEST_CASE("backbone: stride-8 shape contract and weight sharing") {
    Rng rng(71);
    SiameseBackbone bb(16, rng);
    Tensor tmpl = rng.normal_tensor({3, 64, 64});
    Tensor search = rng.normal_tensor({3, 128, 128});
    auto [ft, fs] = bb.extract_pair(tmpl, search);
    CHECK(ft.shape() == std::vector<std::size_t>{16, 8, 8});
    CHECK(fs.shape() == std::vector<std::size_t>{16, 16, 16});

    // the two branches are the same parameters: one object, two applications
    CHECK(max_abs_diff(bb.extract(tmpl), ft) == 0.0);

    // zero image still yields finite features
    CHECK(bb.extract(Tensor({3, 64, 64})).all_finite());

    CHECK_THROWS_AS(bb.extract_pair(search, search), std::invalid_argument);
}

TEST_CASE("correlation head: planted pattern peaks at the translation offset") {
    Rng rng(73);
    CorrelationHead head(4, rng);
    FeatureMap ft = rng.normal_tensor({4, 8, 8});
    for (int trial = 0; trial < 5; ++trial) {
        std::size_t dy = static_cast<std::size_t>(rng.uniform_int(0, 8));
        std::size_t dx = static_cast<std::size_t>(rng.uniform_int(0, 8));
        FeatureMap fs({4, 16, 16});
        for (std::size_t i = 0; i < fs.size(); ++i) fs[i] = 0.05 * rng.normal();
        for (std::size_t c = 0; c < 4; ++c)
            for (std::size_t y = 0; y < 8; ++y)
                for (std::size_t x = 0; x < 8; ++x)
                    fs.at3(c, dy + y, dx + x) = ft.at3(c, y, x);
        Tensor resp = head.response(ft, fs);
        CHECK(resp.shape() == std::vector<std::size_t>{9, 9});
        auto [ry, rx] = argmax_2d(resp);
        CHECK(ry == dy);
        CHECK(rx == dx);
    }

    // zero template: uniform response equal to the mixing bias
    Tensor resp0 = head.response(Tensor({4, 8, 8}), rng.normal_tensor({4, 16, 16}));
    for (std::size_t i = 1; i < resp0.size(); ++i) CHECK(resp0[i] == resp0[0]);
}

TEST_CASE("self-correlation of identical template and centered search") {
    Rng rng(79);
    SiameseBackbone bb(8, rng);
    CorrelationHead head(8, rng);
    // search whose center crop is the template scene
    Tensor search = rng.normal_tensor({3, 128, 128});
    for (std::size_t i = 0; i < search.size(); ++i)
        search[i] = 0.5 + 0.2 * std::tanh(search[i]);
    Tensor tmpl({3, 64, 64});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 64; ++y)
            for (std::size_t x = 0; x < 64; ++x)
                tmpl.at3(c, y, x) = search.at3(c, 32 + y, 32 + x);
    auto [ft, fs] = bb.extract_pair(tmpl, search);
    auto [ry, rx] = argmax_2d(head.response(ft, fs));
    CHECK(ry == 4);
    CHECK(rx == 4);
}

TEST_CASE("trc_loss oracles") {
    Rng rng(83);
    // brute-force per-cell BCE sum oracle on a random response
    Tensor resp = rng.normal_tensor({9, 9});
    double cy = 3.7, cx = 5.2;
    Tensor label = gaussian_label(9, 9, cy, cx);
    double oracle = 0.0;
    for (std::size_t i = 0; i < resp.size(); ++i) {
        double p = 1.0 / (1.0 + std::exp(-resp[i]));
        oracle += -(label[i] * std::log(p) + (1.0 - label[i]) * std::log(1.0 - p));
    }
    oracle /= static_cast<double>(resp.size());
    CHECK(std::abs(trc_loss_value(resp, cy, cx) - oracle) < 1e-9);

    // response equal to the label's logit sits at the analytic minimum
    Tensor at_min({9, 9});
    for (std::size_t i = 0; i < label.size(); ++i) {
        double y = std::clamp(label[i], 1e-12, 1.0 - 1e-12);
        at_min[i] = std::log(y / (1.0 - y));
    }
    double lmin = trc_loss_value(at_min, cy, cx);
    double entropy = 0.0;
    for (std::size_t i = 0; i < label.size(); ++i) {
        double y = std::clamp(label[i], 1e-12, 1.0 - 1e-12);
        entropy += -(y * std::log(y) + (1.0 - y) * std::log(1.0 - y));
    }
    entropy /= static_cast<double>(label.size());
    CHECK(lmin == doctest::Approx(entropy).epsilon(1e-9));
    CHECK(lmin <= trc_loss_value(resp, cy, cx));

    // uniform 0.5 prediction gives ln 2
    CHECK(trc_loss_value(Tensor({9, 9}), 4, 4) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(trc_loss_value(resp, -0.5, 4), std::invalid_argument);
    CHECK_THROWS_AS(trc_loss_value(resp, 4, 9.0), std::invalid_argument);
}

TEST_CASE("backbone and head gradients match finite differences") {
    Rng rng(89);
    SiameseBackbone bb(8, rng);
    CorrelationHead head(8, rng);
    // the backbone is fully convolutional; small crops keep the check tight
    Tensor tmpl = rng.normal_tensor({3, 32, 32}, 0.5);
    Tensor search = rng.normal_tensor({3, 64, 64}, 0.5);
    auto loss = [&](bool back) {
        ag::Graph g;
        ag::Var ft = bb.forward(g, g.leaf(tmpl));
        ag::Var fs = bb.forward(g, g.leaf(search));
        ag::Var resp = head.forward(g, ft, fs); // 5x5
        ag::Var l = trc_loss(g, resp, 2.3, 1.6);
        double v = l.val()[0];
        if (back) g.backward(l);
        return v;
    };
    nn::NamedParams params = bb.named_params();
    for (auto& p : head.named_params()) params.push_back(p);
    auto res = testutil::grad_check(params, [&] { return loss(true); },
                                    [&] { return loss(false); }, 4, 1e-4);
    CHECK(res.max_rel_err < 1e-3);
}
