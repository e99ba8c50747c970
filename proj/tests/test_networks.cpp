#include <doctest.h>

#include <cmath>

#include "dadiff/networks.hpp"
#include "dadiff/rng.hpp"
#include "test_util.hpp"

using namespace dadiff;

TEST_CASE("alignment encoder: shape contract and zero initialization") {
    Rng rng(41);
    AlignmentEncoder enc(8, rng);
    for (std::size_t hw : {4u, 8u, 16u}) {
        FeatureMap xt = rng.normal_tensor({8, hw, hw});
        FeatureMap nf = rng.normal_tensor({8, hw, hw});
        FeatureMap out = enc.eps_predict(xt, nf, 3);
        CHECK(out.shape() == xt.shape());
        CHECK(out.all_finite());
        // zero-initialized final conv: exactly zero prediction at init
        for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
    }
    FeatureMap xt = rng.normal_tensor({8, 8, 8});
    FeatureMap bad = rng.normal_tensor({8, 8, 4});
    CHECK_THROWS_AS(enc.eps_predict(xt, bad, 3), std::invalid_argument);
    CHECK_THROWS_AS(enc.eps_predict(xt, xt, 0), std::out_of_range);
}

TEST_CASE("alignment encoder: condition invariance with zeroed condition weights") {
    Rng rng(43);
    AlignmentEncoder enc(8, rng);
    // give the output head non-zero weights so the test is not vacuous
    for (auto& [name, p] : enc.named_params())
        if (name == "encoder.out_conv.w") p->value = rng.normal_tensor(p->value.shape(), 0.05);
    FeatureMap xt = rng.normal_tensor({8, 8, 8});
    FeatureMap nf1 = rng.normal_tensor({8, 8, 8});
    FeatureMap nf2 = rng.normal_tensor({8, 8, 8});
    CHECK(max_abs_diff(enc.eps_predict(xt, nf1, 5), enc.eps_predict(xt, nf2, 5)) > 1e-6);
    enc.zero_condition_weights();
    CHECK(max_abs_diff(enc.eps_predict(xt, nf1, 5), enc.eps_predict(xt, nf2, 5)) == 0.0);
}

TEST_CASE("alignment encoder: gradients match finite differences") {
    Rng rng(47);
    AlignmentEncoder enc(8, rng);
    // non-zero output head so every block sees gradient
    for (auto& [name, p] : enc.named_params())
        if (name == "encoder.out_conv.w") p->value = rng.normal_tensor(p->value.shape(), 0.1);
    FeatureMap xt = rng.normal_tensor({8, 4, 4});
    FeatureMap nf = rng.normal_tensor({8, 4, 4});
    auto loss = [&](bool back) {
        ag::Graph g;
        ag::Var y = enc.forward(g, g.leaf(xt), g.leaf(nf), 7);
        ag::Var l = ag::mean_all(ag::mul(y, y));
        double v = l.val()[0];
        if (back) g.backward(l);
        return v;
    };
    auto res = testutil::grad_check(enc.named_params(), [&] { return loss(true); },
                                    [&] { return loss(false); }, 4, 1e-4);
    CHECK(res.max_rel_err < 1e-3);
}

TEST_CASE("tracking-oriented layer: gamma1 = 0 makes the gate branch inert") {
    Rng rng(53);
    for (std::size_t hw : {4u, 8u, 16u}) {
        TrackingOrientedLayer tol(8, 2, hw, hw, rng);
        FeatureMap x = rng.normal_tensor({8, hw, hw});
        FeatureMap out = tol.forward_nograd(x);
        CHECK(out.shape() == x.shape());
        CHECK(out.all_finite());

        CHECK(tol.gamma1.value[0] == 0.0); // warm-start contract
        auto [xc, xd] = tol.attention_and_gate_tokens(x);
        CHECK(xc.same_shape(xd));
        for (std::size_t i = 0; i < xc.size(); ++i) CHECK(xc[i] == xd[i]); // bitwise

        // ...and once gamma1 moves the gate branch must act
        tol.gamma1.value[0] = 0.5;
        auto [xc2, xd2] = tol.attention_and_gate_tokens(x);
        CHECK(max_abs_diff(xc2, xd2) > 1e-9);
    }
}

TEST_CASE("tracking-oriented layer: gradients (including gamma1) match finite differences") {
    Rng rng(59);
    TrackingOrientedLayer tol(8, 2, 4, 4, rng);
    tol.gamma1.value[0] = 0.37; // exercise the gate branch
    FeatureMap x = rng.normal_tensor({8, 4, 4});
    auto loss = [&](bool back) {
        ag::Graph g;
        ag::Var y = tol.forward(g, g.leaf(x));
        ag::Var l = ag::mean_all(ag::mul(y, y));
        double v = l.val()[0];
        if (back) g.backward(l);
        return v;
    };
    auto res = testutil::grad_check(tol.named_params(), [&] { return loss(true); },
                                    [&] { return loss(false); }, 5, 1e-4);
    CHECK(res.max_rel_err < 1e-3);

    FeatureMap wrong = rng.normal_tensor({8, 8, 8});
    CHECK_THROWS_AS(tol.forward_nograd(wrong), std::invalid_argument);
}

TEST_CASE("discriminator: deterministic scores, documented size, gradients") {
    Rng rng(61);
    Discriminator disc(8, rng);
    for (std::size_t hw : {4u, 8u, 16u}) {
        FeatureMap x = rng.normal_tensor({8, hw, hw});
        Tensor s1 = disc.score(x);
        Tensor s2 = disc.score(x);
        CHECK(max_abs_diff(s1, s2) == 0.0);
        CHECK(s1.all_finite());
        // four stride-2 blocks: ceil(h/2) applied four times
        std::size_t expect = hw;
        for (int i = 0; i < 4; ++i) expect = (expect + 1) / 2;
        CHECK(s1.dim(0) == 1);
        CHECK(s1.dim(1) == expect);
        CHECK(s1.dim(2) == expect);
    }
    FeatureMap x = rng.normal_tensor({8, 8, 8});
    auto loss = [&](bool back) {
        ag::Graph g;
        ag::Var y = disc.forward(g, g.leaf(x));
        ag::Var l = ag::mean_all(ag::mul(y, y));
        double v = l.val()[0];
        if (back) g.backward(l);
        return v;
    };
    auto res = testutil::grad_check(disc.named_params(), [&] { return loss(true); },
                                    [&] { return loss(false); }, 5, 1e-4);
    CHECK(res.max_rel_err < 1e-3);
}

TEST_CASE("timestep embedding is finite with sin/cos halves") {
    Tensor e = nn::timestep_embedding(17, 64);
    CHECK(e.size() == 64);
    CHECK(e.all_finite());
    CHECK(e[0] == doctest::Approx(std::sin(17.0)));
    CHECK(e[32] == doctest::Approx(std::cos(17.0)));
}
