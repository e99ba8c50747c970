#include <doctest.h>

#include <cmath>

#include "dadiff/metrics.hpp"
#include "dadiff/rng.hpp"

using namespace dadiff;

namespace {

BoundingBox random_box(Rng& rng) {
    return {rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(1, 40),
            rng.uniform(1, 40)};
}

} // namespace

TEST_CASE("iou basics and the 1/7 hand case") {
    BoundingBox a{0, 0, 2, 2}, b{1, 1, 2, 2};
    CHECK(iou(a, a) == doctest::Approx(1.0));
    CHECK(iou(a, b) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
    CHECK(iou(b, a) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
    BoundingBox far{50, 50, 2, 2};
    CHECK(iou(a, far) == 0.0);
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        BoundingBox x = random_box(rng), y = random_box(rng);
        double v = iou(x, y);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(v == doctest::Approx(iou(y, x)).epsilon(1e-12));
    }
}

TEST_CASE("cle basics and the 3-4-5 hand case") {
    BoundingBox a{0, 0, 10, 10};
    BoundingBox b{3, 4, 10, 10};
    CHECK(cle(a, b) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(cle(b, a) == doctest::Approx(5.0).epsilon(1e-12));
    BoundingBox concentric{2.5, 2.5, 5, 5}; // same center as a
    CHECK(cle(a, concentric) == 0.0);
}

TEST_CASE("success_auc against a brute-force double loop") {
    std::vector<double> ones(10, 1.0);
    CHECK(success_auc(ones) == doctest::Approx(20.0 / 21.0).epsilon(1e-12));
    std::vector<double> zeros(10, 0.0);
    CHECK(success_auc(zeros) == 0.0);
    CHECK_THROWS_AS(success_auc({}), std::invalid_argument);

    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> ious;
        int n = rng.uniform_int(1, 50);
        for (int i = 0; i < n; ++i) ious.push_back(rng.uniform());
        double oracle = 0.0;
        for (int k = 0; k <= 20; ++k) {
            int cnt = 0;
            for (double v : ious)
                if (v > k * 0.05) ++cnt;
            oracle += static_cast<double>(cnt) / n;
        }
        oracle /= 21.0;
        CHECK(std::abs(success_auc(ious) - oracle) < 1e-9);
    }
}

TEST_CASE("precision_at against a counting oracle") {
    std::vector<double> zeros(5, 0.0);
    CHECK(precision_at(zeros) == 1.0);
    std::vector<double> hundred(5, 100.0);
    CHECK(precision_at(hundred) == 0.0);
    CHECK_THROWS_AS(precision_at({}), std::invalid_argument);

    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> cles;
        int n = rng.uniform_int(1, 50);
        for (int i = 0; i < n; ++i) cles.push_back(rng.uniform(0, 50));
        int cnt = 0;
        for (double v : cles)
            if (v <= 20.0) ++cnt;
        CHECK(precision_at(cles) == doctest::Approx(static_cast<double>(cnt) / n));
    }
}

TEST_CASE("norm_precision_auc conventions and brute force") {
    std::vector<BoundingBox> gt, pred;
    for (int i = 0; i < 8; ++i) {
        gt.push_back({10.0 * i, 5.0 * i, 12, 10});
        pred.push_back(gt.back()); // perfect
    }
    CHECK(norm_precision_auc(pred, gt) == doctest::Approx(1.0)); // <= convention

    std::vector<BoundingBox> awful;
    for (int i = 0; i < 8; ++i) awful.push_back({500.0 + 10 * i, 900.0, 12, 10});
    CHECK(norm_precision_auc(awful, gt) == 0.0);

    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        int n = rng.uniform_int(1, 30);
        std::vector<BoundingBox> g, p;
        for (int i = 0; i < n; ++i) {
            g.push_back(random_box(rng));
            BoundingBox noisy = g.back();
            noisy.x += rng.uniform(-10, 10);
            noisy.y += rng.uniform(-10, 10);
            p.push_back(noisy);
        }
        double oracle = 0.0;
        for (int k = 0; k <= 20; ++k) {
            double thr = k * 0.025;
            int cnt = 0;
            for (int i = 0; i < n; ++i) {
                double e = std::hypot((p[i].cx() - g[i].cx()) / g[i].w,
                                      (p[i].cy() - g[i].cy()) / g[i].h);
                if (e <= thr) ++cnt;
            }
            oracle += static_cast<double>(cnt) / n;
        }
        oracle /= 21.0;
        CHECK(std::abs(norm_precision_auc(p, g) - oracle) < 1e-9);
    }

    std::vector<BoundingBox> bad_gt = {{0, 0, 10, 10}};
    std::vector<BoundingBox> one_pred = {{0, 0, 10, 10}};
    bad_gt[0].w = 0;
    CHECK_THROWS_AS(norm_precision_auc(one_pred, bad_gt), std::invalid_argument);
}

TEST_CASE("percent_delta reproduces the reported deltas") {
    CHECK(percent_delta(0.507, 0.538) == doctest::Approx(6.1).epsilon(1e-12));
    CHECK(percent_delta(0.640, 0.677) == doctest::Approx(5.8).epsilon(1e-12));
    CHECK(percent_delta(0.426, 0.452) == doctest::Approx(6.1).epsilon(1e-12));
    CHECK(percent_delta(0.42, 0.42) == 0.0);
    CHECK_THROWS_AS(percent_delta(0.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(percent_delta(-1.0, 0.5), std::invalid_argument);
}

TEST_CASE("discrepancy: identity, symmetry, mean shift") {
    Rng rng(5);
    std::vector<FeatureMap> a, b, shifted;
    const std::size_t C = 12;
    for (int i = 0; i < 6; ++i) {
        FeatureMap m = rng.normal_tensor({C, 4, 4});
        a.push_back(m);
        b.push_back(rng.normal_tensor({C, 4, 4}));
        FeatureMap s = m;
        for (std::size_t j = 0; j < s.size(); ++j) s[j] += 0.8; // mean shift
        shifted.push_back(std::move(s));
    }
    CHECK(discrepancy(a, a) <= 1e-8);
    CHECK(std::abs(discrepancy(a, b) - discrepancy(b, a)) <= 1e-8);
    CHECK(discrepancy(a, b) >= 0.0);
    // shift of delta on every channel adds C * delta^2 to the mean term
    // (the trace term cancels up to eigenvalue noise)
    CHECK(discrepancy(a, shifted) >= C * 0.8 * 0.8 - 1e-6);
    CHECK(discrepancy(a, shifted) == doctest::Approx(C * 0.8 * 0.8).epsilon(1e-6));

    CHECK_THROWS_AS(discrepancy({a[0]}, b), std::invalid_argument);
}

TEST_CASE("attribute_report slices match per-slice recomputation") {
    Rng rng(6);
    std::vector<SequenceResult> results;
    for (int s = 0; s < 4; ++s) {
        SequenceResult r;
        r.name = "seq" + std::to_string(s);
        for (int f = 0; f < 12; ++f) {
            BoundingBox g = random_box(rng);
            BoundingBox p = g;
            p.x += rng.uniform(-6, 6);
            p.y += rng.uniform(-6, 6);
            r.gt.push_back(g);
            r.pred.push_back(p);
        }
        results.push_back(std::move(r));
    }
    results[0].attributes = {"SV"};
    results[1].attributes = {"IV", "LAI"};
    results[2].attributes = {"IV"};
    results[3].attributes = {"WAT"}; // unknown: warn, don't fail

    MetricReport rep = attribute_report(results);
    CHECK(rep.sequence_count == 4);
    CHECK(rep.per_attribute.count("SV") == 1);
    CHECK(rep.per_attribute.count("IV") == 1);
    CHECK(rep.per_attribute.at("IV").sequence_count == 2);
    CHECK(!rep.warnings.empty());

    // single-slice case: one sequence tagged SV -> SV equals that sequence
    MetricReport sv_only = attribute_report({results[0]});
    CHECK(rep.per_attribute.at("SV").success_auc ==
          doctest::Approx(sv_only.success_auc).epsilon(1e-12));

    // disjoint slices recompute independently
    std::vector<double> ious_iv;
    std::vector<BoundingBox> p_iv, g_iv;
    std::vector<double> cles_iv;
    for (int s : {1, 2})
        for (std::size_t f = 0; f < results[s].pred.size(); ++f) {
            ious_iv.push_back(iou(results[s].pred[f], results[s].gt[f]));
            cles_iv.push_back(cle(results[s].pred[f], results[s].gt[f]));
            p_iv.push_back(results[s].pred[f]);
            g_iv.push_back(results[s].gt[f]);
        }
    CHECK(rep.per_attribute.at("IV").success_auc ==
          doctest::Approx(success_auc(ious_iv)).epsilon(1e-12));
    CHECK(rep.per_attribute.at("IV").precision_at_20 ==
          doctest::Approx(precision_at(cles_iv)).epsilon(1e-12));
    CHECK(rep.per_attribute.at("IV").norm_precision_auc ==
          doctest::Approx(norm_precision_auc(p_iv, g_iv)).epsilon(1e-12));

    // no attributes anywhere: only the overall report is populated
    for (auto& r : results) r.attributes.clear();
    MetricReport plain = attribute_report(results);
    CHECK(plain.per_attribute.empty());
    CHECK(plain.warnings.empty());

    // report serializes
    CHECK(rep.to_json().find("success_auc") != std::string::npos);
    CHECK(rep.to_table().find("overall") != std::string::npos);
}
