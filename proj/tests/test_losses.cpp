#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "ssvaerr/finite_diff.hpp"
#include "ssvaerr/losses.hpp"
#include "ssvaerr/rng.hpp"

using namespace ssvaerr;
using namespace ssvaerr::losses;

namespace {

// Different algebra path than the implementation: raw second moments
// instead of centered accumulation.
double ccc_oracle(const std::vector<double>& y, const std::vector<double>& h) {
    const double n = static_cast<double>(y.size());
    double sy = 0, sh = 0, syy = 0, shh = 0, syh = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sy += y[i];
        sh += h[i];
        syy += y[i] * y[i];
        shh += h[i] * h[i];
        syh += y[i] * h[i];
    }
    const double my = sy / n, mh = sh / n;
    const double vy = syy / n - my * my;
    const double vh = shh / n - mh * mh;
    const double cov = syh / n - my * mh;
    return 2.0 * cov / (vy + vh + (my - mh) * (my - mh));
}

std::vector<double> random_series(KeyedRng& rng, int n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

diff::Array random_array(std::vector<int> shape, KeyedRng& rng, double lo = -2.0, double hi = 2.0) {
    diff::Array a(std::move(shape));
    for (std::int64_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(lo, hi);
    return a;
}

diff::Array onehot_rows(KeyedRng& rng, int F, int L) {
    diff::Array h({F, L});
    for (int f = 0; f < F; ++f)
        h[static_cast<std::int64_t>(f) * L + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(L)))] = 1.0;
    return h;
}

std::vector<double> midpoints(int L) {
    std::vector<double> k(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) k[static_cast<std::size_t>(l)] = -1.0 + (l + 0.5) * (2.0 / L);
    return k;
}

} // namespace

TEST_CASE("ccc hand-computed case") {
    std::vector<double> y = {1, 2, 3, 4}, h = {2, 3, 4, 5};
    CHECK(ccc_metric(y, h) == doctest::Approx(5.0 / 7.0).epsilon(1e-12));
    CHECK(ccc_oracle(y, h) == doctest::Approx(5.0 / 7.0).epsilon(1e-9));
    Tape t;
    NodeId c = ccc_node(t, t.constant(diff::Array({4}, y)), t.constant(diff::Array({4}, h)), 0.0);
    CHECK(t.value(c)[0] == doctest::Approx(5.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("ccc of identical series is one") {
    std::vector<double> y = {0.2, -0.4, 0.9, 0.1, -0.8};
    CHECK(ccc_metric(y, y) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ccc against constant prediction is zero") {
    std::vector<double> y = {0.2, -0.4, 0.9, 0.1};
    std::vector<double> h = {0.3, 0.3, 0.3, 0.3};
    CHECK(ccc_metric(y, h) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("ccc metric rejects doubly constant input") {
    std::vector<double> y = {0.5, 0.5, 0.5};
    std::vector<double> h = {0.5, 0.5, 0.5};
    CHECK_THROWS_AS(ccc_metric(y, h), DegenerateSignal);
    // constant but with different means: denominator is the mean gap, value 0
    std::vector<double> h2 = {0.2, 0.2, 0.2};
    CHECK(ccc_metric(y, h2) == doctest::Approx(0.0));
}

TEST_CASE("ccc matches an independent formula on random data") {
    for (int trial = 0; trial < 1000; ++trial) {
        KeyedRng rng(fold_key(41, trial));
        int n = 2 + static_cast<int>(rng.below(40));
        auto y = random_series(rng, n);
        auto h = random_series(rng, n);
        double got = ccc_metric(y, h);
        double want = ccc_oracle(y, h);
        CAPTURE(trial);
        CHECK(got == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("ccc is symmetric") {
    KeyedRng rng(fold_key(41, 2000));
    for (int trial = 0; trial < 100; ++trial) {
        auto y = random_series(rng, 16);
        auto h = random_series(rng, 16);
        CHECK(ccc_metric(y, h) == doctest::Approx(ccc_metric(h, y)).epsilon(1e-12));
    }
}

TEST_CASE("constant offset on a mean-matched prediction weakens agreement") {
    KeyedRng rng(fold_key(41, 3000));
    for (int trial = 0; trial < 50; ++trial) {
        auto y = random_series(rng, 24);
        auto noise = random_series(rng, 24, -0.3, 0.3);
        double nm = 0.0;
        for (double v : noise) nm += v;
        nm /= 24.0;
        std::vector<double> h(24);
        for (int i = 0; i < 24; ++i) h[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)] + noise[static_cast<std::size_t>(i)] - nm;
        double base = std::fabs(ccc_metric(y, h));
        for (double c : {0.5, -0.7, 1.3}) {
            std::vector<double> hs = h;
            for (double& v : hs) v += c;
            CHECK(std::fabs(ccc_metric(y, hs)) <= base + 1e-12);
        }
    }
}

TEST_CASE("ccc of a scaled series follows the closed form") {
    KeyedRng rng(fold_key(41, 4000));
    for (int trial = 0; trial < 100; ++trial) {
        auto y = random_series(rng, 20, -1.0, 1.0);
        double alpha = rng.uniform(0.1, 3.0);
        std::vector<double> h(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) h[i] = alpha * y[i];
        double my = 0.0;
        for (double v : y) my += v;
        my /= static_cast<double>(y.size());
        double vy = 0.0;
        for (double v : y) vy += (v - my) * (v - my);
        vy /= static_cast<double>(y.size());
        double want = 2.0 * alpha * vy / (vy + alpha * alpha * vy + (1.0 - alpha) * (1.0 - alpha) * my * my);
        CHECK(ccc_metric(y, h) == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("ccc loss values") {
    std::vector<double> y = {1, 2, 3, 4}, h = {2, 3, 4, 5};
    Tape t;
    NodeId loss = ccc_loss_node(t, t.constant(diff::Array({4}, y)), t.constant(diff::Array({4}, h)));
    CHECK(t.value(loss)[0] == doctest::Approx(2.0 / 7.0).epsilon(1e-7));

    NodeId self_loss = ccc_loss_node(t, t.constant(diff::Array({4}, y)), t.constant(diff::Array({4}, y)));
    CHECK(std::fabs(t.value(self_loss)[0]) < 1e-7);

    double my = 2.5;
    std::vector<double> anti(4);
    for (int i = 0; i < 4; ++i) anti[static_cast<std::size_t>(i)] = -y[static_cast<std::size_t>(i)] + 2.0 * my;
    NodeId anti_loss = ccc_loss_node(t, t.constant(diff::Array({4}, y)), t.constant(diff::Array({4}, anti)));
    CHECK(t.value(anti_loss)[0] == doctest::Approx(2.0).epsilon(1e-7));
}

TEST_CASE("mse basic values") {
    Tape t;
    auto mk = [&](std::vector<double> v) { return t.constant(diff::Array({static_cast<int>(v.size())}, v)); };
    CHECK(t.value(mse_node(t, mk({0.3, -0.2}), mk({0.3, -0.2})))[0] == doctest::Approx(0.0));
    CHECK(t.value(mse_node(t, mk({0, 0}), mk({1, 1})))[0] == doctest::Approx(1.0));
    CHECK(t.value(mse_node(t, mk({0, 2}), mk({1, 1})))[0] == doctest::Approx(1.0));
}

TEST_CASE("cross-entropy reference values") {
    const int L = 20;
    Tape t;

    diff::Array uniform({1, L});
    for (int l = 0; l < L; ++l) uniform[l] = 0.7;
    diff::Array target({1, L});
    target[4] = 1.0;
    NodeId ce_u = ce_node(t, t.constant(target), t.constant(uniform));
    CHECK(t.value(ce_u)[0] == doctest::Approx(std::log(20.0)).epsilon(1e-12));

    diff::Array sharp({1, L});
    for (int l = 0; l < L; ++l) sharp[l] = l == 4 ? 50.0 : 0.0;
    NodeId ce_s = ce_node(t, t.constant(target), t.constant(sharp));
    CHECK(t.value(ce_s)[0] < 1e-9);

    diff::Array two_logits({2, L});
    diff::Array two_targets({2, L});
    two_targets[4] = 1.0;
    two_targets[L + 9] = 1.0;
    for (int l = 0; l < L; ++l) two_logits[l] = l == 4 ? 50.0 : 0.0;
    for (int l = 0; l < L; ++l) two_logits[L + l] = 1.3;
    NodeId ce_2 = ce_node(t, t.constant(two_targets), t.constant(two_logits));
    CHECK(t.value(ce_2)[0] == doctest::Approx(std::log(20.0) / 2.0).epsilon(1e-9));
}

TEST_CASE("ce validates shapes") {
    Tape t;
    diff::Array a({2, 3}), b({2, 4});
    a[0] = 1.0;
    a[3] = 1.0;
    CHECK_THROWS_AS(ce_node(t, t.constant(a), t.constant(b)), ContractError);
}

TEST_CASE("cost norm reference values") {
    const int L = 20;
    auto k = midpoints(L);

    diff::Array target({L});
    target[10] = 1.0;  // centroid 0.05
    diff::Array same = target;
    CHECK(cost_norm_value(target, same, k) == doctest::Approx(1.0));

    diff::Array far({L});
    far[0] = 1.0;  // centroid -0.95
    CHECK(cost_norm_value(target, far, k) == doctest::Approx(2.0).epsilon(1e-12));

    diff::Array uniform({L});
    for (int l = 0; l < L; ++l) uniform[l] = 1.0 / L;
    // midpoints over [-1,1] average to zero, so the uniform prediction
    // contributes nothing
    double direct = 0.0;
    for (int l = 0; l < L; ++l) direct += k[static_cast<std::size_t>(l)] * (target[l] - uniform[l]);
    CHECK(cost_norm_value(target, uniform, k) == doctest::Approx(1.0 + std::fabs(direct)).epsilon(1e-12));
    CHECK(cost_norm_value(target, uniform, k) == doctest::Approx(1.05).epsilon(1e-12));
}

TEST_CASE("ncce reference values") {
    const int L = 20;
    auto k = midpoints(L);
    Tape t;

    diff::Array target({1, L});
    target[10] = 1.0;
    diff::Array uniform({1, L});
    for (int l = 0; l < L; ++l) uniform[l] = -0.4;
    NodeId n = ncce_node(t, t.constant(target), t.constant(uniform), k, false);
    CHECK(t.value(n)[0] == doctest::Approx(1.05 * std::log(20.0)).epsilon(1e-9));

    diff::Array sharp({1, L});
    for (int l = 0; l < L; ++l) sharp[l] = l == 10 ? 60.0 : 0.0;
    NodeId p = ncce_node(t, t.constant(target), t.constant(sharp), k, false);
    CHECK(t.value(p)[0] < 1e-9);
}

TEST_CASE("ncce with uniform logits factors into mean cost norm times ce") {
    const int L = 20;
    const int F = 7;
    auto k = midpoints(L);
    KeyedRng rng(fold_key(42, 1));
    diff::Array targets = onehot_rows(rng, F, L);
    diff::Array logits({F, L});
    for (std::int64_t i = 0; i < logits.size(); ++i) logits[i] = 0.25;

    Tape t;
    NodeId n = ncce_node(t, t.constant(targets), t.constant(logits), k, false);

    // direct loop oracle
    double expect = 0.0;
    for (int f = 0; f < F; ++f) {
        double s = 0.0;
        for (int l = 0; l < L; ++l)
            s += k[static_cast<std::size_t>(l)] * (targets[static_cast<std::int64_t>(f) * L + l] - 1.0 / L);
        expect += (1.0 + std::fabs(s)) * std::log(static_cast<double>(L));
    }
    expect /= F;
    CHECK(t.value(n)[0] == doctest::Approx(expect).epsilon(1e-9));

    double mean_norm = 0.0;
    for (int f = 0; f < F; ++f) {
        double s = 0.0;
        for (int l = 0; l < L; ++l)
            s += k[static_cast<std::size_t>(l)] * (targets[static_cast<std::int64_t>(f) * L + l] - 1.0 / L);
        mean_norm += 1.0 + std::fabs(s);
    }
    mean_norm /= F;
    NodeId ce = ce_node(t, t.constant(targets), t.constant(logits));
    CHECK(t.value(n)[0] == doctest::Approx(mean_norm * t.value(ce)[0]).epsilon(1e-9));
}

TEST_CASE("ncce is non-negative and collapses to ce under unit norms") {
    const int L = 20;
    KeyedRng rng(fold_key(42, 2));
    for (int trial = 0; trial < 30; ++trial) {
        const int F = 3 + static_cast<int>(rng.below(6));
        diff::Array targets = onehot_rows(rng, F, L);
        diff::Array logits = random_array({F, L}, rng, -3.0, 3.0);
        Tape t;
        NodeId n = ncce_node(t, t.constant(targets), t.constant(logits), midpoints(L), false);
        CHECK(t.value(n)[0] >= 0.0);

        // zero centroids force every cost norm to exactly 1
        std::vector<double> zeros(L, 0.0);
        NodeId nz = ncce_node(t, t.constant(targets), t.constant(logits), zeros, false);
        NodeId ce = ce_node(t, t.constant(targets), t.constant(logits));
        CHECK(t.value(nz)[0] == doctest::Approx(t.value(ce)[0]).epsilon(1e-12));
    }
}

TEST_CASE("constant-weight ncce gradient equals weighted ce gradient with frozen norms") {
    const int L = 12, F = 5;
    auto k = midpoints(L);
    KeyedRng rng(fold_key(42, 3));
    diff::Array targets = onehot_rows(rng, F, L);
    diff::Array logits = random_array({F, L}, rng, -2.0, 2.0);

    Tape ta;
    NodeId la = ta.leaf(logits, true);
    NodeId na = ncce_node(ta, ta.constant(targets), la, k, false);
    ta.backward(na);
    diff::Array ga = ta.grad(la);

    // reference: weights precomputed outside the graph
    std::vector<double> w(F);
    {
        Tape tmp;
        NodeId p = diff::softmax_last(tmp, tmp.constant(logits));
        const diff::Array& pv = tmp.value(p);
        for (int f = 0; f < F; ++f) {
            double s = 0.0;
            for (int l = 0; l < L; ++l)
                s += k[static_cast<std::size_t>(l)] *
                     (targets[static_cast<std::int64_t>(f) * L + l] - pv[static_cast<std::int64_t>(f) * L + l]);
            w[static_cast<std::size_t>(f)] = 1.0 + std::fabs(s);
        }
    }
    Tape tb;
    NodeId lb = tb.leaf(logits, true);
    NodeId lp = diff::log_op(tb, diff::softmax_last(tb, lb), 1e-12);
    NodeId nll = diff::mul_scalar(tb, diff::sum_axis(tb, diff::mul(tb, tb.constant(targets), lp), 1), -1.0);
    NodeId weighted = diff::mul(tb, tb.constant(diff::Array({F}, w)), nll);
    NodeId nb = diff::mul_scalar(tb, diff::sum_all(tb, weighted), 1.0 / F);
    tb.backward(nb);
    diff::Array gb = tb.grad(lb);

    CHECK(ta.value(na)[0] == doctest::Approx(tb.value(nb)[0]).epsilon(1e-12));
    for (std::int64_t i = 0; i < ga.size(); ++i)
        CHECK(ga[i] == doctest::Approx(gb[i]).epsilon(1e-12));

    // and the frozen-weight reference graph itself agrees with finite differences
    auto g = diff::grad_check(
        [&](Tape& t, const std::vector<NodeId>& in) {
            NodeId lp2 = diff::log_op(t, diff::softmax_last(t, in[0]), 1e-12);
            NodeId nll2 = diff::mul_scalar(t, diff::sum_axis(t, diff::mul(t, t.constant(targets), lp2), 1), -1.0);
            NodeId w2 = diff::mul(t, t.constant(diff::Array({F}, w)), nll2);
            return diff::mul_scalar(t, diff::sum_all(t, w2), 1.0 / F);
        },
        {logits});
    CHECK(g.ok);
}

TEST_CASE("loss gradients match finite differences") {
    int trials = 0;
    for (int trial = 0; trial < 18; ++trial) {
        KeyedRng rng(fold_key(43, trial));
        const int F = 4 + static_cast<int>(rng.below(5));
        const int L = 10;

        diff::Array y({F});
        for (int i = 0; i < F; ++i) y[i] = rng.uniform(-1.0, 1.0);
        diff::Array h({F});
        for (int i = 0; i < F; ++i) h[i] = rng.uniform(-1.0, 1.0);

        auto g1 = diff::grad_check(
            [&](Tape& t, const std::vector<NodeId>& in) {
                return ccc_loss_node(t, in[0], in[1]);
            },
            {y, h});
        CAPTURE(g1.max_rel_err);
        CHECK(g1.ok);

        auto g2 = diff::grad_check(
            [&](Tape& t, const std::vector<NodeId>& in) { return mse_node(t, in[0], in[1]); },
            {y, h});
        CHECK(g2.ok);

        diff::Array targets = onehot_rows(rng, F, L);
        diff::Array logits = random_array({F, L}, rng, -2.0, 2.0);
        auto g3 = diff::grad_check(
            [&](Tape& t, const std::vector<NodeId>& in) { return ce_node(t, t.constant(targets), in[0]); },
            {logits});
        CHECK(g3.ok);

        auto g4 = diff::grad_check(
            [&](Tape& t, const std::vector<NodeId>& in) {
                return ncce_node(t, t.constant(targets), in[0], midpoints(L), true);
            },
            {logits});
        CAPTURE(g4.max_rel_err);
        CHECK(g4.ok);
        trials += 4;
    }
    CHECK(trials >= 50);
}

TEST_CASE("composite loss equals the weighted manual sum") {
    KeyedRng rng(fold_key(44, 0));
    const int F = 9, L = 20;
    labels::Discretizer d = labels::Discretizer::uniform(L, {});
    labels::AffectSeries series;
    series.valence = random_series(rng, F);
    series.arousal = random_series(rng, F);

    diff::Array reg = random_array({F, 2}, rng, -1.0, 1.0);
    diff::Array logits = random_array({F, 2, L}, rng, -2.0, 2.0);

    CompositeLossConfig cfg;
    cfg.valence = {0.5, 0.25, 0.25, 0.0};
    cfg.arousal = {0.5, 0.25, 0.25, 0.0};

    Tape t;
    PredictionBatch batch = make_batch(t, t.constant(reg), t.constant(logits), series, d);
    LossBreakdown bd = composite_loss(t, batch, cfg, d.centroids());

    double manual = 0.5 * (bd.valence_ccc + bd.arousal_ccc) +
                    0.25 * (bd.valence_mse + bd.arousal_mse) +
                    0.25 * (bd.valence_ce + bd.arousal_ce);
    CHECK(t.value(bd.total)[0] == doctest::Approx(manual).epsilon(1e-12));

    // cross-check one term against a separate graph
    Tape t2;
    std::vector<double> col_v(static_cast<std::size_t>(F));
    for (int f = 0; f < F; ++f) col_v[static_cast<std::size_t>(f)] = reg[static_cast<std::int64_t>(f) * 2];
    NodeId mse_v = mse_node(t2, t2.constant(diff::Array({F}, series.valence)),
                            t2.constant(diff::Array({F}, col_v)));
    CHECK(bd.valence_mse == doctest::Approx(t2.value(mse_v)[0]).epsilon(1e-12));
}

TEST_CASE("zero-weight terms contribute nothing") {
    KeyedRng rng(fold_key(44, 1));
    const int F = 8, L = 20;
    labels::Discretizer d = labels::Discretizer::uniform(L, {});
    labels::AffectSeries series;
    series.valence = random_series(rng, F);
    series.arousal = random_series(rng, F);
    diff::Array reg = random_array({F, 2}, rng, -1.0, 1.0);
    diff::Array logits = random_array({F, 2, L}, rng, -2.0, 2.0);

    CompositeLossConfig cfg;
    cfg.valence = {1.0, 0.0, 0.0, 0.0};
    cfg.arousal = {0.66, 0.0, 0.34, 0.0};

    Tape t;
    PredictionBatch batch = make_batch(t, t.constant(reg), t.constant(logits), series, d);
    LossBreakdown bd = composite_loss(t, batch, cfg, d.centroids());
    CHECK(bd.valence_ce == 0.0);
    CHECK(bd.valence_mse == 0.0);
    CHECK(bd.arousal_mse == 0.0);
    double manual = 1.0 * bd.valence_ccc + 0.66 * bd.arousal_ccc + 0.34 * bd.arousal_ce;
    CHECK(t.value(bd.total)[0] == doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("perfect predictions under pure ccc weight give near-zero loss") {
    KeyedRng rng(fold_key(44, 2));
    const int F = 10, L = 20;
    labels::Discretizer d = labels::Discretizer::uniform(L, {});
    labels::AffectSeries series;
    series.valence = random_series(rng, F);
    series.arousal = random_series(rng, F);
    diff::Array reg({F, 2});
    for (int f = 0; f < F; ++f) {
        reg[static_cast<std::int64_t>(f) * 2] = series.valence[static_cast<std::size_t>(f)];
        reg[static_cast<std::int64_t>(f) * 2 + 1] = series.arousal[static_cast<std::size_t>(f)];
    }
    diff::Array logits({F, 2, L});

    CompositeLossConfig cfg;
    cfg.valence.ccc = 1.0;
    cfg.arousal.ccc = 1.0;

    Tape t;
    PredictionBatch batch = make_batch(t, t.constant(reg), t.constant(logits), series, d);
    LossBreakdown bd = composite_loss(t, batch, cfg, d.centroids());
    CHECK(std::fabs(t.value(bd.total)[0]) < 1e-6);
}

TEST_CASE("composite loss is linear in each weight") {
    KeyedRng rng(fold_key(44, 3));
    const int F = 7, L = 20;
    labels::Discretizer d = labels::Discretizer::uniform(L, {});
    labels::AffectSeries series;
    series.valence = random_series(rng, F);
    series.arousal = random_series(rng, F);
    diff::Array reg = random_array({F, 2}, rng, -1.0, 1.0);
    diff::Array logits = random_array({F, 2, L}, rng, -2.0, 2.0);

    CompositeLossConfig base;
    base.valence = {0.4, 0.3, 0.2, 0.1};
    base.arousal = {0.4, 0.3, 0.2, 0.1};
    CompositeLossConfig doubled = base;
    doubled.valence.mse *= 2.0;
    doubled.arousal.mse *= 2.0;

    Tape t;
    PredictionBatch batch = make_batch(t, t.constant(reg), t.constant(logits), series, d);
    LossBreakdown a = composite_loss(t, batch, base, d.centroids());
    LossBreakdown b = composite_loss(t, batch, doubled, d.centroids());
    double mse_sum = 0.3 * (a.valence_mse + a.arousal_mse);
    CHECK(t.value(b.total)[0] - t.value(a.total)[0] == doctest::Approx(mse_sum).epsilon(1e-9));
}

TEST_CASE("composite loss gradient matches finite differences") {
    for (int trial = 0; trial < 4; ++trial) {
        KeyedRng rng(fold_key(44, 10 + trial));
        const int F = 6, L = 8;
        labels::Discretizer d = labels::Discretizer::uniform(L, {});
        labels::AffectSeries series;
        series.valence = random_series(rng, F);
        series.arousal = random_series(rng, F);
        diff::Array reg = random_array({F, 2}, rng, -0.9, 0.9);
        diff::Array logits = random_array({F, 2, L}, rng, -2.0, 2.0);

        CompositeLossConfig cfg;
        cfg.valence = {0.5, 0.25, 0.25, 0.0};
        cfg.arousal = {0.5, 0.25, 0.25, 0.0};

        auto g = diff::grad_check(
            [&](Tape& t, const std::vector<NodeId>& in) {
                PredictionBatch b = make_batch(t, in[0], in[1], series, d);
                return composite_loss(t, b, cfg, d.centroids()).total;
            },
            {reg, logits});
        CAPTURE(g.max_rel_err);
        CHECK(g.ok);

        CompositeLossConfig cfg2;
        cfg2.valence = {0.5, 0.0, 0.0, 0.5};
        cfg2.arousal = {0.5, 0.0, 0.0, 0.5};
        cfg2.grad_through_cost_norm = true;
        auto g2 = diff::grad_check(
            [&](Tape& t, const std::vector<NodeId>& in) {
                PredictionBatch b = make_batch(t, in[0], in[1], series, d);
                return composite_loss(t, b, cfg2, d.centroids()).total;
            },
            {reg, logits});
        CAPTURE(g2.max_rel_err);
        CHECK(g2.ok);
    }
}

TEST_CASE("trailing padded frames are excluded from the loss") {
    KeyedRng rng(fold_key(44, 20));
    const int F = 10, VALID = 6, L = 12;
    labels::Discretizer d = labels::Discretizer::uniform(L, {});
    labels::AffectSeries series;
    series.valence = random_series(rng, F);
    series.arousal = random_series(rng, F);
    diff::Array reg = random_array({F, 2}, rng, -1.0, 1.0);
    diff::Array logits = random_array({F, 2, L}, rng, -2.0, 2.0);

    CompositeLossConfig cfg;
    cfg.valence = {0.5, 0.25, 0.25, 0.0};
    cfg.arousal = {0.5, 0.25, 0.25, 0.0};

    Tape t;
    PredictionBatch batch = make_batch(t, t.constant(reg), t.constant(logits), series, d);
    LossBreakdown masked = composite_loss(t, batch, cfg, d.centroids(), VALID);

    // same inputs truncated up front must give the identical value
    labels::AffectSeries short_series;
    short_series.valence.assign(series.valence.begin(), series.valence.begin() + VALID);
    short_series.arousal.assign(series.arousal.begin(), series.arousal.begin() + VALID);
    diff::Array reg_s({VALID, 2}, std::vector<double>(reg.data(), reg.data() + VALID * 2));
    diff::Array logits_s({VALID, 2, L},
                         std::vector<double>(logits.data(), logits.data() + static_cast<std::int64_t>(VALID) * 2 * L));
    Tape t2;
    PredictionBatch short_batch = make_batch(t2, t2.constant(reg_s), t2.constant(logits_s), short_series, d);
    LossBreakdown direct = composite_loss(t2, short_batch, cfg, d.centroids());
    CHECK(t.value(masked.total)[0] == doctest::Approx(t2.value(direct.total)[0]).epsilon(1e-12));

    // and perturbing a padded frame must not move the loss
    diff::Array reg2 = reg;
    reg2[static_cast<std::int64_t>(VALID) * 2] += 5.0;
    reg2[static_cast<std::int64_t>(F - 1) * 2 + 1] -= 3.0;
    Tape t3;
    PredictionBatch batch2 = make_batch(t3, t3.constant(reg2), t3.constant(logits), series, d);
    LossBreakdown masked2 = composite_loss(t3, batch2, cfg, d.centroids(), VALID);
    CHECK(t.value(masked.total)[0] == doctest::Approx(t3.value(masked2.total)[0]).epsilon(1e-15));
}

TEST_CASE("combined ccc concatenates in order") {
    std::vector<double> y1 = {0.0, 1.0}, h1 = {0.0, 1.0};
    CHECK(combined_ccc({y1}, {h1}) == doctest::Approx(ccc_metric(y1, h1)).epsilon(1e-12));

    std::vector<double> y2 = {0.0, 1.0}, h2 = {5.0, 6.0};
    double combined = combined_ccc({y1, y2}, {h1, h2});
    std::vector<double> ycat = {0, 1, 0, 1}, hcat = {0, 1, 5, 6};
    CHECK(combined == doctest::Approx(ccc_oracle(ycat, hcat)).epsilon(1e-9));
    CHECK(combined < 1.0);

    double swapped = combined_ccc({y2, y1}, {h2, h1});
    std::vector<double> ycat2 = {0, 1, 0, 1}, hcat2 = {5, 6, 0, 1};
    CHECK(swapped == doctest::Approx(ccc_oracle(ycat2, hcat2)).epsilon(1e-9));

    double again = combined_ccc({y1, y2}, {h1, h2});
    CHECK(combined == again);
}

TEST_CASE("loss config text round trip and validation") {
    CompositeLossConfig cfg = parse_loss_config_text(
        "valence.ccc = 0.5\narousal.ccc=0.5\n# comment\narousal.ce=0.25\narousal.mse=0.25\n");
    CHECK(cfg.valence.ccc == 0.5);
    CHECK(cfg.valence.mse == 0.0);
    CHECK(cfg.arousal.ce == 0.25);

    std::string text = loss_config_text(cfg);
    CompositeLossConfig rt = parse_loss_config_text(text);
    CHECK(rt.valence.ccc == cfg.valence.ccc);
    CHECK(rt.arousal.ce == cfg.arousal.ce);
    CHECK(rt.arousal.mse == cfg.arousal.mse);

    CHECK_THROWS_AS(parse_loss_config_text("bogus.key=1\n"), ConfigError);
    CHECK_THROWS_AS(parse_loss_config_text("valence.ccc=-1\n"), ConfigError);
    CHECK_THROWS_AS(parse_loss_config_text(""), ConfigError);
    CHECK_THROWS_AS(parse_loss_config_text("valence.ccc=abc\n"), ConfigError);

    const std::string path = "test_loss_cfg.txt";
    {
        std::ofstream f(path, std::ios::binary);
        f << "valence.ccc=1\narousal.ccc=0.66\narousal.ce=0.34\n";
    }
    CompositeLossConfig file_cfg = read_loss_config(path);
    CHECK(file_cfg.valence.ccc == 1.0);
    CHECK(file_cfg.arousal.ccc == 0.66);
    CHECK(file_cfg.arousal.ce == 0.34);
    std::remove(path.c_str());
}

TEST_CASE("batch construction validates shapes") {
    labels::Discretizer d = labels::Discretizer::uniform(20, {});
    labels::AffectSeries series = labels::make_series({0.1, 0.2}, {0.3, 0.4});
    Tape t;
    NodeId bad_reg = t.constant(diff::Array({2, 3}));
    NodeId logits = t.constant(diff::Array({2, 2, 20}));
    CHECK_THROWS_AS(make_batch(t, bad_reg, logits, series, d), ContractError);
    NodeId reg = t.constant(diff::Array({2, 2}));
    NodeId bad_logits = t.constant(diff::Array({2, 2, 19}));
    CHECK_THROWS_AS(make_batch(t, reg, bad_logits, series, d), ContractError);
    NodeId short_logits = t.constant(diff::Array({1, 2, 20}));
    CHECK_THROWS_AS(make_batch(t, reg, short_logits, series, d), ContractError);
}
