#include <cstring>
#include <vector>

#include "doctest.h"
#include "ssvaerr/finite_diff.hpp"
#include "ssvaerr/ops.hpp"
#include "ssvaerr/rng.hpp"

using namespace ssvaerr;
using namespace ssvaerr::diff;

namespace {

Array random_array(std::vector<int> shape, KeyedRng& rng, double lo = -2.0, double hi = 2.0) {
    Array a(std::move(shape));
    for (std::int64_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(lo, hi);
    return a;
}

// Keeps every element away from a kink at `center` so central differences stay valid.
Array random_away_from(std::vector<int> shape, KeyedRng& rng, double center, double margin) {
    Array a(std::move(shape));
    for (std::int64_t i = 0; i < a.size(); ++i) {
        double v = rng.uniform(margin, 2.0);
        a[i] = center + (rng.bernoulli(0.5) ? v : -v);
    }
    return a;
}

// Plain 7-loop convolution, no shortcuts, for cross-checking the fast path.
Array conv3d_naive(const Array& x, const Array& k, const Conv3dSpec& spec) {
    const int ci = x.dim(0), it = x.dim(1), ih = x.dim(2), iw = x.dim(3);
    const int co = k.dim(0), kt = k.dim(2), kh = k.dim(3), kw = k.dim(4);
    const int ot = (it + 2 * spec.pad[0] - kt) / spec.stride[0] + 1;
    const int oh = (ih + 2 * spec.pad[1] - kh) / spec.stride[1] + 1;
    const int ow = (iw + 2 * spec.pad[2] - kw) / spec.stride[2] + 1;
    Array out({co, ot, oh, ow});
    for (int c = 0; c < co; ++c)
        for (int t = 0; t < ot; ++t)
            for (int h = 0; h < oh; ++h)
                for (int w = 0; w < ow; ++w) {
                    double acc = 0.0;
                    for (int ic = 0; ic < ci; ++ic)
                        for (int dt = 0; dt < kt; ++dt)
                            for (int dh = 0; dh < kh; ++dh)
                                for (int dw = 0; dw < kw; ++dw) {
                                    int st = t * spec.stride[0] + dt - spec.pad[0];
                                    int sh = h * spec.stride[1] + dh - spec.pad[1];
                                    int sw = w * spec.stride[2] + dw - spec.pad[2];
                                    if (st < 0 || st >= it || sh < 0 || sh >= ih ||
                                        sw < 0 || sw >= iw)
                                        continue;
                                    double xv = x[((static_cast<std::int64_t>(ic) * it + st) * ih + sh) * iw + sw];
                                    double kv = k[(((static_cast<std::int64_t>(c) * ci + ic) * kt + dt) * kh + dh) * kw + dw];
                                    acc += xv * kv;
                                }
                    out[((static_cast<std::int64_t>(c) * ot + t) * oh + h) * ow + w] = acc;
                }
    return out;
}

} // namespace

TEST_CASE("square derivative at a point") {
    Tape t;
    NodeId x = t.leaf(Array::scalar(3.0), true);
    NodeId y = square(t, x);
    t.backward(y);
    CHECK(t.value(y)[0] == doctest::Approx(9.0));
    CHECK(t.grad(x)[0] == doctest::Approx(6.0));
}

TEST_CASE("product rule at a point") {
    Tape t;
    NodeId x = t.leaf(Array::scalar(2.0), true);
    NodeId y = t.leaf(Array::scalar(5.0), true);
    NodeId z = mul(t, x, y);
    t.backward(z);
    CHECK(t.grad(x)[0] == doctest::Approx(5.0));
    CHECK(t.grad(y)[0] == doctest::Approx(2.0));
}

TEST_CASE("chained graph reuses intermediate node") {
    // f = (x*y) + (x*y)^2 at x=2, y=3: p=6, f=42, df/dp = 1+2p = 13
    Tape t;
    NodeId x = t.leaf(Array::scalar(2.0), true);
    NodeId y = t.leaf(Array::scalar(3.0), true);
    NodeId p = mul(t, x, y);
    NodeId f = add(t, p, square(t, p));
    t.backward(f);
    CHECK(t.value(f)[0] == doctest::Approx(42.0));
    CHECK(t.grad(x)[0] == doctest::Approx(13.0 * 3.0));
    CHECK(t.grad(y)[0] == doctest::Approx(13.0 * 2.0));
}

TEST_CASE("gradients skipped for leaves that do not require them") {
    Tape t;
    NodeId x = t.leaf(Array::scalar(2.0), true);
    NodeId c = t.leaf(Array::scalar(5.0), false);
    NodeId z = mul(t, x, c);
    t.backward(z);
    CHECK(t.grad(x)[0] == doctest::Approx(5.0));
    CHECK(t.grad(c).size() == 1);
    CHECK(t.grad(c)[0] == 0.0);
}

TEST_CASE("backward requires a scalar loss") {
    Tape t;
    NodeId x = t.leaf(Array({2}, {1.0, 2.0}), true);
    NodeId y = mul_scalar(t, x, 2.0);
    CHECK_THROWS_AS(t.backward(y), ContractError);
}

TEST_CASE("softmax rows sum to one and match direct formula") {
    KeyedRng rng(fold_key(11, 0));
    Array x = random_array({4, 7}, rng, -5.0, 5.0);
    Tape t;
    NodeId id = t.leaf(x, false);
    NodeId s = softmax_last(t, id);
    const Array& y = t.value(s);
    for (int r = 0; r < 4; ++r) {
        double sum = 0.0;
        for (int j = 0; j < 7; ++j) sum += y[r * 7 + j];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("softmax cross-entropy adjoint equals p minus onehot") {
    // loss = -log softmax(x)[target]; d/dx = p - onehot(target)
    const int L = 20;
    Array logits({L});
    for (int j = 0; j < L; ++j) logits[j] = 0.0;
    const int target = 3;
    Tape t;
    NodeId x = t.leaf(logits, true);
    NodeId p = softmax_last(t, x);
    NodeId lp = log_op(t, p, 1e-12);
    NodeId picked = slice(t, lp, 0, target, 1);
    NodeId loss = mul_scalar(t, sum_all(t, picked), -1.0);
    t.backward(loss);
    CHECK(t.value(loss)[0] == doctest::Approx(std::log(20.0)).epsilon(1e-12));
    Array g = t.grad(x);
    for (int j = 0; j < L; ++j) {
        double expect = 1.0 / L - (j == target ? 1.0 : 0.0);
        CHECK(g[j] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("conv3d identity kernel copies the input") {
    KeyedRng rng(fold_key(12, 0));
    Array x = random_array({1, 3, 4, 5}, rng);
    Array k({1, 1, 1, 1, 1}, {1.0});
    Tape t;
    NodeId y = conv3d(t, t.leaf(x), t.leaf(k), Conv3dSpec{});
    const Array& v = t.value(y);
    REQUIRE(v.shape() == std::vector<int>{1, 3, 4, 5});
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(v[i] == x[i]);
}

TEST_CASE("conv3d all-ones kernel sums the full window") {
    Array x = Array::full({1, 3, 3, 3}, 1.0);
    Array k = Array::full({1, 1, 3, 3, 3}, 1.0);
    Tape t;
    NodeId y = conv3d(t, t.leaf(x), t.leaf(k), Conv3dSpec{});
    const Array& v = t.value(y);
    REQUIRE(v.shape() == std::vector<int>{1, 1, 1, 1});
    CHECK(v[0] == doctest::Approx(27.0));
}

TEST_CASE("conv3d output extents follow the padded stride formula") {
    Array x({2, 8, 9, 10});
    Array k({3, 2, 5, 7, 7});
    Conv3dSpec spec;
    spec.stride = {1, 2, 2};
    spec.pad = {2, 3, 3};
    Tape t;
    NodeId y = conv3d(t, t.leaf(x), t.leaf(k), spec);
    // floor((D + 2p - k)/s) + 1 per axis
    CHECK(t.value(y).shape() == std::vector<int>{3, 8, 5, 5});
}

TEST_CASE("conv3d matches the naive seven-loop form") {
    KeyedRng rng(fold_key(13, 0));
    struct Case { std::vector<int> xs, ks; Conv3dSpec spec; };
    std::vector<Case> cases;
    cases.push_back({{2, 5, 6, 7}, {3, 2, 3, 3, 3}, {}});
    {
        Conv3dSpec s;
        s.stride = {1, 2, 2};
        s.pad = {2, 3, 3};
        cases.push_back({{2, 6, 9, 11}, {3, 2, 5, 7, 7}, s});
    }
    {
        Conv3dSpec s;
        s.stride = {2, 2, 3};
        s.pad = {1, 0, 2};
        cases.push_back({{3, 7, 8, 9}, {2, 3, 3, 4, 5}, s});
    }
    for (const auto& c : cases) {
        Array x = random_array(c.xs, rng);
        Array k = random_array(c.ks, rng);
        Array expect = conv3d_naive(x, k, c.spec);
        Tape t;
        NodeId y = conv3d(t, t.leaf(x), t.leaf(k), c.spec);
        const Array& got = t.value(y);
        REQUIRE(got.shape() == expect.shape());
        for (std::int64_t i = 0; i < got.size(); ++i)
            CHECK(std::fabs(got[i] - expect[i]) < 1e-12);
    }
}

TEST_CASE("conv2d agrees with conv3d over a singleton time axis") {
    KeyedRng rng(fold_key(14, 0));
    Array x = random_array({2, 6, 7}, rng);
    Array k = random_array({3, 2, 3, 3}, rng);
    Conv2dSpec s2;
    s2.stride = {2, 2};
    s2.pad = {1, 1};
    Tape t;
    NodeId y2 = conv2d(t, t.leaf(x), t.leaf(k), s2);

    Array x3(std::vector<int>{2, 1, 6, 7}, x.vec());
    Array k3(std::vector<int>{3, 2, 1, 3, 3}, k.vec());
    Conv3dSpec s3;
    s3.stride = {1, 2, 2};
    s3.pad = {0, 1, 1};
    NodeId y3 = conv3d(t, t.leaf(x3), t.leaf(k3), s3);
    const Array& a = t.value(y2);
    const Array& b = t.value(y3);
    REQUIRE(a.size() == b.size());
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("matmul against explicit cross-products") {
    Array a({2, 3}, {1, 2, 3, 4, 5, 6});
    Array b({3, 2}, {7, 8, 9, 10, 11, 12});
    Tape t;
    NodeId y = matmul(t, t.leaf(a), t.leaf(b));
    const Array& v = t.value(y);
    REQUIRE(v.shape() == std::vector<int>{2, 2});
    CHECK(v[0] == doctest::Approx(58.0));
    CHECK(v[1] == doctest::Approx(64.0));
    CHECK(v[2] == doctest::Approx(139.0));
    CHECK(v[3] == doctest::Approx(154.0));
}

TEST_CASE("reductions match manual sums") {
    Array a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tape t;
    NodeId id = t.leaf(a);
    CHECK(t.value(sum_all(t, id))[0] == doctest::Approx(21.0));
    CHECK(t.value(mean_all(t, id))[0] == doctest::Approx(3.5));
    const Array& s0 = t.value(sum_axis(t, id, 0));
    REQUIRE(s0.shape() == std::vector<int>{3});
    CHECK(s0[0] == doctest::Approx(5.0));
    CHECK(s0[1] == doctest::Approx(7.0));
    CHECK(s0[2] == doctest::Approx(9.0));
    const Array& m1 = t.value(mean_axis(t, id, 1));
    REQUIRE(m1.shape() == std::vector<int>{2});
    CHECK(m1[0] == doctest::Approx(2.0));
    CHECK(m1[1] == doctest::Approx(5.0));
}

TEST_CASE("concat then slice round-trips each part") {
    KeyedRng rng(fold_key(15, 0));
    Array a = random_array({2, 3}, rng);
    Array b = random_array({2, 5}, rng);
    Tape t;
    NodeId ia = t.leaf(a), ib = t.leaf(b);
    NodeId cat = concat(t, {ia, ib}, 1);
    REQUIRE(t.value(cat).shape() == std::vector<int>{2, 8});
    NodeId back_a = slice(t, cat, 1, 0, 3);
    NodeId back_b = slice(t, cat, 1, 3, 5);
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(t.value(back_a)[i] == a[i]);
    for (std::int64_t i = 0; i < b.size(); ++i) CHECK(t.value(back_b)[i] == b[i]);
}

TEST_CASE("scalar broadcast in binary ops") {
    Array a({3}, {1.0, 2.0, 3.0});
    Tape t;
    NodeId ia = t.leaf(a, true);
    NodeId s = t.leaf(Array::scalar(2.0), true);
    NodeId y = mul(t, ia, s);
    NodeId loss = sum_all(t, y);
    t.backward(loss);
    CHECK(t.value(y)[2] == doctest::Approx(6.0));
    CHECK(t.grad(s)[0] == doctest::Approx(6.0));
    CHECK(t.grad(ia)[1] == doctest::Approx(2.0));
}

TEST_CASE("mismatched shapes are rejected") {
    Tape t;
    NodeId a = t.leaf(Array({2}, {1.0, 2.0}));
    NodeId b = t.leaf(Array({3}, {1.0, 2.0, 3.0}));
    CHECK_THROWS_AS(add(t, a, b), ContractError);
    CHECK_THROWS_AS(matmul(t, a, b), ContractError);
}

TEST_CASE("gradient checks across primitives on random inputs") {
    int checked = 0;
    for (int trial = 0; trial < 6; ++trial) {
        KeyedRng rng(fold_key(99, trial));

        // elementwise binary ops
        {
            Array a = random_array({2, 3}, rng);
            Array b = random_array({2, 3}, rng, 0.5, 2.0);
            for (int which = 0; which < 4; ++which) {
                auto g = grad_check(
                    [which](Tape& t, const std::vector<NodeId>& in) {
                        NodeId y;
                        switch (which) {
                            case 0: y = add(t, in[0], in[1]); break;
                            case 1: y = sub(t, in[0], in[1]); break;
                            case 2: y = mul(t, in[0], in[1]); break;
                            default: y = div(t, in[0], in[1]); break;
                        }
                        return mean_all(t, square(t, y));
                    },
                    {a, b});
                CAPTURE(which);
                CAPTURE(g.max_rel_err);
                CHECK(g.ok);
                ++checked;
            }
        }

        // scalar-broadcast variants
        {
            Array a = random_array({4}, rng);
            Array s = random_array({1}, rng, 0.5, 1.5);
            auto g = grad_check(
                [](Tape& t, const std::vector<NodeId>& in) {
                    return mean_all(t, square(t, div(t, in[0], in[1])));
                },
                {a, s});
            CHECK(g.ok);
            ++checked;
        }

        // unary ops (relu and abs sampled away from the kink)
        {
            Array x = random_away_from({3, 4}, rng, 0.0, 0.05);
            auto smooth = [&](int which) {
                return grad_check(
                    [which](Tape& t, const std::vector<NodeId>& in) {
                        NodeId y;
                        switch (which) {
                            case 0: y = relu(t, in[0]); break;
                            case 1: y = tanh_op(t, in[0]); break;
                            case 2: y = sigmoid(t, in[0]); break;
                            case 3: y = square(t, in[0]); break;
                            case 4: y = abs_op(t, in[0]); break;
                            case 5: y = add_scalar(t, in[0], 1.7); break;
                            default: y = mul_scalar(t, in[0], -0.6); break;
                        }
                        return mean_all(t, square(t, y));
                    },
                    {x});
            };
            for (int which = 0; which < 7; ++which) {
                auto g = smooth(which);
                CAPTURE(which);
                CAPTURE(g.max_rel_err);
                CHECK(g.ok);
                ++checked;
            }
        }

        // log with clamp, inputs above the clamp floor
        {
            Array x = random_array({5}, rng, 0.1, 3.0);
            auto g = grad_check(
                [](Tape& t, const std::vector<NodeId>& in) {
                    return mean_all(t, log_op(t, in[0], 1e-12));
                },
                {x});
            CHECK(g.ok);
            ++checked;
        }

        // softmax / l2 normalize
        {
            Array x = random_array({2, 6}, rng);
            auto g1 = grad_check(
                [](Tape& t, const std::vector<NodeId>& in) {
                    NodeId p = softmax_last(t, in[0]);
                    return mean_all(t, square(t, p));
                },
                {x});
            CHECK(g1.ok);
            auto g2 = grad_check(
                [](Tape& t, const std::vector<NodeId>& in) {
                    NodeId n = l2_normalize_last(t, in[0]);
                    return mean_all(t, mul(t, n, n));
                },
                {x});
            CHECK(g2.ok);
            checked += 2;
        }

        // matmul
        {
            Array a = random_array({3, 4}, rng);
            Array b = random_array({4, 2}, rng);
            auto g = grad_check(
                [](Tape& t, const std::vector<NodeId>& in) {
                    return mean_all(t, square(t, matmul(t, in[0], in[1])));
                },
                {a, b});
            CHECK(g.ok);
            ++checked;
        }

        // conv3d with stride and padding
        {
            Array x = random_array({2, 3, 5, 5}, rng);
            Array k = random_array({2, 2, 2, 3, 3}, rng);
            auto g = grad_check(
                [](Tape& t, const std::vector<NodeId>& in) {
                    Conv3dSpec s;
                    s.stride = {1, 2, 2};
                    s.pad = {1, 1, 1};
                    return mean_all(t, square(t, conv3d(t, in[0], in[1], s)));
                },
                {x, k});
            CAPTURE(g.max_rel_err);
            CHECK(g.ok);
            ++checked;
        }

        // conv2d
        {
            Array x = random_array({2, 5, 6}, rng);
            Array k = random_array({3, 2, 3, 3}, rng);
            auto g = grad_check(
                [](Tape& t, const std::vector<NodeId>& in) {
                    Conv2dSpec s;
                    s.pad = {1, 1};
                    return mean_all(t, square(t, conv2d(t, in[0], in[1], s)));
                },
                {x, k});
            CHECK(g.ok);
            ++checked;
        }

        // reductions, reshape, concat, slice, channel_affine, add_bias
        {
            Array x = random_array({2, 3, 4}, rng);
            auto g = grad_check(
                [](Tape& t, const std::vector<NodeId>& in) {
                    NodeId s0 = sum_axis(t, in[0], 1);
                    NodeId m = mean_axis(t, s0, 0);
                    return sum_all(t, square(t, m));
                },
                {x});
            CHECK(g.ok);
            ++checked;
        }
        {
            Array a = random_array({2, 3}, rng);
            Array b = random_array({2, 2}, rng);
            auto g = grad_check(
                [](Tape& t, const std::vector<NodeId>& in) {
                    NodeId cat = concat(t, {in[0], in[1]}, 1);
                    NodeId sl = slice(t, cat, 1, 1, 3);
                    NodeId r = reshape(t, sl, {6});
                    return mean_all(t, square(t, r));
                },
                {a, b});
            CHECK(g.ok);
            ++checked;
        }
        {
            Array x = random_array({3, 4}, rng);
            Array sc = random_array({3}, rng, 0.5, 1.5);
            Array sh = random_array({3}, rng);
            auto g = grad_check(
                [](Tape& t, const std::vector<NodeId>& in) {
                    return mean_all(t, square(t, channel_affine(t, in[0], in[1], in[2])));
                },
                {x, sc, sh});
            CHECK(g.ok);
            ++checked;
        }
        {
            Array x = random_array({3, 4}, rng);
            Array b = random_array({4}, rng);
            auto g = grad_check(
                [](Tape& t, const std::vector<NodeId>& in) {
                    return mean_all(t, square(t, add_bias(t, in[0], in[1])));
                },
                {x, b});
            CHECK(g.ok);
            ++checked;
        }
    }
    CHECK(checked >= 50);
}

TEST_CASE("backward pass is bitwise repeatable") {
    KeyedRng rng(fold_key(21, 0));
    Array x = random_array({2, 4, 6, 6}, rng);
    Array k = random_array({3, 2, 2, 3, 3}, rng);
    auto run = [&](std::vector<double>& gx, std::vector<double>& gk) {
        Tape t;
        NodeId ix = t.leaf(x, true);
        NodeId ik = t.leaf(k, true);
        Conv3dSpec s;
        s.pad = {1, 1, 1};
        NodeId y = conv3d(t, ix, ik, s);
        NodeId loss = mean_all(t, square(t, tanh_op(t, y)));
        t.backward(loss);
        gx = t.grad(ix).vec();
        gk = t.grad(ik).vec();
    };
    std::vector<double> gx1, gk1, gx2, gk2;
    run(gx1, gk1);
    run(gx2, gk2);
    REQUIRE(gx1.size() == gx2.size());
    CHECK(std::memcmp(gx1.data(), gx2.data(), gx1.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(gk1.data(), gk2.data(), gk1.size() * sizeof(double)) == 0);
}
