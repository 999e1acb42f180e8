#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gbmseg/kernels.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gbmseg;
using testutil::max_abs_diff;
using testutil::max_rel_diff;
using testutil::random_grid;

namespace {

Shape random_conv_shape(RngState& rng, std::int64_t& ci, std::int64_t& co) {
    ci = 1 + static_cast<std::int64_t>(rng.below(3));
    co = 1 + static_cast<std::int64_t>(rng.below(3));
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng.below(2));
    const std::int64_t d = 1 + static_cast<std::int64_t>(rng.below(5));
    const std::int64_t h = 1 + static_cast<std::int64_t>(rng.below(5));
    const std::int64_t w = 1 + static_cast<std::int64_t>(rng.below(6));
    return {n, ci, d, h, w};
}

} // namespace

TEST_CASE("conv3d forward matches the gather oracle on random cases") {
    RngState rng(101);
    for (int rep = 0; rep < 60; ++rep) {
        std::int64_t ci = 0, co = 0;
        const Shape is = random_conv_shape(rng, ci, co);
        const int ksize = rep % 4 == 0 ? 1 : 3;
        auto in = random_grid<float>(is, rng);
        auto w = random_grid<float>({co, ci, ksize, ksize, ksize}, rng);
        auto b = random_grid<float>({co}, rng);
        auto expect = oracle::conv3d(in, w, b, ksize);

        TGrid<float> got(expect.shape);
        kernels::serial::conv3d_forward(in, w, b, got, ksize);
        CHECK(max_abs_diff(expect, got) <= 1e-5);

        TGrid<float> got_par(expect.shape);
        kernels::par::conv3d_forward(in, w, b, got_par, ksize);
        CHECK(max_abs_diff(got, got_par) <= 1e-6);
    }
}

TEST_CASE("transposed conv forward matches the scatter oracle on random cases") {
    RngState rng(202);
    for (int rep = 0; rep < 60; ++rep) {
        const std::int64_t ci = 1 + static_cast<std::int64_t>(rng.below(3));
        const std::int64_t co = 1 + static_cast<std::int64_t>(rng.below(3));
        const std::int64_t d = 1 + static_cast<std::int64_t>(rng.below(4));
        const std::int64_t h = 1 + static_cast<std::int64_t>(rng.below(4));
        const std::int64_t w5 = 1 + static_cast<std::int64_t>(rng.below(4));
        auto in = random_grid<float>({1, ci, d, h, w5}, rng);
        auto w = random_grid<float>({ci, co, 2, 2, 2}, rng);
        auto b = random_grid<float>({co}, rng);
        auto expect = oracle::tconv3d(in, w, b);

        TGrid<float> got(expect.shape);
        kernels::serial::tconv3d_forward(in, w, b, got);
        CHECK(max_abs_diff(expect, got) <= 1e-5);

        TGrid<float> got_par(expect.shape);
        kernels::par::tconv3d_forward(in, w, b, got_par);
        CHECK(max_abs_diff(got, got_par) <= 1e-6);
    }
}

TEST_CASE("maxpool forward matches the block-scan oracle exactly") {
    RngState rng(303);
    for (int rep = 0; rep < 60; ++rep) {
        const std::int64_t c = 1 + static_cast<std::int64_t>(rng.below(3));
        const std::int64_t d = 2 * (1 + static_cast<std::int64_t>(rng.below(3)));
        const std::int64_t h = 2 * (1 + static_cast<std::int64_t>(rng.below(3)));
        const std::int64_t w = 2 * (1 + static_cast<std::int64_t>(rng.below(3)));
        auto in = random_grid<float>({1, c, d, h, w}, rng);
        auto expect = oracle::maxpool3d(in);

        TGrid<float> got(expect.shape);
        std::vector<std::int64_t> argmax;
        kernels::serial::maxpool3d_forward(in, got, argmax);
        CHECK(testutil::bitwise_equal(expect, got));

        TGrid<float> got_par(expect.shape);
        std::vector<std::int64_t> argmax_par;
        kernels::par::maxpool3d_forward(in, got_par, argmax_par);
        CHECK(testutil::bitwise_equal(got, got_par));
        CHECK(argmax == argmax_par);
    }
}

TEST_CASE("backward kernels: serial and OpenMP agree within 1e-6") {
    RngState rng(404);
    for (int rep = 0; rep < 20; ++rep) {
        std::int64_t ci = 0, co = 0;
        const Shape is = random_conv_shape(rng, ci, co);
        auto in = random_grid<float>(is, rng);
        auto w = random_grid<float>({co, ci, 3, 3, 3}, rng);
        auto gout = random_grid<float>({is[0], co, is[2], is[3], is[4]}, rng);

        TGrid<float> gin_s(is), gin_p(is);
        kernels::serial::conv3d_backward_data(gout, w, gin_s, 3);
        kernels::par::conv3d_backward_data(gout, w, gin_p, 3);
        CHECK(max_rel_diff(gin_s, gin_p) <= 1e-6);

        TGrid<float> gw_s(w.shape), gw_p(w.shape), gb_s(Shape{co}), gb_p(Shape{co});
        kernels::serial::conv3d_backward_weights(gout, in, gw_s, gb_s, 3);
        kernels::par::conv3d_backward_weights(gout, in, gw_p, gb_p, 3);
        CHECK(max_rel_diff(gw_s, gw_p) <= 1e-6);
        CHECK(max_rel_diff(gb_s, gb_p) <= 1e-6);
    }
}

TEST_CASE("transposed conv backward: serial and OpenMP agree within 1e-6") {
    RngState rng(505);
    for (int rep = 0; rep < 20; ++rep) {
        const std::int64_t ci = 1 + static_cast<std::int64_t>(rng.below(3));
        const std::int64_t co = 1 + static_cast<std::int64_t>(rng.below(3));
        const std::int64_t d = 1 + static_cast<std::int64_t>(rng.below(3));
        auto in = random_grid<float>({1, ci, d, d, d}, rng);
        auto w = random_grid<float>({ci, co, 2, 2, 2}, rng);
        auto gout = random_grid<float>({1, co, 2 * d, 2 * d, 2 * d}, rng);

        TGrid<float> gin_s(in.shape), gin_p(in.shape);
        kernels::serial::tconv3d_backward_data(gout, w, gin_s);
        kernels::par::tconv3d_backward_data(gout, w, gin_p);
        CHECK(max_rel_diff(gin_s, gin_p) <= 1e-6);

        TGrid<float> gw_s(w.shape), gw_p(w.shape), gb_s(Shape{co}), gb_p(Shape{co});
        kernels::serial::tconv3d_backward_weights(gout, in, gw_s, gb_s);
        kernels::par::tconv3d_backward_weights(gout, in, gw_p, gb_p);
        CHECK(max_rel_diff(gw_s, gw_p) <= 1e-6);
        CHECK(max_rel_diff(gb_s, gb_p) <= 1e-6);
    }
}

TEST_CASE("batch norm kernels: stats, parity, and direct statistics") {
    RngState rng(606);
    auto in = random_grid<float>({2, 3, 4, 4, 4}, rng, -2.0, 5.0);
    std::vector<double> mean_s, var_s, mean_p, var_p;
    kernels::serial::bn_stats(in, mean_s, var_s);
    kernels::par::bn_stats(in, mean_p, var_p);
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(testutil::rel_err(mean_s[c], mean_p[c]) <= 1e-12);
        CHECK(testutil::rel_err(var_s[c], var_p[c]) <= 1e-12);
    }
    // direct two-pass statistics over channel 1
    double s = 0.0;
    std::int64_t cnt = 0;
    for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t z = 0; z < 4; ++z)
            for (std::int64_t y = 0; y < 4; ++y)
                for (std::int64_t x = 0; x < 4; ++x, ++cnt) s += in.at5(n, 1, z, y, x);
    const double mu = s / static_cast<double>(cnt);
    double sq = 0.0;
    for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t z = 0; z < 4; ++z)
            for (std::int64_t y = 0; y < 4; ++y)
                for (std::int64_t x = 0; x < 4; ++x) sq += (in.at5(n, 1, z, y, x) - mu) * (in.at5(n, 1, z, y, x) - mu);
    CHECK(testutil::rel_err(mean_s[1], mu) <= 1e-12);
    CHECK(testutil::rel_err(var_s[1], sq / static_cast<double>(cnt)) <= 1e-12);

    auto gamma = random_grid<float>({3}, rng, 0.5, 1.5);
    auto beta = random_grid<float>({3}, rng);
    TGrid<float> xh_s(in.shape), y_s(in.shape), xh_p(in.shape), y_p(in.shape);
    kernels::serial::bn_normalize(in, mean_s, var_s, gamma, beta, 1e-5, xh_s, y_s);
    kernels::par::bn_normalize(in, mean_s, var_s, gamma, beta, 1e-5, xh_p, y_p);
    CHECK(max_rel_diff(y_s, y_p) <= 1e-6);

    auto gout = random_grid<float>(in.shape, rng);
    TGrid<float> gin_s(in.shape), gin_p(in.shape), dg_s(Shape{3}), dg_p(Shape{3}), db_s(Shape{3}), db_p(Shape{3});
    kernels::serial::bn_backward_train(gout, xh_s, gamma, var_s, 1e-5, gin_s, dg_s, db_s);
    kernels::par::bn_backward_train(gout, xh_s, gamma, var_s, 1e-5, gin_p, dg_p, db_p);
    CHECK(max_rel_diff(gin_s, gin_p) <= 1e-6);
    CHECK(max_rel_diff(dg_s, dg_p) <= 1e-6);
    CHECK(max_rel_diff(db_s, db_p) <= 1e-6);
}

TEST_CASE("sigmoid and dice kernels: parity") {
    RngState rng(707);
    auto in = random_grid<float>({1, 2, 4, 4, 4}, rng, -6.0, 6.0);
    TGrid<float> y_s(in.shape), y_p(in.shape);
    kernels::serial::sigmoid_forward(in, y_s);
    kernels::par::sigmoid_forward(in, y_p);
    CHECK(max_rel_diff(y_s, y_p) <= 1e-7);

    auto pred = random_grid<float>({1, 3, 4, 4, 4}, rng, 0.01, 0.99);
    TGrid<float> target({1, 3, 4, 4, 4});
    for (auto& v : target.data) v = rng.uniform01() < 0.3 ? 1.0f : 0.0f;
    auto parts_s = kernels::serial::dice_forward(pred, target, 1e-6);
    auto parts_p = kernels::par::dice_forward(pred, target, 1e-6);
    CHECK(testutil::rel_err(parts_s.loss, parts_p.loss) <= 1e-12);

    TGrid<float> gp_s(pred.shape), gp_p(pred.shape);
    kernels::serial::dice_backward(pred, target, parts_s, 1.0, gp_s);
    kernels::par::dice_backward(pred, target, parts_p, 1.0, gp_p);
    CHECK(max_rel_diff(gp_s, gp_p) <= 1e-6);
}

TEST_CASE("adam kernel: parity and zero-grad fixpoint") {
    RngState rng(808);
    auto p_s = random_grid<float>({17}, rng);
    auto p_p = p_s;
    auto g = random_grid<float>({17}, rng);
    TGrid<float> m_s(Shape{17}), v_s(Shape{17}), m_p(Shape{17}), v_p(Shape{17});
    for (std::int64_t t = 1; t <= 5; ++t) {
        kernels::serial::adam_update(p_s, g, m_s, v_s, t, 1e-3, 0.9, 0.999, 1e-8);
        kernels::par::adam_update(p_p, g, m_p, v_p, t, 1e-3, 0.9, 0.999, 1e-8);
    }
    CHECK(max_rel_diff(p_s, p_p) <= 1e-6);

    TGrid<float> zero(Shape{17});
    auto before = p_s;
    kernels::serial::adam_update(p_s, zero, m_s, v_s, 6, 1e-3, 0.9, 0.999, 1e-8);
    // moments decay but with zero grad the update direction shrinks toward zero;
    // from a fresh state the parameters must not move at all
    TGrid<float> pf = before, mf(Shape{17}), vf(Shape{17});
    kernels::serial::adam_update(pf, zero, mf, vf, 1, 1e-3, 0.9, 0.999, 1e-8);
    CHECK(testutil::bitwise_equal(pf, before));
}

TEST_CASE("shared helpers: concat, scale, sum") {
    RngState rng(909);
    auto a = random_grid<float>({1, 2, 2, 2, 2}, rng);
    auto b = random_grid<float>({1, 3, 2, 2, 2}, rng);
    TGrid<float> out({1, 5, 2, 2, 2});
    kernels::concat_channels_forward(a, b, out);
    CHECK(out.at5(0, 0, 1, 1, 1) == a.at5(0, 0, 1, 1, 1));
    CHECK(out.at5(0, 2, 0, 1, 0) == b.at5(0, 0, 0, 1, 0));

    double s = 0.0;
    for (auto v : a.data) s += v;
    CHECK(testutil::rel_err(kernels::sum_all(a), s) <= 1e-12);

    std::vector<float> f = {0.0f, 2.0f};
    TGrid<float> scaled(a.shape);
    kernels::scale_channels(a, f, scaled);
    CHECK(scaled.at5(0, 0, 0, 0, 0) == 0.0f);
    CHECK(scaled.at5(0, 1, 0, 0, 0) == 2.0f * a.at5(0, 1, 0, 0, 0));
}
