#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "gbmseg/diffgrid.hpp"
#include "gbmseg/exec.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gbmseg;
using testutil::max_abs_diff;
using testutil::random_grid;
using testutil::rel_err;

namespace {

// Replays `make_root` (which must rebuild the graph over the same leaves) to
// compare autodiff grads against central finite differences, h = 1e-3, on
// sampled coordinates. Runs on the double instantiation so FD noise stays far
// below the 1e-3 gate.
template <typename MakeRoot>
void check_gradients(const std::vector<TDiffGrid<double>*>& leaves, MakeRoot make_root, int samples = 20,
                     double tol = 1e-3) {
    for (auto* leaf : leaves) leaf->zero_grad();
    TTape<double> tape;
    auto root = make_root(&tape);
    backward(tape, root);
    auto eval = [&]() {
        auto r = make_root(static_cast<TTape<double>*>(nullptr));
        return static_cast<double>(r.value()[0]);
    };
    RngState pick(424242);
    for (auto* leaf : leaves) {
        for (int s = 0; s < samples; ++s) {
            const auto idx = static_cast<std::int64_t>(pick.below(static_cast<std::uint64_t>(leaf->numel())));
            const double ad = leaf->grad()[idx];
            const double fd = oracle::finite_diff(leaf->value()[idx], eval);
            CAPTURE(idx);
            CHECK(rel_err(ad, fd, 1e-8) <= tol);
        }
    }
}

// Values spaced by 0.01 so a 1e-3 FD step can never flip a pooling argmax.
TGrid<double> well_separated(Shape shape, RngState& rng) {
    TGrid<double> g(shape);
    std::vector<double> vals(g.data.size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.01 * static_cast<double>(i);
    for (std::size_t i = vals.size(); i > 1; --i) std::swap(vals[i - 1], vals[rng.below(i)]);
    std::copy(vals.begin(), vals.end(), g.data.begin());
    return g;
}

} // namespace

TEST_CASE("conv3d: delta kernel reproduces the input") {
    RngState rng(1);
    auto in = TDiffGrid<float>(random_grid<float>({1, 1, 4, 4, 4}, rng));
    TGrid<float> w({1, 1, 3, 3, 3});
    w.at5(0, 0, 1, 1, 1) = 1.0f; // center tap
    auto out = conv3d<float>(nullptr, in, TDiffGrid<float>(w), TDiffGrid<float>(TGrid<float>({1})));
    CHECK(testutil::bitwise_equal(out.value(), in.value()));
}

TEST_CASE("conv3d: all-ones kernel counts taps under zero padding") {
    TGrid<float> in({1, 1, 4, 4, 4});
    in.fill(1.0f);
    TGrid<float> w({1, 1, 3, 3, 3});
    w.fill(1.0f);
    auto out = conv3d<float>(nullptr, TDiffGrid<float>(in), TDiffGrid<float>(w),
                             TDiffGrid<float>(TGrid<float>({1})));
    CHECK(out.value().at5(0, 0, 1, 1, 1) == 27.0f);
    CHECK(out.value().at5(0, 0, 2, 2, 2) == 27.0f);
    CHECK(out.value().at5(0, 0, 0, 0, 0) == 8.0f);
    CHECK(out.value().at5(0, 0, 3, 3, 3) == 8.0f);
}

TEST_CASE("conv3d: random case matches the loop oracle") {
    RngState rng(2);
    auto in = random_grid<float>({1, 2, 4, 4, 4}, rng);
    auto w = random_grid<float>({3, 2, 3, 3, 3}, rng);
    auto b = random_grid<float>({3}, rng);
    auto expect = oracle::conv3d(in, w, b, 3);
    auto out = conv3d<float>(nullptr, TDiffGrid<float>(in), TDiffGrid<float>(w), TDiffGrid<float>(b));
    CHECK(max_abs_diff(expect, out.value()) <= 1e-5);
}

TEST_CASE("conv3d: channel mismatch is a contract violation") {
    RngState rng(3);
    auto in = TDiffGrid<float>(random_grid<float>({1, 2, 4, 4, 4}, rng));
    auto w = TDiffGrid<float>(random_grid<float>({3, 3, 3, 3, 3}, rng));
    auto b = TDiffGrid<float>(TGrid<float>({3}));
    CHECK_THROWS_AS(conv3d<float>(nullptr, in, w, b), ContractViolation);
}

TEST_CASE("conv3d: linearity in the input (zero bias)") {
    RngState rng(4);
    auto x = random_grid<float>({1, 2, 4, 4, 4}, rng);
    auto y = random_grid<float>({1, 2, 4, 4, 4}, rng);
    auto w = TDiffGrid<float>(random_grid<float>({2, 2, 3, 3, 3}, rng));
    auto b = TDiffGrid<float>(TGrid<float>({2}));
    const float a = 0.7f, c = -1.3f;
    TGrid<float> mixed(x.shape);
    for (std::int64_t i = 0; i < mixed.numel(); ++i) mixed[i] = a * x[i] + c * y[i];
    auto out_mixed = conv3d<float>(nullptr, TDiffGrid<float>(mixed), w, b);
    auto out_x = conv3d<float>(nullptr, TDiffGrid<float>(x), w, b);
    auto out_y = conv3d<float>(nullptr, TDiffGrid<float>(y), w, b);
    double worst = 0.0;
    for (std::int64_t i = 0; i < mixed.numel(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(out_mixed.value()[i]) -
                                         (a * out_x.value()[i] + c * out_y.value()[i])));
    }
    CHECK(worst <= 1e-5);
}

TEST_CASE("conv3d: translation equivariance away from borders") {
    RngState rng(5);
    const std::int64_t D = 8;
    auto base = random_grid<float>({1, 1, D, D, D}, rng);
    TGrid<float> shifted({1, 1, D, D, D});
    for (std::int64_t z = 1; z < D; ++z)
        for (std::int64_t y = 0; y < D; ++y)
            for (std::int64_t x = 0; x < D; ++x) shifted.at5(0, 0, z, y, x) = base.at5(0, 0, z - 1, y, x);
    auto w = TDiffGrid<float>(random_grid<float>({1, 1, 3, 3, 3}, rng));
    auto b = TDiffGrid<float>(TGrid<float>({1}));
    auto out0 = conv3d<float>(nullptr, TDiffGrid<float>(base), w, b);
    auto out1 = conv3d<float>(nullptr, TDiffGrid<float>(shifted), w, b);
    for (std::int64_t z = 2; z <= D - 3; ++z)
        for (std::int64_t y = 2; y <= D - 3; ++y)
            for (std::int64_t x = 2; x <= D - 3; ++x)
                CHECK(out1.value().at5(0, 0, z, y, x) == doctest::Approx(out0.value().at5(0, 0, z - 1, y, x)).epsilon(1e-6));
}

TEST_CASE("conv3d: gradients match finite differences") {
    RngState rng(6);
    auto in = TDiffGrid<double>(random_grid<double>({1, 2, 3, 4, 4}, rng));
    auto w = TDiffGrid<double>(random_grid<double>({2, 2, 3, 3, 3}, rng));
    auto b = TDiffGrid<double>(random_grid<double>({2}, rng));
    check_gradients({&in, &w, &b}, [&](TTape<double>* t) {
        auto out = conv3d<double>(t, in, w, b);
        return sum_all(t, mul(t, out, out)); // quadratic root exercises value-dependent grads
    });
}

TEST_CASE("transposed_conv3d: single voxel scatters through an all-ones kernel") {
    TGrid<float> in({1, 1, 1, 1, 1});
    in[0] = 3.25f;
    TGrid<float> w({1, 1, 2, 2, 2});
    w.fill(1.0f);
    auto out = transposed_conv3d<float>(nullptr, TDiffGrid<float>(in), TDiffGrid<float>(w),
                                        TDiffGrid<float>(TGrid<float>({1})));
    CHECK(out.shape() == Shape{1, 1, 2, 2, 2});
    for (auto v : out.value().data) CHECK(v == 3.25f);
}

TEST_CASE("transposed_conv3d: zero input yields constant bias") {
    RngState rng(7);
    TGrid<float> in({1, 2, 3, 3, 3});
    auto w = random_grid<float>({2, 2, 2, 2, 2}, rng);
    TGrid<float> b({2});
    b[0] = -0.5f;
    b[1] = 2.0f;
    auto out = transposed_conv3d<float>(nullptr, TDiffGrid<float>(in), TDiffGrid<float>(w), TDiffGrid<float>(b));
    for (std::int64_t z = 0; z < 6; ++z) {
        CHECK(out.value().at5(0, 0, z, 0, 0) == -0.5f);
        CHECK(out.value().at5(0, 1, z, 5, 5) == 2.0f);
    }
}

TEST_CASE("transposed_conv3d: random case matches the scatter oracle") {
    RngState rng(8);
    auto in = random_grid<float>({1, 1, 2, 2, 2}, rng);
    auto w = random_grid<float>({1, 2, 2, 2, 2}, rng);
    auto b = random_grid<float>({2}, rng);
    auto expect = oracle::tconv3d(in, w, b);
    auto out = transposed_conv3d<float>(nullptr, TDiffGrid<float>(in), TDiffGrid<float>(w), TDiffGrid<float>(b));
    CHECK(max_abs_diff(expect, out.value()) <= 1e-5);
}

TEST_CASE("transposed_conv3d: gradients match finite differences") {
    RngState rng(9);
    auto in = TDiffGrid<double>(random_grid<double>({1, 2, 2, 2, 2}, rng));
    auto w = TDiffGrid<double>(random_grid<double>({2, 2, 2, 2, 2}, rng));
    auto b = TDiffGrid<double>(random_grid<double>({2}, rng));
    check_gradients({&in, &w, &b}, [&](TTape<double>* t) {
        auto out = transposed_conv3d<double>(t, in, w, b);
        return sum_all(t, mul(t, out, out));
    });
}

TEST_CASE("maxpool3d: constant volume pools to constant at half extents") {
    TGrid<float> in({1, 1, 4, 4, 4});
    in.fill(0.75f);
    auto out = maxpool3d<float>(nullptr, TDiffGrid<float>(in));
    CHECK(out.shape() == Shape{1, 1, 2, 2, 2});
    for (auto v : out.value().data) CHECK(v == 0.75f);
}

TEST_CASE("maxpool3d: block max and oracle agreement") {
    TGrid<float> in({1, 1, 2, 2, 2});
    for (std::int64_t i = 0; i < 8; ++i) in[i] = static_cast<float>(i + 1);
    auto out = maxpool3d<float>(nullptr, TDiffGrid<float>(in));
    CHECK(out.value()[0] == 8.0f);

    RngState rng(10);
    auto big = random_grid<float>({1, 1, 4, 4, 4}, rng);
    auto expect = oracle::maxpool3d(big);
    auto got = maxpool3d<float>(nullptr, TDiffGrid<float>(big));
    CHECK(testutil::bitwise_equal(expect, got.value()));
}

TEST_CASE("maxpool3d: odd extent is a contract violation") {
    TGrid<float> in({1, 1, 3, 4, 4});
    CHECK_THROWS_AS(maxpool3d<float>(nullptr, TDiffGrid<float>(in)), ContractViolation);
}

TEST_CASE("maxpool3d: gradient routes to the first maximal voxel and conserves mass") {
    TGrid<float> in({1, 1, 2, 2, 2});
    in.fill(1.0f); // full tie: first voxel in row-major order wins
    auto leaf = TDiffGrid<float>(in);
    Tape tape;
    auto out = maxpool3d(&tape, leaf);
    auto root = sum_all(&tape, out);
    backward(tape, root);
    CHECK(leaf.grad()[0] == 1.0f);
    for (std::int64_t i = 1; i < 8; ++i) CHECK(leaf.grad()[i] == 0.0f);

    RngState rng(11);
    auto big = TDiffGrid<float>(random_grid<float>({1, 2, 4, 4, 4}, rng));
    Tape tape2;
    auto pooled = maxpool3d(&tape2, big);
    auto root2 = sum_all(&tape2, pooled);
    backward(tape2, root2);
    double mass = 0.0;
    for (auto v : big.grad().data) mass += v;
    CHECK(rel_err(mass, static_cast<double>(pooled.numel())) <= 1e-6);
}

TEST_CASE("maxpool3d: gradients match finite differences") {
    RngState rng(12);
    auto in = TDiffGrid<double>(well_separated({1, 1, 4, 4, 4}, rng));
    check_gradients({&in}, [&](TTape<double>* t) {
        auto out = maxpool3d<double>(t, in);
        return sum_all(t, mul(t, out, out));
    });
}

TEST_CASE("batchnorm3d: constant channel normalizes to zero in train mode") {
    TGrid<float> in({1, 2, 4, 4, 4});
    in.fill(3.0f);
    TGrid<float> gamma({2});
    gamma.fill(1.0f);
    TGrid<float> beta({2});
    BatchNormState state(2);
    auto out = batchnorm3d<float>(nullptr, TDiffGrid<float>(in), TDiffGrid<float>(gamma), TDiffGrid<float>(beta),
                                  state, true);
    for (auto v : out.value().data) CHECK(v == 0.0f);
}

TEST_CASE("batchnorm3d: train-mode output is standardized per channel") {
    RngState rng(13);
    auto in = random_grid<float>({2, 3, 4, 4, 4}, rng, -3.0, 7.0);
    TGrid<float> gamma({3});
    gamma.fill(1.0f);
    TGrid<float> beta({3});
    BatchNormState state(3);
    auto out = batchnorm3d<float>(nullptr, TDiffGrid<float>(in), TDiffGrid<float>(gamma), TDiffGrid<float>(beta),
                                  state, true);
    const std::int64_t S = 4 * 4 * 4;
    for (std::int64_t c = 0; c < 3; ++c) {
        double s = 0.0, sq = 0.0;
        for (std::int64_t n = 0; n < 2; ++n)
            for (std::int64_t i = 0; i < S; ++i) {
                const double v = out.value()[(n * 3 + c) * S + i];
                s += v;
                sq += v * v;
            }
        const double m = s / (2 * S);
        CHECK(std::abs(m) <= 1e-5);
        CHECK(std::abs(sq / (2 * S) - m * m - 1.0) <= 1e-3);
    }
}

TEST_CASE("batchnorm3d: eval mode with unit running stats is the identity") {
    RngState rng(14);
    auto in = random_grid<float>({1, 2, 4, 4, 4}, rng);
    TGrid<float> gamma({2});
    gamma.fill(1.0f);
    TGrid<float> beta({2});
    BatchNormState state(2); // running mean 0, var 1
    auto out = batchnorm3d<float>(nullptr, TDiffGrid<float>(in), TDiffGrid<float>(gamma), TDiffGrid<float>(beta),
                                  state, false);
    CHECK(max_abs_diff(in, out.value()) <= 1e-5); // eps=1e-5 shifts the scale slightly
}

TEST_CASE("batchnorm3d: running stats follow batch stats with momentum 0.1") {
    TGrid<float> in({1, 1, 2, 2, 2});
    for (std::int64_t i = 0; i < 8; ++i) in[i] = static_cast<float>(i); // mean 3.5, biased var 5.25
    TGrid<float> gamma({1});
    gamma.fill(1.0f);
    TGrid<float> beta({1});
    BatchNormState state(1);
    (void)batchnorm3d<float>(nullptr, TDiffGrid<float>(in), TDiffGrid<float>(gamma), TDiffGrid<float>(beta), state,
                             true);
    CHECK(state.running_mean[0] == doctest::Approx(0.9f * 0.0f + 0.1f * 3.5f));
    CHECK(state.running_var[0] == doctest::Approx(0.9f * 1.0f + 0.1f * 5.25f));
}

TEST_CASE("batchnorm3d: gradients match finite differences (train and eval)") {
    RngState rng(15);
    auto in = TDiffGrid<double>(random_grid<double>({2, 2, 3, 3, 3}, rng));
    auto gamma = TDiffGrid<double>(random_grid<double>({2}, rng, 0.5, 1.5));
    auto beta = TDiffGrid<double>(random_grid<double>({2}, rng));
    // a fixed weighting grid: sum((bn(x) * r)^2) depends on x pointwise, while
    // sum(bn(x)^2) is nearly constant by construction and ill-suited to FD
    auto weight = TDiffGrid<double>(random_grid<double>(in.shape(), rng), /*requires_grad=*/false);
    TBatchNormState<double> state(2);
    check_gradients({&in, &gamma, &beta}, [&](TTape<double>* t) {
        auto out = mul(t, batchnorm3d<double>(t, in, gamma, beta, state, true), weight);
        return sum_all(t, mul(t, out, out));
    });
    TBatchNormState<double> estate(2);
    estate.running_mean.fill(0.25);
    estate.running_var.fill(1.5);
    check_gradients({&in, &gamma, &beta}, [&](TTape<double>* t) {
        auto out = mul(t, batchnorm3d<double>(t, in, gamma, beta, estate, false), weight);
        return sum_all(t, mul(t, out, out));
    });
}

TEST_CASE("sigmoid: midpoint, saturation, and finite-difference gradient") {
    TGrid<float> in({1, 1, 1, 1, 3});
    in[0] = 0.0f;
    in[1] = 20.0f;
    in[2] = -20.0f;
    auto out = sigmoid<float>(nullptr, TDiffGrid<float>(in));
    CHECK(out.value()[0] == 0.5f);
    CHECK(std::abs(out.value()[1] - 1.0f) <= 1e-8f);
    CHECK(std::abs(out.value()[2]) <= 1e-8f);

    TGrid<double> x({1});
    x[0] = 1.0;
    auto leaf = TDiffGrid<double>(x);
    TTape<double> tape;
    auto y = sigmoid(&tape, leaf);
    backward(tape, y);
    const double fd = oracle::finite_diff(leaf.value()[0], [&]() {
        auto r = sigmoid<double>(nullptr, leaf);
        return r.value()[0];
    });
    CHECK(rel_err(leaf.grad()[0], fd) <= 1e-4);
}

TEST_CASE("spatial_dropout3d: identity cases") {
    RngState rng(16);
    auto in = TDiffGrid<float>(random_grid<float>({1, 4, 3, 3, 3}, rng));
    RngState r1(5);
    auto out_eval = spatial_dropout3d<float>(nullptr, in, 0.2, r1, false);
    CHECK(testutil::bitwise_equal(out_eval.value(), in.value()));
    auto out_rate0 = spatial_dropout3d<float>(nullptr, in, 0.0, r1, true);
    CHECK(testutil::bitwise_equal(out_rate0.value(), in.value()));
    CHECK_THROWS_AS(spatial_dropout3d<float>(nullptr, in, 1.0, r1, true), ContractViolation);
}

TEST_CASE("spatial_dropout3d: zeroes whole channels and scales survivors") {
    RngState rng(17);
    auto in = TDiffGrid<float>(random_grid<float>({1, 8, 4, 4, 4}, rng, 0.5, 1.5));
    RngState dr(99);
    auto out = spatial_dropout3d<float>(nullptr, in, 0.2, dr, true);
    const std::int64_t S = 64;
    int zeroed = 0;
    for (std::int64_t c = 0; c < 8; ++c) {
        bool all_zero = true, all_scaled = true;
        for (std::int64_t i = 0; i < S; ++i) {
            const float got = out.value()[c * S + i];
            if (got != 0.0f) all_zero = false;
            if (std::abs(got - in.value()[c * S + i] * 1.25f) > 1e-6f) all_scaled = false;
        }
        CHECK((all_zero || all_scaled));
        zeroed += all_zero ? 1 : 0;
    }
    CHECK(zeroed >= 0);
}

TEST_CASE("spatial_dropout3d: seeded drop fraction over 10000 draws is 0.2 +- 0.02") {
    TGrid<float> ones({1, 8, 2, 2, 2});
    ones.fill(1.0f);
    auto in = TDiffGrid<float>(ones);
    RngState dr(2024);
    std::int64_t zero_channels = 0;
    const int draws = 10000;
    for (int rep = 0; rep < draws; ++rep) {
        auto out = spatial_dropout3d<float>(nullptr, in, 0.2, dr, true);
        for (std::int64_t c = 0; c < 8; ++c) {
            if (out.value()[c * 8] == 0.0f) ++zero_channels;
        }
    }
    const double frac = static_cast<double>(zero_channels) / (8.0 * draws);
    CHECK(frac >= 0.18);
    CHECK(frac <= 0.22);
}

TEST_CASE("concat_channels: shapes, slice round-trip, and gradient split") {
    RngState rng(18);
    auto a = TDiffGrid<float>(random_grid<float>({1, 2, 4, 4, 4}, rng));
    auto b = TDiffGrid<float>(random_grid<float>({1, 3, 4, 4, 4}, rng));
    Tape tape;
    auto cat = concat_channels(&tape, a, b);
    CHECK(cat.shape() == Shape{1, 5, 4, 4, 4});

    auto back_a = slice_channels(&tape, cat, 0, 2);
    auto back_b = slice_channels(&tape, cat, 2, 5);
    CHECK(testutil::bitwise_equal(back_a.value(), a.value()));
    CHECK(testutil::bitwise_equal(back_b.value(), b.value()));

    auto root = sum_all(&tape, cat);
    backward(tape, root);
    for (auto v : a.grad().data) CHECK(v == 1.0f);
    for (auto v : b.grad().data) CHECK(v == 1.0f);

    auto c = TDiffGrid<float>(random_grid<float>({1, 2, 2, 4, 4}, rng));
    CHECK_THROWS_AS(concat_channels<float>(nullptr, a, c), ContractViolation);
}

TEST_CASE("backward: sum and quadratic roots") {
    RngState rng(19);
    auto x = TDiffGrid<float>(random_grid<float>({1, 1, 2, 3, 4}, rng));
    {
        Tape tape;
        auto root = sum_all(&tape, x);
        backward(tape, root);
        for (auto v : x.grad().data) CHECK(v == 1.0f);
    }
    x.zero_grad();
    {
        Tape tape;
        auto root = sum_all(&tape, mul(&tape, x, x));
        backward(tape, root);
        for (std::int64_t i = 0; i < x.numel(); ++i) {
            CHECK(x.grad()[i] == doctest::Approx(2.0f * x.value()[i]));
        }
    }
}

TEST_CASE("backward: non-scalar root and tape reuse are contract violations") {
    RngState rng(20);
    auto x = TDiffGrid<float>(random_grid<float>({1, 1, 2, 2, 2}, rng));
    Tape tape;
    auto y = sigmoid(&tape, x);
    CHECK_THROWS_AS(backward(tape, y), ContractViolation);
    auto root = sum_all(&tape, y);
    backward(tape, root);
    CHECK_THROWS_AS(backward(tape, root), ContractViolation);
    tape.reset();
    auto root2 = sum_all(&tape, sigmoid(&tape, x));
    backward(tape, root2); // fine after re-recording
}

TEST_CASE("determinism: serial mode repeats bitwise") {
    const auto saved = exec::mode();
    exec::set_mode(exec::Mode::Serial);
    RngState rng(21);
    auto in = random_grid<float>({1, 2, 4, 4, 4}, rng);
    auto w = random_grid<float>({3, 2, 3, 3, 3}, rng);
    auto b = random_grid<float>({3}, rng);
    auto run = [&]() {
        auto out = conv3d<float>(nullptr, TDiffGrid<float>(in), TDiffGrid<float>(w), TDiffGrid<float>(b));
        RngState dr(7);
        auto dropped = spatial_dropout3d<float>(nullptr, out, 0.2, dr, true);
        return dropped.value();
    };
    CHECK(testutil::bitwise_equal(run(), run()));
    exec::set_mode(saved);
}
