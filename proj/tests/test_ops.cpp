#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "modnas/ops.hpp"
#include "test_util.hpp"

using namespace modnas;
using testutil::random_tensor;

TEST_CASE("conv2d: 1x1 identity kernel is a no-op") {
    std::mt19937_64 rng(1);
    auto x = random_tensor({2, 1, 4, 4}, rng, 1.0f, false);
    auto w = make_tensor({1, 1, 1, 1}, 1.0f);
    Tape tape;
    auto y = conv2d(tape, x, w, nullptr);
    CHECK(y->shape == x->shape);
    for (size_t i = 0; i < x->values.size(); ++i) CHECK(y->values[i] == x->values[i]);
}

TEST_CASE("conv2d: all-ones 3x3 on all-ones 3x3 image") {
    auto x = make_tensor({1, 1, 3, 3}, 1.0f);
    auto w = make_tensor({1, 1, 3, 3}, 1.0f);
    Tape tape;
    auto y = conv2d(tape, x, w, nullptr);
    CHECK(y->at(0, 0, 1, 1) == 9.0f);  // full support
    CHECK(y->at(0, 0, 0, 0) == 4.0f);  // corner sees a 2x2 patch
    CHECK(y->at(0, 0, 2, 2) == 4.0f);
    CHECK(y->at(0, 0, 0, 1) == 6.0f);  // edge sees a 2x3 patch
}

TEST_CASE("conv2d: stride-2 output shape from the reference table") {
    std::mt19937_64 rng(2);
    auto x = random_tensor({1, 40, 128, 128}, rng, 1.0f, false);
    auto w = random_tensor({24, 40, 3, 3}, rng, 0.1f, false);
    Tape tape;
    auto y = conv2d(tape, x, w, nullptr, 2);
    CHECK(y->shape == Shape4{1, 24, 64, 64});
}

TEST_CASE("conv2d: same padding preserves spatial shape for odd k and any dilation") {
    std::mt19937_64 rng(3);
    auto x = random_tensor({1, 2, 7, 9}, rng, 1.0f, false);
    for (int k : {1, 3, 5}) {
        for (int d : {1, 2, 3}) {
            auto w = random_tensor({3, 2, k, k}, rng, 0.3f, false);
            Tape tape;
            auto y = conv2d(tape, x, w, nullptr, 1, d);
            CHECK(y->shape == Shape4{1, 3, 7, 9});
        }
    }
}

TEST_CASE("conv2d: input validation") {
    std::mt19937_64 rng(4);
    auto x = random_tensor({1, 2, 4, 4}, rng, 1.0f, false);
    Tape tape;
    auto w_even = make_tensor({1, 2, 2, 2}, 1.0f);
    CHECK_THROWS_AS(conv2d(tape, x, w_even, nullptr), std::invalid_argument);
    auto w_chan = make_tensor({1, 3, 3, 3}, 1.0f);
    CHECK_THROWS_AS(conv2d(tape, x, w_chan, nullptr), std::invalid_argument);
    auto w = make_tensor({1, 2, 3, 3}, 1.0f);
    CHECK_THROWS_AS(conv2d(tape, x, w, nullptr, 0), std::invalid_argument);
    CHECK_THROWS_AS(conv2d(tape, x, w, nullptr, 1, 0), std::invalid_argument);
    CHECK_THROWS_AS(conv2d(tape, x, w, nullptr, 1, 1, 3), std::invalid_argument);
}

TEST_CASE("transposed conv: shapes and stride-2 upsampling") {
    std::mt19937_64 rng(5);
    auto x = random_tensor({1, 48, 64, 64}, rng, 0.2f, false);
    auto w = random_tensor({48, 40, 3, 3}, rng, 0.05f, false);
    Tape tape;
    auto y = transposed_conv2d(tape, x, w, nullptr, 2);
    CHECK(y->shape == Shape4{1, 40, 128, 128});
}

TEST_CASE("transposed conv: stride-1 1x1 identity kernel is a no-op") {
    std::mt19937_64 rng(6);
    auto x = random_tensor({1, 1, 5, 5}, rng, 1.0f, false);
    auto w = make_tensor({1, 1, 1, 1}, 1.0f);
    Tape tape;
    auto y = transposed_conv2d(tape, x, w, nullptr, 1);
    for (size_t i = 0; i < x->values.size(); ++i)
        CHECK(y->values[i] == doctest::Approx(x->values[i]).epsilon(1e-6));
}

TEST_CASE("transposed conv: impulse stamps the kernel") {
    auto x = make_tensor({1, 1, 5, 5});
    x->at(0, 0, 2, 2) = 1.0f;
    auto w = make_tensor({1, 1, 3, 3});
    for (int i = 0; i < 9; ++i) w->values[i] = static_cast<float>(i + 1);
    Tape tape;
    auto y = transposed_conv2d(tape, x, w, nullptr, 1);
    // adjoint of a correlation is a convolution: the kernel appears unflipped
    // around the impulse when read through the adjoint indexing
    float sum = 0.0f;
    for (float v : y->values) sum += v;
    CHECK(sum == doctest::Approx(45.0f));
    CHECK(y->at(0, 0, 2, 2) == doctest::Approx(5.0f));  // kernel center
}

TEST_CASE("transposed conv is the linear adjoint of conv2d") {
    std::mt19937_64 rng(7);
    for (int stride : {1, 2}) {
        auto x = random_tensor({1, 3, 6, 6}, rng, 1.0f, false);
        auto w = random_tensor({4, 3, 3, 3}, rng, 0.5f, false);
        Tape tape;
        auto cx = conv2d(tape, x, w, nullptr, stride);
        auto y = random_tensor(cx->shape, rng, 1.0f, false);
        // transposed weight layout is (C_in, C_out, k, k) = same buffer viewed
        // with the conv2d roles swapped
        auto wt = make_tensor({3, 4, 3, 3});
        for (int ci = 0; ci < 3; ++ci)
            for (int co = 0; co < 4; ++co)
                for (int i = 0; i < 9; ++i)
                    wt->values[(ci * 4 + co) * 9 + i] = w->values[(co * 3 + ci) * 9 + i];
        auto cty = transposed_conv2d(tape, y, wt, nullptr, stride);
        double lhs = 0.0, rhs = 0.0;
        for (size_t i = 0; i < cx->values.size(); ++i) lhs += double(cx->values[i]) * y->values[i];
        for (size_t i = 0; i < x->values.size(); ++i) rhs += double(x->values[i]) * cty->values[i];
        CHECK(std::fabs(lhs - rhs) / std::max({std::fabs(lhs), std::fabs(rhs), 1.0}) < 1e-4);
    }
}

TEST_CASE("interpolate: nearest upscale replicates") {
    auto x = make_tensor({1, 1, 2, 2});
    x->values = {1, 2, 3, 4};
    Tape tape;
    auto y = interpolate(tape, x, InterpMode::kNearest, true);
    std::vector<float> want = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    CHECK(y->values == want);
}

TEST_CASE("interpolate: bilinear upscale preserves constants") {
    auto x = make_tensor({1, 2, 3, 3}, 0.7f);
    Tape tape;
    auto y = interpolate(tape, x, InterpMode::kBilinear, true);
    CHECK(y->shape == Shape4{1, 2, 6, 6});
    for (float v : y->values) CHECK(v == doctest::Approx(0.7f).epsilon(1e-6));
}

TEST_CASE("interpolate: area downscale is the 2x2 mean") {
    auto x = make_tensor({1, 1, 2, 2});
    x->values = {1, 2, 3, 4};
    Tape tape;
    auto y = interpolate(tape, x, InterpMode::kArea, false);
    CHECK(y->shape == Shape4{1, 1, 1, 1});
    CHECK(y->values[0] == doctest::Approx(2.5f));
}

TEST_CASE("interpolate: odd size cannot be halved") {
    auto x = make_tensor({1, 1, 3, 3}, 1.0f);
    Tape tape;
    CHECK_THROWS_AS(interpolate(tape, x, InterpMode::kNearest, false), std::invalid_argument);
}

TEST_CASE("relu, softmax, mse basics") {
    Tape tape;
    auto x = make_vector({-1.0f, 2.0f});
    auto r = relu(tape, x);
    CHECK(r->values[0] == 0.0f);
    CHECK(r->values[1] == 2.0f);

    auto logits = make_vector({0.3f, 0.3f, 0.3f, 0.3f});
    auto p = softmax_vec(tape, logits);
    for (float v : p->values) CHECK(v == doctest::Approx(0.25f).epsilon(1e-6));

    auto a = make_vector({0.0f, 0.0f});
    auto b = make_vector({2.0f, 2.0f});
    CHECK(mse_loss(tape, a, b)->values[0] == doctest::Approx(4.0f));
    auto c = make_vector({1.0f, 1.0f, 1.0f});
    CHECK_THROWS_AS(mse_loss(tape, a, c), std::invalid_argument);
}

TEST_CASE("softmax: sums to one and is shift invariant") {
    std::mt19937_64 rng(8);
    auto logits = random_tensor({1, 7, 1, 1}, rng, 3.0f, false);
    Tape tape;
    auto p = softmax_vec(tape, logits);
    double sum = 0.0;
    for (float v : p->values) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
        sum += v;
    }
    CHECK(std::fabs(sum - 1.0) < 1e-6);
    auto shifted = make_vector(logits->values);
    for (auto& v : shifted->values) v += 5.0f;
    auto p2 = softmax_vec(tape, shifted);
    for (size_t i = 0; i < p->values.size(); ++i)
        CHECK(p2->values[i] == doctest::Approx(p->values[i]).epsilon(1e-5));
}

TEST_CASE("lerp implements the unfolding update exactly") {
    auto y = make_tensor({1, 1, 2, 2}, 2.0f);
    auto v = make_tensor({1, 1, 2, 2}, 4.0f);
    Tape tape;
    CHECK(lerp(tape, y, v, make_scalar(1.0f))->values[0] == 2.0f);   // delta=1: observation
    CHECK(lerp(tape, y, v, make_scalar(0.0f))->values[0] == 4.0f);   // delta=0: denoiser
    CHECK(lerp(tape, y, v, make_scalar(0.5f))->values[0] == 3.0f);   // hand case
}

TEST_CASE("slice and concat round trip") {
    std::mt19937_64 rng(9);
    auto a = random_tensor({1, 2, 3, 3}, rng, 1.0f, false);
    auto b = random_tensor({1, 3, 3, 3}, rng, 1.0f, false);
    Tape tape;
    auto cat = concat_channels(tape, a, b);
    CHECK(cat->shape == Shape4{1, 5, 3, 3});
    auto a2 = slice_channels(tape, cat, 0, 2);
    auto b2 = slice_channels(tape, cat, 2, 3);
    CHECK(a2->values == a->values);
    CHECK(b2->values == b->values);
    CHECK_THROWS_AS(slice_channels(tape, cat, 4, 2), std::invalid_argument);
}
