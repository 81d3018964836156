#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "modnas/search_space.hpp"
#include "test_util.hpp"

using namespace modnas;
using testutil::random_tensor;

namespace {

SupernetConfig tiny_config(int stages = 1, int channels = 8) {
    SupernetConfig cfg;
    cfg.stages = stages;
    cfg.unet.init_channels = channels;
    return cfg;
}

}  // namespace

TEST_CASE("default candidate sets have the documented sizes") {
    CHECK(default_candidates(LayerKind::NL).candidates.size() == 7);
    CHECK(default_candidates(LayerKind::DSL).candidates.size() == 4);
    CHECK(default_candidates(LayerKind::USL).candidates.size() == 5);
    CHECK(default_candidates(LayerKind::NL).candidates[6].kind == OpKind::skip);
}

TEST_CASE("op kind names round trip") {
    for (OpKind k : {OpKind::conv, OpKind::separable_conv, OpKind::dilated_conv,
                     OpKind::residual_block, OpKind::skip, OpKind::strided_conv, OpKind::deconv,
                     OpKind::interp_nearest, OpKind::interp_bilinear, OpKind::interp_area,
                     OpKind::pixel_repeat})
        CHECK(op_kind_from_name(op_kind_name(k)) == k);
    CHECK_THROWS_AS(op_kind_from_name("nope"), std::invalid_argument);
}

TEST_CASE("candidate: skip is identity and demands matching channels") {
    std::mt19937_64 rng(1);
    ParamStore store;
    register_candidate(store, "c", {OpKind::skip, 0, 1}, 4, 4, LayerKind::NL, rng);
    Tape tape;
    auto x = random_tensor({1, 4, 8, 8}, rng, 1.0f, false);
    auto y = candidate_forward(tape, store, "c", {OpKind::skip, 0, 1}, 4, 4, LayerKind::NL, x);
    CHECK(y->values == x->values);
    CHECK_THROWS_AS(register_candidate(store, "c2", {OpKind::skip, 0, 1}, 4, 8, LayerKind::NL, rng),
                    std::invalid_argument);
}

TEST_CASE("candidate: residual block with zero conv weights is the shortcut") {
    std::mt19937_64 rng(2);
    ParamStore store;
    const OpSpec spec{OpKind::residual_block, 3, 1};
    register_candidate(store, "rb", spec, 4, 4, LayerKind::NL, rng);
    for (const auto& name : store.names_with_prefix("rb"))
        std::fill(store.get(name)->values.begin(), store.get(name)->values.end(), 0.0f);
    Tape tape;
    auto x = random_tensor({1, 4, 6, 6}, rng, 1.0f, false);
    auto y = candidate_forward(tape, store, "rb", spec, 4, 4, LayerKind::NL, x);
    CHECK(y->values == x->values);
}

TEST_CASE("candidate: channel-changing residual block uses a projection") {
    std::mt19937_64 rng(3);
    ParamStore store;
    const OpSpec spec{OpKind::residual_block, 3, 1};
    register_candidate(store, "rb", spec, 4, 6, LayerKind::NL, rng);
    CHECK(store.contains("rb.proj.w"));
    Tape tape;
    auto x = random_tensor({1, 4, 6, 6}, rng, 1.0f, false);
    auto y = candidate_forward(tape, store, "rb", spec, 4, 6, LayerKind::NL, x);
    CHECK(y->shape == Shape4{1, 6, 6, 6});
}

TEST_CASE("candidate: upsampling interpolation converts channels") {
    std::mt19937_64 rng(4);
    ParamStore store;
    const OpSpec spec{OpKind::interp_nearest, 0, 1};
    register_candidate(store, "up", spec, 40, 32, LayerKind::USL, rng);
    Tape tape;
    auto x = random_tensor({1, 40, 16, 16}, rng, 1.0f, false);
    auto y = candidate_forward(tape, store, "up", spec, 40, 32, LayerKind::USL, x);
    CHECK(y->shape == Shape4{1, 32, 32, 32});
}

TEST_CASE("candidate: samplers halve or double spatial size") {
    std::mt19937_64 rng(5);
    ParamStore store;
    auto x = random_tensor({1, 4, 8, 8}, rng, 1.0f, false);
    int i = 0;
    for (const auto& spec : default_candidates(LayerKind::DSL).candidates) {
        const std::string p = "d" + std::to_string(i++);
        register_candidate(store, p, spec, 4, 4, LayerKind::DSL, rng);
        Tape tape;
        auto y = candidate_forward(tape, store, p, spec, 4, 4, LayerKind::DSL, x);
        CHECK(y->shape == Shape4{1, 4, 4, 4});
    }
    for (const auto& spec : default_candidates(LayerKind::USL).candidates) {
        const std::string p = "u" + std::to_string(i++);
        register_candidate(store, p, spec, 4, 4, LayerKind::USL, rng);
        Tape tape;
        auto y = candidate_forward(tape, store, p, spec, 4, 4, LayerKind::USL, x);
        CHECK(y->shape == Shape4{1, 4, 16, 16});
    }
}

TEST_CASE("mixed layer: saturated alpha selects a single candidate") {
    std::mt19937_64 rng(6);
    ParamStore store;
    CandidateSet set;
    set.layer_kind = LayerKind::NL;
    set.candidates = {{OpKind::conv, 3, 1}, {OpKind::conv, 5, 1}};
    for (size_t o = 0; o < set.candidates.size(); ++o) {
        register_candidate(store, "w.cand" + std::to_string(o), set.candidates[o], 3, 3,
                           LayerKind::NL, rng);
        auto beta = store.create("a.cand" + std::to_string(o) + ".beta", {1, 3, 1, 1});
        std::fill(beta->values.begin(), beta->values.end(), 1.0f);
    }
    auto alpha = store.create("a.alpha", {1, 2, 1, 1});
    alpha->values = {20.0f, -20.0f};
    Tape tape;
    auto x = random_tensor({1, 3, 6, 6}, rng, 1.0f, false);
    auto mixed = mixed_layer_forward(tape, store, "w", "a", set, 3, 3, x);
    auto only = candidate_forward(tape, store, "w.cand0", set.candidates[0], 3, 3, LayerKind::NL, x);
    for (size_t i = 0; i < mixed->values.size(); ++i)
        CHECK(std::fabs(mixed->values[i] - only->values[i]) < 1e-5);
}

TEST_CASE("mixed layer: zero beta channel annihilates the output channel") {
    std::mt19937_64 rng(7);
    ParamStore store;
    CandidateSet set;
    set.layer_kind = LayerKind::NL;
    set.candidates = {{OpKind::conv, 3, 1}};
    register_candidate(store, "w.cand0", set.candidates[0], 3, 3, LayerKind::NL, rng);
    store.create("a.alpha", {1, 1, 1, 1});
    auto beta = store.create("a.cand0.beta", {1, 3, 1, 1});
    beta->values = {1.0f, 0.0f, 1.0f};
    Tape tape;
    auto x = random_tensor({1, 3, 4, 4}, rng, 1.0f, false);
    auto y = mixed_layer_forward(tape, store, "w", "a", set, 3, 3, x);
    for (int h = 0; h < 4; ++h)
        for (int w = 0; w < 4; ++w) CHECK(y->at(0, 1, h, w) == 0.0f);
}

TEST_CASE("dense block: saturated self path reduces to a plain chain") {
    std::mt19937_64 rng(8);
    const int C = 4;
    ParamStore store;
    CandidateSet nl;
    nl.layer_kind = LayerKind::NL;
    nl.candidates = {{OpKind::skip, 0, 1}, {OpKind::conv, 3, 1}};
    for (int l = 0; l < 3; ++l) {
        const std::string wl = "w.nl" + std::to_string(l);
        const std::string al = "a.nl" + std::to_string(l);
        for (size_t o = 0; o < nl.candidates.size(); ++o) {
            register_candidate(store, wl + ".cand" + std::to_string(o), nl.candidates[o], C, C,
                               LayerKind::NL, rng);
            auto beta = store.create(al + ".cand" + std::to_string(o) + ".beta", {1, C, 1, 1});
            std::fill(beta->values.begin(), beta->values.end(), 1.0f);
        }
        auto alpha = store.create(al + ".alpha", {1, 2, 1, 1});
        alpha->values = {30.0f, -30.0f};  // pick skip: the whole block is identity
        auto gamma = store.create(al + ".gamma", {1, l + 2, 1, 1});
        gamma->values.back() = 30.0f;     // saturate the self path
    }
    Tape tape;
    auto x = random_tensor({1, C, 8, 8}, rng, 1.0f, false);
    auto out = dense_block_forward(tape, store, "w", "a", nl, C, x);
    for (size_t i = 0; i < x->values.size(); ++i)
        CHECK(std::fabs(out.out->values[i] - x->values[i]) < 1e-5);
    CHECK(out.first->shape == x->shape);
}

TEST_CASE("supernet: forward shape and unfolding structure") {
    Supernet net(tiny_config(2, 8), 99);
    std::mt19937_64 rng(9);
    auto y = random_tensor({1, 1, 16, 16}, rng, 0.5f, false);
    Tape tape;
    auto out = net.forward(tape, y);
    CHECK(out->shape == y->shape);
    CHECK_THROWS_AS(net.denoiser_forward(tape, random_tensor({1, 1, 12, 12}, rng, 1.0f, false), 0),
                    std::invalid_argument);
    CHECK_THROWS_AS(net.denoiser_forward(tape, random_tensor({1, 2, 16, 16}, rng, 1.0f, false), 0),
                    std::invalid_argument);
}

TEST_CASE("supernet: T stages hold T times the weights of one stage plus T deltas") {
    Supernet one(tiny_config(1, 8), 1);
    Supernet three(tiny_config(3, 8), 1);
    auto weight_count = [](const Supernet& n) {
        int64_t c = 0;
        for (const auto& name : n.store().names_with_prefix("stage"))
            c += n.store().get(name)->numel();
        return c;
    };
    CHECK(weight_count(three) == 3 * weight_count(one));
    CHECK(three.store().names_with_prefix("arch.delta").size() == 3);
    // the architecture itself is shared: identical non-delta arch inventories
    auto arch_names = [](const Supernet& n) {
        std::vector<std::string> v;
        for (const auto& name : n.store().names_with_prefix("arch."))
            if (name.find("delta") == std::string::npos) v.push_back(name);
        return v;
    };
    CHECK(arch_names(one) == arch_names(three));
}

TEST_CASE("supernet: saturated delta returns the observation bit-exactly") {
    Supernet net(tiny_config(1, 8), 3);
    net.store().get("arch.delta0")->values[0] = 30.0f;  // sigmoid -> 1.0f in float
    std::mt19937_64 rng(10);
    auto y = random_tensor({1, 1, 16, 16}, rng, 0.5f, false);
    Tape tape;
    auto out = net.forward(tape, y);
    CHECK(out->values == y->values);
}

TEST_CASE("supernet: zero head weights make each stage the identity (global residual)") {
    Supernet net(tiny_config(1, 8), 4);
    auto hw = net.store().get("stage0.head.w");
    auto hb = net.store().get("stage0.head.b");
    std::fill(hw->values.begin(), hw->values.end(), 0.0f);
    std::fill(hb->values.begin(), hb->values.end(), 0.0f);
    std::mt19937_64 rng(11);
    auto x = random_tensor({1, 1, 16, 16}, rng, 0.5f, false);
    Tape tape;
    auto v = net.denoiser_forward(tape, x, 0);
    CHECK(v->values == x->values);
}

TEST_CASE("supernet: gradients reach every architecture parameter family") {
    Supernet net(tiny_config(2, 8), 12);
    std::mt19937_64 rng(12);
    auto y = random_tensor({1, 1, 8, 8}, rng, 0.5f, false);
    auto target = random_tensor({1, 1, 8, 8}, rng, 0.5f, false);
    Tape tape;
    auto loss = mse_loss(tape, net.forward(tape, y), target);
    tape.backward(loss);
    auto grad_norm = [&](const std::string& name) {
        auto t = net.store().get(name);
        double s = 0;
        if (t->has_grad())
            for (float g : t->grad) s += std::fabs(g);
        return s;
    };
    CHECK(grad_norm("arch.eb0.nl0.alpha") > 0.0);
    CHECK(grad_norm("arch.eb0.nl0.cand0.beta") > 0.0);
    CHECK(grad_norm("arch.eb0.nl0.gamma") > 0.0);
    CHECK(grad_norm("arch.db0.sampler.alpha") > 0.0);
    CHECK(grad_norm("arch.delta0") > 0.0);
    CHECK(grad_norm("arch.delta1") > 0.0);
    CHECK(grad_norm("stage0.stem.c0.w") > 0.0);
    CHECK(grad_norm("stage1.head.w") > 0.0);
}

TEST_CASE("supernet config validation") {
    SupernetConfig bad = tiny_config(0, 8);
    CHECK_THROWS_AS(Supernet(bad, 1), std::invalid_argument);
    SupernetConfig topo = tiny_config(1, 8);
    topo.unet.encode_blocks = 2;
    CHECK_THROWS_AS(Supernet(topo, 1), std::invalid_argument);
}
