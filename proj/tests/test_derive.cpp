#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>

#include "modnas/derive.hpp"
#include "test_util.hpp"

using namespace modnas;
using testutil::random_tensor;

namespace {

std::string data_path(const std::string& name) {
    return std::string(MODNAS_DATA_DIR) + "/" + name;
}

SupernetConfig small_config(int stages = 1, int channels = 16) {
    SupernetConfig cfg;
    cfg.stages = stages;
    cfg.unet.init_channels = channels;
    return cfg;
}

void randomize_arch_params(Supernet& net, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-2.0f, 2.0f);
    for (const auto& name : net.store().names_with_prefix("arch."))
        if (name.find("delta") == std::string::npos)
            for (auto& v : net.store().get(name)->values) v = dist(rng);
}

// Reference width rule: the smallest multiple of 2^n whose top-|beta|
// channels reach the coverage threshold, checked by trying every width.
int brute_force_width(const std::vector<float>& beta, const WidthDerivationConfig& cfg) {
    std::vector<float> mags;
    for (float b : beta) mags.push_back(std::fabs(b));
    std::stable_sort(mags.begin(), mags.end(), std::greater<float>());
    const float total = std::accumulate(mags.begin(), mags.end(), 0.0f);
    const int step = 1 << cfg.n;
    for (int m = step; m <= static_cast<int>(beta.size()); m += step) {
        float covered = std::accumulate(mags.begin(), mags.begin() + m, 0.0f);
        if (covered >= cfg.coverage * total) return m;
    }
    return static_cast<int>(beta.size());
}

}  // namespace

TEST_CASE("operation selection: argmax with lowest-index ties") {
    CHECK(derive_operation_index({0.1f, 2.0f, -1.0f}) == 1);
    CHECK(derive_operation_index({3.0f, 3.0f, 3.0f}) == 0);
    CHECK(derive_operation_index({-5.0f}) == 0);
    CHECK_THROWS_AS(derive_operation_index({}), std::invalid_argument);

    std::vector<float> a = {0.4f, -0.2f, 1.3f, 1.1f};
    const int pick = derive_operation_index(a);
    for (auto& v : a) v += 7.5f;  // softmax-style shift invariance
    CHECK(derive_operation_index(a) == pick);

    const CandidateSet nl = default_candidates(LayerKind::NL);
    std::vector<float> alpha(nl.candidates.size(), 0.0f);
    alpha[6] = 1.0f;
    CHECK(derive_operation(alpha, nl).kind == OpKind::skip);
    CHECK_THROWS_AS(derive_operation({1.0f}, nl), std::invalid_argument);
}

TEST_CASE("width selection: worked examples") {
    WidthDerivationConfig cfg;  // coverage 0.9, multiples of 8

    SUBCASE("eight strong channels out of sixteen") {
        std::vector<float> beta(16, 0.001f);
        for (int i = 0; i < 8; ++i) beta[2 * i] = 1.0f;
        auto r = derive_width(beta, cfg);
        CHECK(r.m_hat == 8);
        CHECK(r.kept == std::vector<int>{0, 2, 4, 6, 8, 10, 12, 14});
        CHECK_FALSE(r.degenerate);
    }
    SUBCASE("uniform mass needs nearly all channels") {
        std::vector<float> beta(16, 1.0f);
        auto r = derive_width(beta, cfg);
        CHECK(r.m_hat == 16);  // 8 of 16 covers only 50%
        CHECK(r.kept.size() == 16);
    }
    SUBCASE("one channel holding 91% of the mass") {
        std::vector<float> beta(16, 0.006f);  // 15 * 0.006 = 0.09
        beta[5] = 0.91f;
        auto r = derive_width(beta, cfg);
        CHECK(r.m_hat == 8);
        CHECK(r.kept.front() == 0);
        CHECK(std::find(r.kept.begin(), r.kept.end(), 5) != r.kept.end());
    }
    SUBCASE("all-zero mass degenerates to the minimum width") {
        std::vector<float> beta(32, 0.0f);
        auto r = derive_width(beta, cfg);
        CHECK(r.m_hat == 8);
        CHECK(r.degenerate);
        CHECK(r.kept.size() == 8);
    }
    SUBCASE("negative weights count by magnitude") {
        std::vector<float> beta(8, 0.0f);
        beta[3] = -10.0f;
        auto r = derive_width(beta, cfg);
        CHECK(r.m_hat == 8);
        CHECK_FALSE(r.degenerate);
    }
    SUBCASE("validation") {
        CHECK_THROWS_AS(derive_width(std::vector<float>(12, 1.0f), cfg), std::invalid_argument);
        CHECK_THROWS_AS(derive_width(std::vector<float>(4, 1.0f), cfg), std::invalid_argument);
        WidthDerivationConfig bad = cfg;
        bad.coverage = 0.0f;
        CHECK_THROWS_AS(derive_width(std::vector<float>(16, 1.0f), bad), std::invalid_argument);
    }
}

TEST_CASE("width selection: matches a brute-force oracle") {
    WidthDerivationConfig cfg;
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<float> dist(-1.5f, 1.5f);
    for (int C : {8, 16, 32, 64}) {
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<float> beta(C);
            for (auto& b : beta) b = dist(rng);
            auto r = derive_width(beta, cfg);
            CHECK(r.m_hat == brute_force_width(beta, cfg));
            CHECK(static_cast<int>(r.kept.size()) == r.m_hat);
            CHECK(std::is_sorted(r.kept.begin(), r.kept.end()));
        }
    }
}

TEST_CASE("width selection: invariant under positive rescaling") {
    WidthDerivationConfig cfg;
    std::mt19937_64 rng(78);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    std::vector<float> beta(24);
    for (auto& b : beta) b = dist(rng);
    auto base = derive_width(beta, cfg);
    for (float s : {0.5f, 2.0f, 13.0f}) {
        std::vector<float> scaled = beta;
        for (auto& b : scaled) b *= s;
        auto r = derive_width(scaled, cfg);
        CHECK(r.m_hat == base.m_hat);
        CHECK(r.kept == base.kept);
    }
}

TEST_CASE("depth selection: path choice and dead-layer removal") {
    SUBCASE("ties prefer the self path, so a fresh block keeps every layer") {
        auto r = derive_depth({{0, 0}, {0, 0, 0}, {0, 0, 0, 0}});
        CHECK(r.input_path == std::vector<int>{1, 2, 3});
        CHECK(r.live == std::vector<bool>{true, true, true});
    }
    SUBCASE("last layer reading the block input bypasses everything") {
        auto r = derive_depth({{0, 1}, {0, 0, 1}, {9, 0, 0, 0}});
        CHECK(r.input_path[2] == 0);
        CHECK(r.live == std::vector<bool>{false, false, false});
    }
    SUBCASE("skipping the middle layer only") {
        // layer 1 output aliases L_1 (layer 0's output); layer 2 consumes L_2
        auto r = derive_depth({{0, 1}, {0, 9, 0}, {0, 0, 0, 1}});
        CHECK(r.input_path == std::vector<int>{1, 1, 3});
        CHECK(r.live == std::vector<bool>{true, false, true});
    }
    SUBCASE("non-self ties pick the lowest path index") {
        auto r = derive_depth({{5, 0}});
        CHECK(r.input_path == std::vector<int>{0});
        CHECK(r.live == std::vector<bool>{false});
    }
    SUBCASE("gamma length must grow with layer index") {
        CHECK_THROWS_AS(derive_depth({{0, 0, 0}}), std::invalid_argument);
    }
}

TEST_CASE("derivation of an untrained supernet yields the default network") {
    Supernet net(small_config(2, 16), 5);
    auto arch = derive_architecture(net, {});
    CHECK(arch.stages == 2);
    CHECK(arch.init_channels == 16);
    REQUIRE(arch.blocks.size() == 9);
    CHECK(arch.delta == std::vector<float>{0.5f, 0.5f});

    // zero alphas pick candidate 0 (3x3 conv / strided conv / deconv); unit
    // betas keep the full width; zero gammas keep every layer
    const auto& eb0 = arch.blocks[1];
    REQUIRE(eb0.layers.size() == 4);
    for (int l = 0; l < 3; ++l) {
        CHECK(eb0.layers[l].op.kind == OpKind::conv);
        CHECK(eb0.layers[l].op.kernel == 3);
        CHECK(eb0.layers[l].c_out == 16);
        CHECK(eb0.layers[l].input_path == l + 1);
    }
    CHECK(eb0.layers[3].op.kind == OpKind::strided_conv);
    CHECK(eb0.layers[3].stride == 2);

    const auto& db1 = arch.blocks[5];
    CHECK(db1.has_fusion);
    CHECK(db1.layers[0].c_in == 32);
    CHECK(db1.layers[0].c_out == 16);
    CHECK(arch.blocks[4].layers.back().op.kind == OpKind::deconv);
    CHECK(arch.blocks.back().layers[0].c_out == 1);

    DerivedNet dnet(arch, 11);
    std::mt19937_64 rng(6);
    auto y = random_tensor({1, 1, 32, 32}, rng, 0.5f, false);
    Tape tape;
    auto out = dnet.forward(tape, y);
    CHECK(out->shape == y->shape);

    // the extracted network can never exceed the single-stage supernet weights
    auto stage_weights = [](const ParamStore& s, const std::string& p) {
        int64_t c = 0;
        for (const auto& n : s.names_with_prefix(p)) c += s.get(n)->numel();
        return c;
    };
    CHECK(stage_weights(dnet.store(), "stage0") <= stage_weights(net.store(), "stage0"));
}

TEST_CASE("derivation of randomized supernets always yields a valid network") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Supernet net(small_config(1, 16), 100 + seed);
        randomize_arch_params(net, seed);
        DerivedArch arch;
        REQUIRE_NOTHROW(arch = derive_architecture(net, {}));
        for (const auto& blk : arch.blocks)
            for (const auto& l : blk.layers)
                if (!l.kept_channels.empty()) CHECK(l.c_out % 8 == 0);
        DerivedNet dnet(arch, seed);
        std::mt19937_64 rng(seed);
        auto y = random_tensor({1, 1, 16, 16}, rng, 0.5f, false);
        Tape tape;
        CHECK(dnet.forward(tape, y)->shape == y->shape);
    }
}

TEST_CASE("derivation ignores constant shifts of alpha and positive beta scales") {
    Supernet net(small_config(1, 16), 8);
    randomize_arch_params(net, 3);
    const std::string base = arch_to_json(derive_architecture(net, {}));
    for (const auto& name : net.store().names_with_prefix("arch.")) {
        auto t = net.store().get(name);
        if (name.find(".alpha") != std::string::npos)
            for (auto& v : t->values) v += 4.25f;
        else if (name.find(".beta") != std::string::npos)
            for (auto& v : t->values) v *= 3.0f;
    }
    CHECK(arch_to_json(derive_architecture(net, {})) == base);
}

TEST_CASE("architecture files: export, import, re-export is byte identical") {
    Supernet net(small_config(2, 16), 21);
    randomize_arch_params(net, 9);
    auto arch = derive_architecture(net, {});
    const auto dir = std::filesystem::temp_directory_path();
    const std::string p1 = (dir / "modnas_arch_a.json").string();
    const std::string p2 = (dir / "modnas_arch_b.json").string();
    export_arch(arch, p1);
    export_arch(import_arch(p1), p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK(!s1.empty());
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST_CASE("architecture validation rejects malformed networks") {
    Supernet net(small_config(1, 16), 2);
    auto good = derive_architecture(net, {});

    SUBCASE("unknown schema") {
        CHECK_THROWS_AS(arch_from_json("{\"schema\":\"other\"}"), std::runtime_error);
        CHECK_THROWS_AS(arch_from_json("not json"), std::runtime_error);
    }
    SUBCASE("wrong block order") {
        auto bad = good;
        std::swap(bad.blocks[1], bad.blocks[2]);
        CHECK_THROWS_AS(validate_arch(bad), std::runtime_error);
    }
    SUBCASE("skip with mismatched channels") {
        auto bad = good;
        bad.blocks[1].layers[1].op.kind = OpKind::skip;
        bad.blocks[1].layers[1].c_out = bad.blocks[1].layers[1].c_in + 8;
        CHECK_THROWS_AS(validate_arch(bad), std::runtime_error);
    }
    SUBCASE("broken channel chain") {
        auto bad = good;
        bad.blocks[2].layers[0].c_in += 8;
        CHECK_THROWS_AS(validate_arch(bad), std::runtime_error);
    }
    SUBCASE("head must map to one channel") {
        auto bad = good;
        bad.blocks.back().layers[0].c_out = 3;
        CHECK_THROWS_AS(validate_arch(bad), std::runtime_error);
    }
    SUBCASE("delta outside (0,1)") {
        auto bad = good;
        bad.delta[0] = 1.0f;
        CHECK_THROWS_AS(validate_arch(bad), std::runtime_error);
    }
}

TEST_CASE("reference architecture fixtures import and run") {
    for (const std::string file : {"modnas_b.json", "modnas_ar.json"}) {
        CAPTURE(file);
        auto arch = import_arch(data_path(file));
        CHECK(arch.blocks.size() == 9);
        CHECK(arch.init_channels == 48);
        DerivedNet dnet(arch, 17);
        std::mt19937_64 rng(4);
        auto y = random_tensor({1, 1, 64, 64}, rng, 0.5f, false);
        Tape tape;
        tape.set_recording(false);
        auto out = dnet.forward(tape, y);
        CHECK(out->shape == y->shape);
        for (float v : out->values) CHECK(std::isfinite(v));
    }
}
