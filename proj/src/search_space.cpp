#include "modnas/search_space.hpp"

#include <cmath>

namespace modnas {

std::string op_kind_name(OpKind k) {
    switch (k) {
        case OpKind::conv: return "conv";
        case OpKind::separable_conv: return "separable_conv";
        case OpKind::dilated_conv: return "dilated_conv";
        case OpKind::residual_block: return "residual_block";
        case OpKind::skip: return "skip";
        case OpKind::strided_conv: return "strided_conv";
        case OpKind::deconv: return "deconv";
        case OpKind::interp_nearest: return "interp_nearest";
        case OpKind::interp_bilinear: return "interp_bilinear";
        case OpKind::interp_area: return "interp_area";
        case OpKind::pixel_repeat: return "pixel_repeat";
    }
    throw std::logic_error("op_kind_name: bad enum");
}

OpKind op_kind_from_name(const std::string& s) {
    static const std::vector<OpKind> all = {
        OpKind::conv, OpKind::separable_conv, OpKind::dilated_conv, OpKind::residual_block,
        OpKind::skip, OpKind::strided_conv, OpKind::deconv, OpKind::interp_nearest,
        OpKind::interp_bilinear, OpKind::interp_area, OpKind::pixel_repeat};
    for (OpKind k : all)
        if (op_kind_name(k) == s) return k;
    throw std::invalid_argument("unknown operation kind '" + s + "'");
}

CandidateSet default_candidates(LayerKind kind) {
    CandidateSet set;
    set.layer_kind = kind;
    switch (kind) {
        case LayerKind::NL:
            set.candidates = {{OpKind::conv, 3, 1},          {OpKind::conv, 5, 1},
                              {OpKind::separable_conv, 5, 1}, {OpKind::dilated_conv, 3, 2},
                              {OpKind::dilated_conv, 5, 2},   {OpKind::residual_block, 3, 1},
                              {OpKind::skip, 0, 1}};
            break;
        case LayerKind::DSL:
            set.candidates = {{OpKind::strided_conv, 3, 1},
                              {OpKind::interp_nearest, 0, 1},
                              {OpKind::interp_bilinear, 0, 1},
                              {OpKind::interp_area, 0, 1}};
            break;
        case LayerKind::USL:
            set.candidates = {{OpKind::deconv, 3, 1},
                              {OpKind::interp_nearest, 0, 1},
                              {OpKind::interp_bilinear, 0, 1},
                              {OpKind::interp_area, 0, 1},
                              {OpKind::pixel_repeat, 0, 1}};
            break;
    }
    return set;
}

namespace {

void init_kaiming(Tensor4D& w, int fan_in, std::mt19937_64& rng) {
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
    for (auto& v : w.values) v = dist(rng);
}

void create_conv(ParamStore& store, const std::string& prefix, int c_out, int c_in_per_group,
                 int k, std::mt19937_64& rng) {
    auto w = store.create(prefix + ".w", {c_out, c_in_per_group, k, k});
    init_kaiming(*w, c_in_per_group * k * k, rng);
    store.create(prefix + ".b", {1, c_out, 1, 1});
}

// transposed conv weight layout (C_in, C_out, k, k)
void create_deconv(ParamStore& store, const std::string& prefix, int c_in, int c_out, int k,
                   std::mt19937_64& rng) {
    auto w = store.create(prefix + ".w", {c_in, c_out, k, k});
    init_kaiming(*w, c_in * k * k, rng);
    store.create(prefix + ".b", {1, c_out, 1, 1});
}

}  // namespace

void register_candidate(ParamStore& store, const std::string& prefix, const OpSpec& spec,
                        int c_in, int c_out, LayerKind kind, std::mt19937_64& rng) {
    if (c_in < 1 || c_out < 1)
        throw std::invalid_argument("register_candidate: channels must be >= 1");
    switch (spec.kind) {
        case OpKind::conv:
        case OpKind::dilated_conv:
        case OpKind::strided_conv:
            create_conv(store, prefix, c_out, c_in, spec.kernel, rng);
            break;
        case OpKind::separable_conv:
            create_conv(store, prefix + ".dw", c_in, 1, spec.kernel, rng);
            create_conv(store, prefix + ".pw", c_out, c_in, 1, rng);
            break;
        case OpKind::residual_block:
            create_conv(store, prefix + ".c0", c_out, c_in, spec.kernel, rng);
            create_conv(store, prefix + ".c1", c_out, c_out, spec.kernel, rng);
            if (c_in != c_out) create_conv(store, prefix + ".proj", c_out, c_in, 1, rng);
            break;
        case OpKind::skip:
            if (c_in != c_out)
                throw std::invalid_argument("skip requires c_in == c_out, got " +
                                            std::to_string(c_in) + " vs " + std::to_string(c_out));
            break;
        case OpKind::deconv:
            create_deconv(store, prefix, c_in, c_out, spec.kernel, rng);
            break;
        case OpKind::interp_nearest:
        case OpKind::interp_bilinear:
        case OpKind::interp_area:
        case OpKind::pixel_repeat:
            create_conv(store, prefix + ".pw", c_out, c_in, 1, rng);
            break;
    }
    (void)kind;
}

TensorPtr candidate_forward(Tape& tape, const ParamStore& store, const std::string& prefix,
                            const OpSpec& spec, int c_in, int c_out, LayerKind kind,
                            const TensorPtr& x) {
    if (x->shape.c != c_in)
        throw std::invalid_argument("candidate_forward: expected " + std::to_string(c_in) +
                                    " channels, got " + std::to_string(x->shape.c));
    const int sampler_stride = (kind == LayerKind::DSL) ? 2 : 1;
    switch (spec.kind) {
        case OpKind::conv:
            return conv2d(tape, relu(tape, x), store.get(prefix + ".w"),
                          store.get(prefix + ".b"), 1, 1, 1);
        case OpKind::dilated_conv:
            return conv2d(tape, relu(tape, x), store.get(prefix + ".w"),
                          store.get(prefix + ".b"), 1, spec.dilation, 1);
        case OpKind::strided_conv:
            return conv2d(tape, relu(tape, x), store.get(prefix + ".w"),
                          store.get(prefix + ".b"), sampler_stride, 1, 1);
        case OpKind::separable_conv: {
            auto h = conv2d(tape, relu(tape, x), store.get(prefix + ".dw.w"),
                            store.get(prefix + ".dw.b"), 1, 1, c_in);
            return conv2d(tape, relu(tape, h), store.get(prefix + ".pw.w"),
                          store.get(prefix + ".pw.b"), 1, 1, 1);
        }
        case OpKind::residual_block: {
            auto h = conv2d(tape, relu(tape, x), store.get(prefix + ".c0.w"),
                            store.get(prefix + ".c0.b"), 1, 1, 1);
            h = conv2d(tape, relu(tape, h), store.get(prefix + ".c1.w"),
                       store.get(prefix + ".c1.b"), 1, 1, 1);
            TensorPtr shortcut = x;
            if (c_in != c_out)
                shortcut = conv2d(tape, x, store.get(prefix + ".proj.w"),
                                  store.get(prefix + ".proj.b"), 1, 1, 1);
            return add(tape, h, shortcut);
        }
        case OpKind::skip:
            if (c_in != c_out)
                throw std::invalid_argument("skip requires c_in == c_out");
            return x;
        case OpKind::deconv:
            return transposed_conv2d(tape, relu(tape, x), store.get(prefix + ".w"),
                                     store.get(prefix + ".b"), 2);
        case OpKind::interp_nearest:
        case OpKind::interp_bilinear:
        case OpKind::interp_area:
        case OpKind::pixel_repeat: {
            InterpMode m = InterpMode::kNearest;
            if (spec.kind == OpKind::interp_bilinear) m = InterpMode::kBilinear;
            if (spec.kind == OpKind::interp_area) m = InterpMode::kArea;
            auto h = interpolate(tape, x, m, /*upscale=*/kind == LayerKind::USL);
            return conv2d(tape, h, store.get(prefix + ".pw.w"), store.get(prefix + ".pw.b"),
                          1, 1, 1);
        }
    }
    throw std::logic_error("candidate_forward: bad op kind");
}

TensorPtr mixed_layer_forward(Tape& tape, const ParamStore& store,
                              const std::string& weight_prefix, const std::string& arch_prefix,
                              const CandidateSet& set, int c_in, int c_out, const TensorPtr& x) {
    auto omega = softmax_vec(tape, store.get(arch_prefix + ".alpha"));
    std::vector<TensorPtr> terms;
    terms.reserve(set.candidates.size());
    for (size_t o = 0; o < set.candidates.size(); ++o) {
        auto y = candidate_forward(tape, store, weight_prefix + ".cand" + std::to_string(o),
                                   set.candidates[o], c_in, c_out, set.layer_kind, x);
        auto beta = store.get(arch_prefix + ".cand" + std::to_string(o) + ".beta");
        terms.push_back(channel_scale(tape, y, beta));
        if (terms.back()->shape != terms.front()->shape)
            throw std::invalid_argument("mixed_layer_forward: candidate output shapes disagree: " +
                                        terms.back()->shape.str() + " vs " +
                                        terms.front()->shape.str());
    }
    return weighted_sum(tape, terms, omega);
}

DenseBlockOut dense_block_forward(Tape& tape, const ParamStore& store,
                                  const std::string& weight_prefix, const std::string& arch_prefix,
                                  const CandidateSet& nl, int channels, const TensorPtr& block_input) {
    std::vector<TensorPtr> outputs{block_input};  // L_0 is the block input
    DenseBlockOut res;
    const int layers = 3;
    for (int l = 0; l < layers; ++l) {
        const std::string wl = weight_prefix + ".nl" + std::to_string(l);
        const std::string al = arch_prefix + ".nl" + std::to_string(l);
        auto z = mixed_layer_forward(tape, store, wl, al, nl, channels, channels, outputs.back());
        std::vector<TensorPtr> paths = outputs;  // L_0 .. L_{l}, then self output
        paths.push_back(z);
        auto p = softmax_vec(tape, store.get(al + ".gamma"));
        auto L = weighted_sum(tape, paths, p);
        outputs.push_back(L);
        if (l == 0) res.first = L;
    }
    res.out = outputs.back();
    return res;
}

std::string Supernet::block_name(int block) {
    // encoder blocks come first; hard-wired to the 3 EB + 4 DB topology
    return block < 3 ? "eb" + std::to_string(block) : "db" + std::to_string(block - 3);
}

Supernet::Supernet(const SupernetConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    if (cfg_.stages < 1) throw std::invalid_argument("Supernet: stages must be >= 1");
    if (cfg_.unet.encode_blocks != 3 || cfg_.unet.decode_blocks != 4 ||
        cfg_.unet.layers_per_block != 3)
        throw std::invalid_argument("Supernet: topology is fixed at 3 EBs / 4 DBs / 3 layers");
    build(init_seed);
}

void Supernet::build(uint64_t init_seed) {
    std::mt19937_64 rng(init_seed);
    const int C = cfg_.unet.init_channels;
    const int weight_stages = cfg_.share_stages ? 1 : cfg_.stages;

    // Architecture parameters: one shared architecture across stages.
    for (int b = 0; b < num_blocks(); ++b) {
        const std::string ab = "arch." + block_name(b);
        for (int l = 0; l < cfg_.unet.layers_per_block; ++l) {
            const std::string al = ab + ".nl" + std::to_string(l);
            store_.create(al + ".alpha",
                          {1, static_cast<int>(cfg_.unet.nl.candidates.size()), 1, 1});
            store_.create(al + ".gamma", {1, l + 2, 1, 1});
            for (size_t o = 0; o < cfg_.unet.nl.candidates.size(); ++o) {
                auto beta = store_.create(al + ".cand" + std::to_string(o) + ".beta", {1, C, 1, 1});
                std::fill(beta->values.begin(), beta->values.end(), 1.0f);
            }
        }
        if (block_has_sampler(b)) {
            const CandidateSet& s = sampler_set(b);
            const std::string as = ab + ".sampler";
            store_.create(as + ".alpha", {1, static_cast<int>(s.candidates.size()), 1, 1});
            for (size_t o = 0; o < s.candidates.size(); ++o) {
                auto beta = store_.create(as + ".cand" + std::to_string(o) + ".beta", {1, C, 1, 1});
                std::fill(beta->values.begin(), beta->values.end(), 1.0f);
            }
        }
    }
    for (int t = 0; t < cfg_.stages; ++t)
        store_.create("arch.delta" + std::to_string(t), {1, 1, 1, 1});  // sigmoid(0) = 0.5

    // Stage weights.
    for (int t = 0; t < weight_stages; ++t) {
        const std::string sp = weight_prefix(t);
        {
            auto w = store_.create(sp + ".stem.c0.w", {C, 1, 3, 3});
            init_kaiming(*w, 9, rng);
            store_.create(sp + ".stem.c0.b", {1, C, 1, 1});
            auto w1 = store_.create(sp + ".stem.c1.w", {C, C, 3, 3});
            init_kaiming(*w1, 9 * C, rng);
            store_.create(sp + ".stem.c1.b", {1, C, 1, 1});
        }
        for (int b = 0; b < num_blocks(); ++b) {
            const std::string bp = sp + "." + block_name(b);
            if (block_has_fusion(b)) create_conv(store_, bp + ".fusion", C, 2 * C, 3, rng);
            for (int l = 0; l < cfg_.unet.layers_per_block; ++l)
                for (size_t o = 0; o < cfg_.unet.nl.candidates.size(); ++o)
                    register_candidate(store_,
                                       bp + ".nl" + std::to_string(l) + ".cand" + std::to_string(o),
                                       cfg_.unet.nl.candidates[o], C, C, LayerKind::NL, rng);
            if (block_has_sampler(b)) {
                const CandidateSet& s = sampler_set(b);
                for (size_t o = 0; o < s.candidates.size(); ++o)
                    register_candidate(store_, bp + ".sampler.cand" + std::to_string(o),
                                       s.candidates[o], C, C, s.layer_kind, rng);
            }
        }
        {
            auto w = store_.create(sp + ".head.w", {1, C, 1, 1});
            init_kaiming(*w, C, rng);
            store_.create(sp + ".head.b", {1, 1, 1, 1});
        }
    }
}

TensorPtr Supernet::denoiser_forward(Tape& tape, const TensorPtr& x, int stage) const {
    if (x->shape.c != 1)
        throw std::invalid_argument("denoiser_forward: expected single-channel input, got " +
                                    x->shape.str());
    if (x->shape.h % 8 != 0 || x->shape.w % 8 != 0)
        throw std::invalid_argument("denoiser_forward: spatial size must be divisible by 8, got " +
                                    x->shape.str());
    const int C = cfg_.unet.init_channels;
    const std::string sp = weight_prefix(cfg_.share_stages ? 0 : stage);

    auto h = conv2d(tape, x, store_.get(sp + ".stem.c0.w"), store_.get(sp + ".stem.c0.b"));
    h = conv2d(tape, relu(tape, h), store_.get(sp + ".stem.c1.w"), store_.get(sp + ".stem.c1.b"));

    std::vector<TensorPtr> skip_feats;  // first-NL output per EB, full->deep order
    const int n_eb = cfg_.unet.encode_blocks;
    for (int b = 0; b < n_eb; ++b) {
        const std::string bp = sp + "." + block_name(b);
        const std::string ab = "arch." + block_name(b);
        auto blk = dense_block_forward(tape, store_, bp, ab, cfg_.unet.nl, C, h);
        skip_feats.push_back(blk.first);
        h = mixed_layer_forward(tape, store_, bp + ".sampler", ab + ".sampler", cfg_.unet.dsl,
                                C, C, blk.out);
    }
    for (int d = 0; d < cfg_.unet.decode_blocks; ++d) {
        const int b = n_eb + d;
        const std::string bp = sp + "." + block_name(b);
        const std::string ab = "arch." + block_name(b);
        if (block_has_fusion(b)) {
            // Upsampled decoder features meet the same-resolution encoder skip.
            const TensorPtr& skip = skip_feats[n_eb - d];
            auto cat = concat_channels(tape, h, skip);
            h = conv2d(tape, cat, store_.get(bp + ".fusion.w"), store_.get(bp + ".fusion.b"));
        }
        auto blk = dense_block_forward(tape, store_, bp, ab, cfg_.unet.nl, C, h);
        h = blk.out;
        if (block_has_sampler(b))
            h = mixed_layer_forward(tape, store_, bp + ".sampler", ab + ".sampler", cfg_.unet.usl,
                                    C, C, h);
    }
    // global residual: the denoiser estimates a correction to its input
    auto out = conv2d(tape, relu(tape, h), store_.get(sp + ".head.w"), store_.get(sp + ".head.b"));
    return add(tape, out, x);
}

TensorPtr Supernet::forward(Tape& tape, const TensorPtr& y) const {
    TensorPtr x = y;
    for (int t = 0; t < cfg_.stages; ++t) {
        auto v = denoiser_forward(tape, x, t);
        auto delta = sigmoid(tape, store_.get("arch.delta" + std::to_string(t)));
        x = lerp(tape, y, v, delta);
    }
    return x;
}

}  // namespace modnas
