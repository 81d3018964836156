#include "modnas/derive.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace modnas {

int derive_operation_index(const std::vector<float>& alpha) {
    if (alpha.empty()) throw std::invalid_argument("derive_operation: empty alpha");
    int best = 0;
    for (size_t i = 1; i < alpha.size(); ++i)
        if (alpha[i] > alpha[best]) best = static_cast<int>(i);
    return best;
}

OpSpec derive_operation(const std::vector<float>& alpha, const CandidateSet& candidates) {
    if (alpha.size() != candidates.candidates.size())
        throw std::invalid_argument("derive_operation: alpha/candidate length mismatch");
    return candidates.candidates[derive_operation_index(alpha)];
}

WidthResult derive_width(const std::vector<float>& beta, const WidthDerivationConfig& cfg) {
    const int C = static_cast<int>(beta.size());
    const int step = 1 << cfg.n;
    if (C < step || C % step != 0)
        throw std::invalid_argument("derive_width: C must be a positive multiple of 2^n");
    if (cfg.coverage <= 0.0f || cfg.coverage > 1.0f)
        throw std::invalid_argument("derive_width: coverage must be in (0, 1]");

    std::vector<int> order(beta.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return std::fabs(beta[a]) > std::fabs(beta[b]);
    });
    float total = 0.0f;
    for (float b : beta) total += std::fabs(b);

    WidthResult res;
    if (total == 0.0f) {
        res.m_hat = step;
        res.degenerate = true;
    } else {
        std::vector<float> prefix(beta.size() + 1, 0.0f);
        for (size_t i = 0; i < beta.size(); ++i)
            prefix[i + 1] = prefix[i] + std::fabs(beta[order[i]]);
        res.m_hat = C;
        for (int m = step; m <= C; m += step) {
            if (prefix[m] >= cfg.coverage * total) {
                res.m_hat = m;
                break;
            }
        }
    }
    res.kept.assign(order.begin(), order.begin() + res.m_hat);
    std::sort(res.kept.begin(), res.kept.end());
    return res;
}

DepthResult derive_depth(const std::vector<std::vector<float>>& gamma) {
    const int layers = static_cast<int>(gamma.size());
    DepthResult res;
    res.input_path.resize(layers);
    res.live.assign(layers, false);
    for (int l = 0; l < layers; ++l) {
        const auto& g = gamma[l];
        if (static_cast<int>(g.size()) != l + 2)
            throw std::invalid_argument("derive_depth: gamma for layer " + std::to_string(l) +
                                        " must have length " + std::to_string(l + 2));
        const int self = l + 1;
        float mx = *std::max_element(g.begin(), g.end());
        if (g[self] >= mx) {
            res.input_path[l] = self;  // self path preferred on ties
        } else {
            int pick = 0;
            while (g[pick] < mx) ++pick;
            res.input_path[l] = pick;
        }
    }
    // Backward reachability from the final layer output L_{layers}.
    int cur = layers;
    while (cur > 0) {
        const int path = res.input_path[cur - 1];
        if (path == cur) {  // self: layer cur's op is on the chain, consumes L_{cur-1}
            res.live[cur - 1] = true;
            cur -= 1;
        } else {            // L_cur aliases L_path; ops in between are discarded
            cur = path;
        }
    }
    return res;
}

namespace {

std::vector<float> param_values(const ParamStore& store, const std::string& name) {
    return store.get(name)->values;
}

int block_resolution(const std::string& name) {
    if (name == "stem" || name == "eb0" || name == "db3" || name == "head") return 1;
    if (name == "eb1" || name == "db2") return 2;
    if (name == "eb2" || name == "db1") return 4;
    if (name == "db0") return 8;
    throw std::invalid_argument("unknown block '" + name + "'");
}

bool block_has_sampler_by_name(const std::string& name) {
    return name[0] == 'e' || name == "db0" || name == "db1" || name == "db2";
}

bool block_has_fusion_by_name(const std::string& name) {
    return name == "db1" || name == "db2" || name == "db3";
}

}  // namespace

DerivedArch derive_architecture(const Supernet& net, const WidthDerivationConfig& cfg) {
    const SupernetConfig& scfg = net.config();
    const ParamStore& store = net.store();
    const int C = scfg.unet.init_channels;

    DerivedArch arch;
    arch.stages = scfg.stages;
    arch.init_channels = C;
    for (int t = 0; t < scfg.stages; ++t) {
        const float raw = store.get("arch.delta" + std::to_string(t))->values[0];
        arch.delta.push_back(1.0f / (1.0f + std::exp(-raw)));
    }

    // stem
    {
        DerivedBlock stem;
        stem.name = "stem";
        stem.layers.push_back({{OpKind::conv, 3, 1}, 1, C, 1, 1, {}, -1});
        stem.layers.push_back({{OpKind::conv, 3, 1}, C, C, 1, 1, {}, -1});
        arch.blocks.push_back(std::move(stem));
    }

    std::vector<int> eb_first_width;   // skip-tap width per encoder block
    std::vector<int> block_out_width;  // running decoder/encoder output widths per block
    int cur = C;                       // width entering the next block

    for (int b = 0; b < net.num_blocks(); ++b) {
        const std::string bname = Supernet::block_name(b);
        const std::string ab = "arch." + bname;
        DerivedBlock blk;
        blk.name = bname;
        const int res = block_resolution(bname);
        const int block_in_width = cur;

        if (block_has_fusion_by_name(bname)) {
            const int d = b - scfg.unet.encode_blocks;           // 1..3
            const int eb = scfg.unet.encode_blocks - d;          // matching-resolution EB
            const int skip_w = eb_first_width[eb];
            const int cin = cur + skip_w;
            if (cin % 2 != 0)
                throw std::runtime_error("derive_architecture: odd fusion width " +
                                         std::to_string(cin));
            blk.has_fusion = true;
            blk.layers.push_back({{OpKind::conv, 3, 1}, cin, cin / 2, 1, res, {}, -1});
            cur = cin / 2;
        }

        // depth first, then operation, then width per live layer
        std::vector<std::vector<float>> gamma;
        for (int l = 0; l < scfg.unet.layers_per_block; ++l)
            gamma.push_back(param_values(store, ab + ".nl" + std::to_string(l) + ".gamma"));
        DepthResult depth = derive_depth(gamma);

        for (int l = 0; l < scfg.unet.layers_per_block; ++l) {
            if (!depth.live[l]) continue;
            const std::string al = ab + ".nl" + std::to_string(l);
            const auto alpha = param_values(store, al + ".alpha");
            const int oi = derive_operation_index(alpha);
            const OpSpec op = scfg.unet.nl.candidates[oi];
            DerivedLayer layer;
            layer.op = op;
            layer.c_in = cur;
            layer.resolution = res;
            layer.input_path = depth.input_path[l];
            if (op.kind == OpKind::skip) {
                layer.c_out = cur;
            } else {
                const auto beta = param_values(store, al + ".cand" + std::to_string(oi) + ".beta");
                WidthResult w = derive_width(beta, cfg);
                layer.c_out = w.m_hat;
                layer.kept_channels = std::move(w.kept);
            }
            cur = layer.c_out;
            blk.layers.push_back(std::move(layer));
        }

        if (b < scfg.unet.encode_blocks) {
            // Encoder skip tap: the first normal layer's output when it is
            // live, otherwise the block input.
            int first_w = block_in_width;
            if (depth.live[0]) first_w = blk.layers.front().c_out;
            eb_first_width.push_back(first_w);
        }

        if (block_has_sampler_by_name(bname)) {
            const CandidateSet& sset = net.sampler_set(b);
            const auto alpha = param_values(store, ab + ".sampler.alpha");
            const int oi = derive_operation_index(alpha);
            const OpSpec op = sset.candidates[oi];
            const auto beta = param_values(store, ab + ".sampler.cand" + std::to_string(oi) + ".beta");
            WidthResult w = derive_width(beta, cfg);
            DerivedLayer layer;
            layer.op = op;
            layer.c_in = cur;
            layer.c_out = w.m_hat;
            layer.stride = (op.kind == OpKind::strided_conv || op.kind == OpKind::deconv) ? 2 : 1;
            layer.resolution = res;
            layer.kept_channels = std::move(w.kept);
            cur = layer.c_out;
            blk.layers.push_back(std::move(layer));
        }

        block_out_width.push_back(cur);
        arch.blocks.push_back(std::move(blk));
    }

    // head
    {
        DerivedBlock head;
        head.name = "head";
        head.layers.push_back({{OpKind::conv, 1, 1}, cur, 1, 1, 1, {}, -1});
        arch.blocks.push_back(std::move(head));
    }
    validate_arch(arch);
    return arch;
}

void validate_arch(const DerivedArch& arch) {
    static const std::vector<std::string> expected = {"stem", "eb0", "eb1", "eb2", "db0",
                                                      "db1",  "db2", "db3", "head"};
    if (arch.stages < 1) throw std::runtime_error("arch: stages must be >= 1");
    if (static_cast<int>(arch.delta.size()) != arch.stages)
        throw std::runtime_error("arch: delta count must equal stages");
    for (float d : arch.delta)
        if (!(d > 0.0f && d < 1.0f))
            throw std::runtime_error("arch: delta must lie in (0,1)");
    if (arch.blocks.size() != expected.size())
        throw std::runtime_error("arch: expected " + std::to_string(expected.size()) + " blocks");
    for (size_t i = 0; i < expected.size(); ++i)
        if (arch.blocks[i].name != expected[i])
            throw std::runtime_error("arch: block " + std::to_string(i) + " must be '" +
                                     expected[i] + "', got '" + arch.blocks[i].name + "'");
    if (arch.blocks.front().layers.size() != 2 || arch.blocks.front().layers[0].c_in != 1)
        throw std::runtime_error("arch: stem must be two convs starting from one channel");
    int cur = 0;
    for (const auto& blk : arch.blocks) {
        // eb/db blocks may legitimately be empty (all layers bypassed)
        if (blk.layers.empty() && (blk.name == "stem" || blk.name == "head"))
            throw std::runtime_error("arch: block '" + blk.name + "' has no layers");
        for (size_t i = 0; i < blk.layers.size(); ++i) {
            const DerivedLayer& l = blk.layers[i];
            const bool fusion = blk.has_fusion && i == 0;
            if (l.op.kind == OpKind::skip) {
                if (l.c_in != l.c_out)
                    throw std::runtime_error("arch: skip layer with c_in != c_out in '" +
                                             blk.name + "'");
            } else if (l.c_in < 1 || l.c_out < 1) {
                throw std::runtime_error("arch: non-positive channel count in '" + blk.name + "'");
            }
            if (blk.name == "stem" && i == 0) {
                cur = l.c_out;
                continue;
            }
            if (fusion) {
                if (l.c_in <= cur)
                    throw std::runtime_error("arch: fusion input in '" + blk.name +
                                             "' must exceed the upsampled width");
            } else if (cur != 0 && l.c_in != cur) {
                throw std::runtime_error("arch: channel chain broken in '" + blk.name +
                                         "': expected c_in " + std::to_string(cur) + ", got " +
                                         std::to_string(l.c_in));
            }
            cur = l.c_out;
        }
    }
    if (arch.blocks.back().layers.back().c_out != 1)
        throw std::runtime_error("arch: head must output one channel");
}

namespace {

nlohmann::ordered_json layer_to_json(const DerivedLayer& l) {
    nlohmann::ordered_json j;
    j["resolution"] = l.resolution;
    j["op_kind"] = op_kind_name(l.op.kind);
    j["kernel"] = l.op.kernel;
    j["c_in"] = l.c_in;
    j["c_out"] = l.c_out;
    j["stride"] = l.stride;
    j["dilation"] = l.op.dilation;
    j["input_path"] = l.input_path;
    j["kept_channels"] = l.kept_channels;
    return j;
}

DerivedLayer layer_from_json(const nlohmann::json& j) {
    DerivedLayer l;
    l.op.kind = op_kind_from_name(j.at("op_kind").get<std::string>());
    l.op.kernel = j.at("kernel").get<int>();
    l.op.dilation = j.at("dilation").get<int>();
    l.c_in = j.at("c_in").get<int>();
    l.c_out = j.at("c_out").get<int>();
    l.stride = j.at("stride").get<int>();
    l.resolution = j.at("resolution").get<int>();
    l.input_path = j.at("input_path").get<int>();
    if (j.contains("kept_channels"))
        l.kept_channels = j.at("kept_channels").get<std::vector<int>>();
    return l;
}

}  // namespace

std::string arch_to_json(const DerivedArch& arch) {
    nlohmann::ordered_json j;
    j["schema"] = "modnas-arch-v1";
    j["stages"] = arch.stages;
    j["init_channels"] = arch.init_channels;
    j["delta"] = arch.delta;
    j["blocks"] = nlohmann::ordered_json::array();
    for (const auto& blk : arch.blocks) {
        nlohmann::ordered_json b;
        b["name"] = blk.name;
        b["has_fusion"] = blk.has_fusion;
        b["layers"] = nlohmann::ordered_json::array();
        for (const auto& l : blk.layers) b["layers"].push_back(layer_to_json(l));
        j["blocks"].push_back(std::move(b));
    }
    return j.dump(2) + "\n";
}

DerivedArch arch_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("arch_from_json: parse error: ") + e.what());
    }
    if (j.value("schema", "") != "modnas-arch-v1")
        throw std::runtime_error("arch_from_json: unknown schema");
    DerivedArch arch;
    arch.stages = j.at("stages").get<int>();
    arch.init_channels = j.at("init_channels").get<int>();
    arch.delta = j.at("delta").get<std::vector<float>>();
    for (const auto& bj : j.at("blocks")) {
        DerivedBlock blk;
        blk.name = bj.at("name").get<std::string>();
        blk.has_fusion = bj.value("has_fusion", false);
        for (const auto& lj : bj.at("layers")) blk.layers.push_back(layer_from_json(lj));
        arch.blocks.push_back(std::move(blk));
    }
    validate_arch(arch);
    return arch;
}

void export_arch(const DerivedArch& arch, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("export_arch: cannot open '" + path + "'");
    f << arch_to_json(arch);
    if (!f) throw std::runtime_error("export_arch: write failed");
}

DerivedArch import_arch(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("import_arch: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return arch_from_json(text);
}

DerivedNet::DerivedNet(const DerivedArch& arch, uint64_t init_seed) : arch_(arch) {
    validate_arch(arch_);
    std::mt19937_64 rng(init_seed);
    for (int t = 0; t < arch_.stages; ++t) {
        const std::string sp = "stage" + std::to_string(t);
        for (const auto& blk : arch_.blocks) {
            for (size_t i = 0; i < blk.layers.size(); ++i) {
                const DerivedLayer& l = blk.layers[i];
                if (l.op.kind == OpKind::skip) continue;
                const bool sampler = block_has_sampler_by_name(blk.name) &&
                                     blk.name != "stem" && blk.name != "head" &&
                                     i + 1 == blk.layers.size();
                const LayerKind kind = !sampler                  ? LayerKind::NL
                                       : (blk.name[0] == 'e')    ? LayerKind::DSL
                                                                 : LayerKind::USL;
                register_candidate(store_, sp + "." + blk.name + ".l" + std::to_string(i),
                                   l.op, l.c_in, l.c_out, kind, rng);
            }
        }
    }
    for (int t = 0; t < arch_.stages; ++t) {
        auto d = store_.create("arch.delta" + std::to_string(t), {1, 1, 1, 1});
        const float p = arch_.delta[t];
        d->values[0] = std::log(p / (1.0f - p));  // sigmoid(raw) == delta
    }
}

TensorPtr DerivedNet::denoiser_forward(Tape& tape, const TensorPtr& x, int stage) const {
    if (x->shape.c != 1)
        throw std::invalid_argument("DerivedNet: expected single-channel input");
    if (x->shape.h % 8 != 0 || x->shape.w % 8 != 0)
        throw std::invalid_argument("DerivedNet: spatial size must be divisible by 8, got " +
                                    x->shape.str());
    const std::string sp = "stage" + std::to_string(stage);
    TensorPtr h = x;
    std::vector<TensorPtr> eb_first(arch_.blocks.size());  // skip taps, by encoder index
    std::vector<TensorPtr> eb_input(arch_.blocks.size());

    int eb_count = 0;
    for (const auto& blk : arch_.blocks) {
        if (blk.name == "stem") {
            h = conv2d(tape, h, store_.get(sp + ".stem.l0.w"), store_.get(sp + ".stem.l0.b"));
            h = candidate_forward(tape, store_, sp + ".stem.l1", blk.layers[1].op, blk.layers[1].c_in,
                                  blk.layers[1].c_out, LayerKind::NL, h);
            continue;
        }
        if (blk.name == "head") {
            const DerivedLayer& l = blk.layers[0];
            h = candidate_forward(tape, store_, sp + ".head.l0", l.op, l.c_in, l.c_out,
                                  LayerKind::NL, h);
            h = add(tape, h, x);  // global residual around the denoiser
            continue;
        }
        const bool is_encoder = blk.name[0] == 'e';
        if (is_encoder) eb_input[eb_count] = h;
        size_t layer0 = 0;
        if (blk.has_fusion) {
            const DerivedLayer& f = blk.layers[0];
            const int d = blk.name[2] - '0';       // db1..db3
            const int eb = 3 - d;
            const int need = f.c_in - h->shape.c;
            TensorPtr skip = eb_first[eb];
            if (!skip || skip->shape.c < need) skip = eb_input[eb];
            if (!skip || skip->shape.c < need)
                throw std::runtime_error("DerivedNet: no encoder tap provides " +
                                         std::to_string(need) + " skip channels for " + blk.name);
            if (skip->shape.c > need) skip = slice_channels(tape, skip, 0, need);
            auto cat = concat_channels(tape, h, skip);
            h = conv2d(tape, cat, store_.get(sp + "." + blk.name + ".l0.w"),
                       store_.get(sp + "." + blk.name + ".l0.b"));
            layer0 = 1;
        }
        const bool has_sampler = block_has_sampler_by_name(blk.name);
        for (size_t i = layer0; i < blk.layers.size(); ++i) {
            const DerivedLayer& l = blk.layers[i];
            const bool sampler = has_sampler && i + 1 == blk.layers.size();
            const LayerKind kind = !sampler ? LayerKind::NL
                                   : is_encoder ? LayerKind::DSL
                                                : LayerKind::USL;
            h = candidate_forward(tape, store_, sp + "." + blk.name + ".l" + std::to_string(i),
                                  l.op, l.c_in, l.c_out, kind, h);
            // the skip tap is the first normal layer's output only when that
            // layer survived derivation (input_path 1 marks the original first
            // layer); otherwise the block input stands in
            if (is_encoder && i == layer0 && l.input_path == 1) eb_first[eb_count] = h;
        }
        if (is_encoder) {
            if (!eb_first[eb_count]) eb_first[eb_count] = eb_input[eb_count];
            ++eb_count;
        }
    }
    return h;
}

TensorPtr DerivedNet::forward(Tape& tape, const TensorPtr& y) const {
    TensorPtr x = y;
    for (int t = 0; t < arch_.stages; ++t) {
        auto v = denoiser_forward(tape, x, t);
        auto delta = sigmoid(tape, store_.get("arch.delta" + std::to_string(t)));
        x = lerp(tape, y, v, delta);
    }
    return x;
}

}  // namespace modnas
