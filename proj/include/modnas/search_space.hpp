#pragma once

#include <random>
#include <string>
#include <vector>

#include "modnas/optim.hpp"
#include "modnas/ops.hpp"

namespace modnas {

enum class LayerKind { NL, DSL, USL };

enum class OpKind {
    conv,
    separable_conv,
    dilated_conv,
    residual_block,
    skip,
    strided_conv,
    deconv,
    interp_nearest,
    interp_bilinear,
    interp_area,
    pixel_repeat,
};

std::string op_kind_name(OpKind k);
OpKind op_kind_from_name(const std::string& s);

struct OpSpec {
    OpKind kind = OpKind::conv;
    int kernel = 3;
    int dilation = 1;

    bool has_params() const { return kind != OpKind::skip; }
};

struct CandidateSet {
    LayerKind layer_kind = LayerKind::NL;
    std::vector<OpSpec> candidates;
};

/// Default candidate sets: 7 normal-layer, 4 down-sampling, 5 up-sampling
/// operations. Override via the run config if needed.
CandidateSet default_candidates(LayerKind kind);

struct UNetSpec {
    int init_channels = 48;      // C
    int encode_blocks = 3;
    int decode_blocks = 4;
    int layers_per_block = 3;    // normal layers per block
    CandidateSet nl = default_candidates(LayerKind::NL);
    CandidateSet dsl = default_candidates(LayerKind::DSL);
    CandidateSet usl = default_candidates(LayerKind::USL);
};

struct SupernetConfig {
    int stages = 2;              // T
    UNetSpec unet;
    bool share_stages = false;   // one shared architecture always; weights shared only if true
};

/// Registers the parameters of one candidate operation under prefix and
/// initializes conv kernels with Kaiming fan-in scaling, biases with zero.
void register_candidate(ParamStore& store, const std::string& prefix, const OpSpec& spec,
                        int c_in, int c_out, LayerKind kind, std::mt19937_64& rng);

/// Applies one candidate operation. Every conv weight application is
/// preceded by a ReLU; interpolation candidates end in a plain 1x1 conv for
/// channel conversion; skip is the identity and requires c_in == c_out.
TensorPtr candidate_forward(Tape& tape, const ParamStore& store, const std::string& prefix,
                            const OpSpec& spec, int c_in, int c_out, LayerKind kind,
                            const TensorPtr& x);

/// z = sum_o softmax(alpha)_o * (beta^o ⊙ o(x)). weight_prefix addresses the
/// candidates' weights, arch_prefix the alpha/beta parameters.
TensorPtr mixed_layer_forward(Tape& tape, const ParamStore& store,
                              const std::string& weight_prefix, const std::string& arch_prefix,
                              const CandidateSet& set, int c_in, int c_out, const TensorPtr& x);

struct DenseBlockOut {
    TensorPtr out;     // L of the last layer, feeds the block's sampler
    TensorPtr first;   // L of the first normal layer (encoder skip source)
};

/// Densely connected stack of normal layers: L_l mixes all earlier outputs
/// plus the layer's own mixed-operation output under softmax(gamma).
DenseBlockOut dense_block_forward(Tape& tape, const ParamStore& store,
                                  const std::string& weight_prefix, const std::string& arch_prefix,
                                  const CandidateSet& nl, int channels, const TensorPtr& block_input);

/// Searchable U-net denoiser unfolded T times under the iterative
/// regularization update x_t = delta_t*y + (1-delta_t)*f_t(x_{t-1}).
class Supernet {
public:
    Supernet(const SupernetConfig& cfg, uint64_t init_seed);

    /// One denoiser stage, (N,1,H,W) -> (N,1,H,W); H, W divisible by 8.
    TensorPtr denoiser_forward(Tape& tape, const TensorPtr& x, int stage) const;

    /// Full unfolded forward over all stages.
    TensorPtr forward(Tape& tape, const TensorPtr& y) const;

    const SupernetConfig& config() const { return cfg_; }
    ParamStore& store() { return store_; }
    const ParamStore& store() const { return store_; }

    // Hierarchical name pieces shared with the derivation module.
    static std::string weight_prefix(int stage) { return "stage" + std::to_string(stage); }
    static std::string block_name(int block);          // eb0..eb2, db0..db3
    int num_blocks() const { return cfg_.unet.encode_blocks + cfg_.unet.decode_blocks; }
    bool block_is_encoder(int block) const { return block < cfg_.unet.encode_blocks; }
    bool block_has_sampler(int block) const { return block != num_blocks() - 1; }
    bool block_has_fusion(int block) const {
        return !block_is_encoder(block) && block != cfg_.unet.encode_blocks;
    }
    const CandidateSet& sampler_set(int block) const {
        return block_is_encoder(block) ? cfg_.unet.dsl : cfg_.unet.usl;
    }

private:
    SupernetConfig cfg_;
    ParamStore store_;

    void build(uint64_t init_seed);
};

}  // namespace modnas
