#pragma once

#include "modnas/search_space.hpp"

namespace modnas {

struct WidthDerivationConfig {
    float coverage = 0.90f;   // fraction of total |beta| mass to preserve
    int n = 3;                // widths are multiples of 2^n
};

struct DerivedLayer {
    OpSpec op;
    int c_in = 0;
    int c_out = 0;
    int stride = 1;
    int resolution = 1;             // input spatial divisor relative to the network input
    std::vector<int> kept_channels; // ascending; empty for fixed/skip layers
    int input_path = -1;            // chosen dense path index; -1 for fixed layers
};

struct DerivedBlock {
    std::string name;               // stem, eb0..eb2, db0..db3, head
    bool has_fusion = false;        // first layer is the 3x3 fusion conv over the concat
    std::vector<DerivedLayer> layers;
};

/// A concrete network extracted from trained architecture parameters, or
/// imported from an architecture file. Stage weights are distinct; the
/// architecture is shared across stages.
struct DerivedArch {
    int stages = 1;
    int init_channels = 48;
    std::vector<float> delta;       // per-stage relaxation in (0,1)
    std::vector<DerivedBlock> blocks;
};

/// Eq-style operation selection: argmax of the architecture weights,
/// ties broken by lowest candidate index.
int derive_operation_index(const std::vector<float>& alpha);
OpSpec derive_operation(const std::vector<float>& alpha, const CandidateSet& candidates);

struct WidthResult {
    int m_hat = 0;
    std::vector<int> kept;   // ascending channel indices
    bool degenerate = false; // all-zero beta
};

/// Smallest multiple of 2^n whose top channels (by |beta|, ties by lower
/// index) cover at least the configured fraction of the total mass.
WidthResult derive_width(const std::vector<float>& beta, const WidthDerivationConfig& cfg);

struct DepthResult {
    std::vector<int> input_path;  // per layer l: argmax path in {0..l+1}, l+1 = self
    std::vector<bool> live;       // per layer: op on the chosen chain to the block output
};

/// Path selection plus dead-layer removal by backward reachability from the
/// block's final output. Ties prefer the self path, then the lowest index.
DepthResult derive_depth(const std::vector<std::vector<float>>& gamma);

/// Applies depth, then operation, then width derivation per live layer and
/// reconciles channel widths along the chain.
DerivedArch derive_architecture(const Supernet& net, const WidthDerivationConfig& cfg);

void export_arch(const DerivedArch& arch, const std::string& path);
DerivedArch import_arch(const std::string& path);
std::string arch_to_json(const DerivedArch& arch);
DerivedArch arch_from_json(const std::string& text);

/// Structural validation: block order, channel chaining, resolution bookkeeping.
void validate_arch(const DerivedArch& arch);

/// Trainable instantiation of a DerivedArch with freshly initialized weights
/// (per-stage distinct) and trainable stage relaxations.
class DerivedNet {
public:
    DerivedNet(const DerivedArch& arch, uint64_t init_seed);

    TensorPtr forward(Tape& tape, const TensorPtr& y) const;
    TensorPtr denoiser_forward(Tape& tape, const TensorPtr& x, int stage) const;

    const DerivedArch& arch() const { return arch_; }
    ParamStore& store() { return store_; }
    const ParamStore& store() const { return store_; }

private:
    DerivedArch arch_;
    ParamStore store_;
};

}  // namespace modnas
