#pragma once

#include <map>
#include <string>

#include "modnas/tensor.hpp"

namespace modnas {

struct OptimizerConfig {
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float epsilon = 1e-8f;
    float lr_max = 1e-3f;
    float lr_min = 1e-5f;
    int total_epochs = 140;
};

struct ParamEntry {
    TensorPtr tensor;
    std::vector<float> m1;   // first ADAM moment
    std::vector<float> m2;   // second ADAM moment
    int64_t step = 0;
};

/// Named store of trainable tensors with their optimizer state. Names are
/// hierarchical ("stage0.eb1.nl2.cand3.conv0.w"); the "stage"/"arch"
/// prefixes separate the weight set from the architecture set.
class ParamStore {
public:
    TensorPtr create(const std::string& name, Shape4 shape);
    TensorPtr get(const std::string& name) const;
    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    ParamEntry& entry(const std::string& name);

    std::vector<std::string> names_with_prefix(const std::string& prefix) const;
    const std::map<std::string, ParamEntry>& entries() const { return entries_; }
    std::map<std::string, ParamEntry>& entries() { return entries_; }

    void zero_grads();
    int64_t total_elements() const;

private:
    std::map<std::string, ParamEntry> entries_;
};

/// Bias-corrected ADAM update of one entry from the grad slot of its tensor.
void adam_step(ParamStore& store, const std::string& name, float lr,
               const OptimizerConfig& cfg);

/// Update every entry whose name starts with prefix and has a populated grad.
void adam_step_group(ParamStore& store, const std::string& prefix, float lr,
                     const OptimizerConfig& cfg);

/// lr_min + (lr_max - lr_min) * (1 + cos(pi * epoch / total)) / 2.
float cosine_lr(int epoch, const OptimizerConfig& cfg);

/// Checkpoint container: a JSON index (name -> shape, dtype, byte offset)
/// followed by raw little-endian float payloads. Optimizer moments and step
/// counts are stored as auxiliary entries so a resumed run is bit-identical.
void checkpoint_save(const ParamStore& store, const std::string& path);
void checkpoint_load(ParamStore& store, const std::string& path);

}  // namespace modnas
