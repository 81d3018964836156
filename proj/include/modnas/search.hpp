#pragma once

#include "modnas/derive.hpp"
#include "modnas/image.hpp"
#include "modnas/search_space.hpp"

namespace modnas {

struct DatasetSplit {
    std::vector<ImageU8> train_w;  // weight-update half
    std::vector<ImageU8> train_a;  // architecture-update half
    std::vector<ImageU8> val;      // defaults to the architecture half
};

struct SearchConfig {
    int epochs = 140;
    int warmup_epochs = 40;     // weights only until here
    int batch = 12;
    int patch = 64;
    float sigma_8bit = 25.0f;
    int stages = 2;             // T
    int channels = 48;          // C
    uint64_t seed = 0;
    int checkpoint_every = 20;  // epochs; 0 disables periodic checkpoints
    int max_val_images = 0;     // 0 = evaluate the whole validation set
    OptimizerConfig opt_w;
    OptimizerConfig opt_a;
};

struct EpochRecord {
    int epoch = 0;
    float lr_w = 0.0f;
    float lr_a = 0.0f;
    double loss = 0.0;       // mean training loss over the epoch
    double val_psnr = 0.0;
};

struct SearchLog {
    std::vector<EpochRecord> records;
};

std::string log_to_csv(const SearchLog& log);

/// Deterministic shuffle-and-halve; the halves are disjoint and their sizes
/// differ by at most one.
DatasetSplit split_dataset(const std::vector<ImageU8>& images, uint64_t seed);

/// Fixed per-run noise realizations: pair i is seeded from (seed, salt, i).
std::vector<ImagePair> make_noisy_pairs(const std::vector<ImageU8>& images, float sigma_8bit,
                                        uint64_t seed, uint64_t salt);

/// One alternating-optimization epoch: every iteration ADAM-updates the
/// weight group on a train_w batch and, once past warm-up, the architecture
/// group on a train_a batch. Returns the mean training loss.
double search_epoch(Supernet& net, const std::vector<ImagePair>& train_w,
                    const std::vector<ImagePair>& train_a, const SearchConfig& cfg, int epoch);

/// Mean PSNR of the supernet output over (a prefix of) the fixed validation
/// pairs. Runs without gradient recording.
double evaluate_supernet(const Supernet& net, const std::vector<ImagePair>& val, int limit = 0);

/// Full search: split, frozen noise, cfg.epochs epochs, per-epoch validation,
/// periodic checkpoints under out_dir (empty string disables persistence).
/// start_epoch > 0 resumes a run whose state was already loaded into net.
SearchLog run_search(Supernet& net, const std::vector<ImageU8>& images, const SearchConfig& cfg,
                     const std::string& out_dir, int start_epoch = 0);

struct TrainConfig {
    int steps = 200;
    int batch = 8;
    int patch = 32;
    float sigma_8bit = 25.0f;
    uint64_t seed = 0;
    int log_every = 20;
    OptimizerConfig opt;
};

/// Supervised MSE training of a derived network; returns (step, loss) records.
std::vector<std::pair<int, double>> train_derived(DerivedNet& net,
                                                  const std::vector<ImageU8>& images,
                                                  const TrainConfig& cfg);

/// Whole-image forward passes without gradient recording.
FloatImage denoise_image(const DerivedNet& net, const FloatImage& noisy);
FloatImage denoise_image(const Supernet& net, const FloatImage& noisy);

/// Deterministic seed derivation (splitmix64 over the concatenated words).
uint64_t mix_seed(uint64_t seed, uint64_t salt);

}  // namespace modnas
