#include "modnas/search.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "modnas/metrics.hpp"

namespace modnas {

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
    // splitmix64 finalizer over the combined words
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::string log_to_csv(const SearchLog& log) {
    std::string out = "epoch,lr_w,lr_a,loss,val_psnr\n";
    char buf[160];
    for (const auto& r : log.records) {
        std::snprintf(buf, sizeof(buf), "%d,%.8g,%.8g,%.10g,%.10g\n", r.epoch,
                      static_cast<double>(r.lr_w), static_cast<double>(r.lr_a), r.loss,
                      r.val_psnr);
        out += buf;
    }
    return out;
}

DatasetSplit split_dataset(const std::vector<ImageU8>& images, uint64_t seed) {
    if (images.size() < 2)
        throw std::invalid_argument("split_dataset: need at least 2 images");
    std::vector<size_t> order(images.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(seed, 0x5011ULL));
    std::shuffle(order.begin(), order.end(), rng);
    DatasetSplit split;
    const size_t half = (images.size() + 1) / 2;
    for (size_t i = 0; i < order.size(); ++i)
        (i < half ? split.train_w : split.train_a).push_back(images[order[i]]);
    split.val = split.train_a;
    return split;
}

std::vector<ImagePair> make_noisy_pairs(const std::vector<ImageU8>& images, float sigma_8bit,
                                        uint64_t seed, uint64_t salt) {
    std::vector<ImagePair> pairs;
    pairs.reserve(images.size());
    for (size_t i = 0; i < images.size(); ++i)
        pairs.push_back(add_gaussian_noise(
            images[i], {sigma_8bit, mix_seed(seed, salt * 1000003ULL + i)}));
    return pairs;
}

namespace {

int epoch_iterations(const std::vector<ImagePair>& pairs, int patch, int batch) {
    // one epoch covers roughly every non-overlapping patch tile once
    int64_t tiles = 0;
    for (const auto& p : pairs)
        tiles += static_cast<int64_t>(p.clean.height / patch) * (p.clean.width / patch);
    return static_cast<int>(std::max<int64_t>(1, (tiles + batch - 1) / batch));
}

double train_step(Supernet& net, const PatchBatch& batch, const std::string& group, float lr,
                  const OptimizerConfig& opt) {
    Tape tape;
    auto out = net.forward(tape, batch.noisy);
    auto loss = mse_loss(tape, out, batch.clean);
    tape.backward(loss);
    adam_step_group(net.store(), group, lr, opt);
    net.store().zero_grads();
    return loss->values[0];
}

}  // namespace

double search_epoch(Supernet& net, const std::vector<ImagePair>& train_w,
                    const std::vector<ImagePair>& train_a, const SearchConfig& cfg, int epoch) {
    if (train_w.empty() || train_a.empty())
        throw std::invalid_argument("search_epoch: empty split partition");
    if (epoch >= cfg.epochs)
        throw std::invalid_argument("search_epoch: epoch beyond the configured budget");
    OptimizerConfig ow = cfg.opt_w, oa = cfg.opt_a;
    ow.total_epochs = oa.total_epochs = cfg.epochs;
    const float lr_w = cosine_lr(epoch, ow);
    const float lr_a = cosine_lr(epoch, oa);

    std::mt19937_64 rng_w(mix_seed(cfg.seed, 2ULL * epoch));
    std::mt19937_64 rng_a(mix_seed(cfg.seed, 2ULL * epoch + 1));
    const int iters = epoch_iterations(train_w, cfg.patch, cfg.batch);

    double loss_sum = 0.0;
    for (int it = 0; it < iters; ++it) {
        auto bw = sample_patches(train_w, cfg.patch, cfg.batch, rng_w);
        loss_sum += train_step(net, bw, "stage", lr_w, ow);
        if (epoch >= cfg.warmup_epochs) {
            auto ba = sample_patches(train_a, cfg.patch, cfg.batch, rng_a);
            train_step(net, ba, "arch", lr_a, oa);
        }
    }
    return loss_sum / iters;
}

namespace {

template <class Net>
FloatImage denoise_impl(const Net& net, const FloatImage& noisy) {
    Tape tape;
    tape.set_recording(false);
    auto out = net.forward(tape, image_to_tensor(noisy));
    return tensor_to_image(*out);
}

}  // namespace

FloatImage denoise_image(const DerivedNet& net, const FloatImage& noisy) {
    return denoise_impl(net, noisy);
}

FloatImage denoise_image(const Supernet& net, const FloatImage& noisy) {
    return denoise_impl(net, noisy);
}

double evaluate_supernet(const Supernet& net, const std::vector<ImagePair>& val, int limit) {
    if (val.empty()) throw std::invalid_argument("evaluate_supernet: empty validation set");
    const size_t n = (limit > 0 && static_cast<size_t>(limit) < val.size())
                         ? static_cast<size_t>(limit)
                         : val.size();
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i)
        sum += psnr(denoise_image(net, val[i].noisy), val[i].clean);
    return sum / static_cast<double>(n);
}

SearchLog run_search(Supernet& net, const std::vector<ImageU8>& images, const SearchConfig& cfg,
                     const std::string& out_dir, int start_epoch) {
    if (cfg.warmup_epochs >= cfg.epochs)
        throw std::invalid_argument("run_search: warmup must be shorter than the epoch budget");
    if (cfg.patch % 8 != 0)
        throw std::invalid_argument("run_search: patch size must be divisible by 8");
    DatasetSplit split = split_dataset(images, cfg.seed);
    auto pairs_w = make_noisy_pairs(split.train_w, cfg.sigma_8bit, cfg.seed, 1);
    auto pairs_a = make_noisy_pairs(split.train_a, cfg.sigma_8bit, cfg.seed, 2);
    auto pairs_val = make_noisy_pairs(split.val, cfg.sigma_8bit, cfg.seed, 3);

    SearchLog log;
    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        OptimizerConfig ow = cfg.opt_w, oa = cfg.opt_a;
        ow.total_epochs = oa.total_epochs = cfg.epochs;
        rec.lr_w = cosine_lr(epoch, ow);
        rec.lr_a = cosine_lr(epoch, oa);
        rec.loss = search_epoch(net, pairs_w, pairs_a, cfg, epoch);
        rec.val_psnr = evaluate_supernet(net, pairs_val, cfg.max_val_images);
        log.records.push_back(rec);
        if (!out_dir.empty() && cfg.checkpoint_every > 0 &&
            (epoch + 1) % cfg.checkpoint_every == 0)
            checkpoint_save(net.store(),
                            out_dir + "/search_epoch" + std::to_string(epoch + 1) + ".ckpt");
    }
    if (!out_dir.empty()) checkpoint_save(net.store(), out_dir + "/search_final.ckpt");
    return log;
}

std::vector<std::pair<int, double>> train_derived(DerivedNet& net,
                                                  const std::vector<ImageU8>& images,
                                                  const TrainConfig& cfg) {
    if (images.empty()) throw std::invalid_argument("train_derived: no training images");
    if (cfg.patch % 8 != 0)
        throw std::invalid_argument("train_derived: patch size must be divisible by 8");
    auto pairs = make_noisy_pairs(images, cfg.sigma_8bit, cfg.seed, 4);
    std::mt19937_64 rng(mix_seed(cfg.seed, 0x7417ULL));
    OptimizerConfig opt = cfg.opt;
    opt.total_epochs = cfg.steps;

    std::vector<std::pair<int, double>> records;
    for (int step = 0; step < cfg.steps; ++step) {
        const float lr = cosine_lr(step, opt);
        auto batch = sample_patches(pairs, cfg.patch, cfg.batch, rng);
        Tape tape;
        auto out = net.forward(tape, batch.noisy);
        auto loss = mse_loss(tape, out, batch.clean);
        tape.backward(loss);
        adam_step_group(net.store(), "", lr, opt);
        net.store().zero_grads();
        if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step + 1 == cfg.steps))
            records.emplace_back(step, static_cast<double>(loss->values[0]));
    }
    return records;
}

}  // namespace modnas
