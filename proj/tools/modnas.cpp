// Command-line surface: search -> derive -> train -> eval -> count.
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "modnas/config.hpp"
#include "modnas/derive.hpp"
#include "modnas/metrics.hpp"
#include "modnas/search.hpp"

namespace fs = std::filesystem;
using namespace modnas;

namespace {

struct Overrides {
    std::string config_path;
    std::string out;
    std::string arch;
    std::string checkpoint;
    int64_t seed = -1;
    int epochs = -1;
    int stages = -1;
    double sigma = -1.0;
    int start_epoch = 0;
};

RunConfig resolve_config(const Overrides& o, const std::string& mode) {
    RunConfig cfg = load_config(o.config_path);
    cfg.mode = mode;
    if (!o.out.empty()) cfg.out_dir = o.out;
    if (!o.arch.empty()) cfg.arch_path = o.arch;
    if (!o.checkpoint.empty()) cfg.checkpoint = o.checkpoint;
    if (o.seed >= 0) {
        cfg.search.seed = static_cast<uint64_t>(o.seed);
        cfg.train.seed = static_cast<uint64_t>(o.seed);
    }
    if (o.epochs >= 0) cfg.search.epochs = o.epochs;
    if (o.stages >= 0) cfg.search.stages = o.stages;
    if (o.sigma >= 0.0) {
        cfg.search.sigma_8bit = static_cast<float>(o.sigma);
        cfg.train.sigma_8bit = static_cast<float>(o.sigma);
    }
    fs::create_directories(cfg.out_dir);
    return cfg;
}

SupernetConfig supernet_config(const SearchConfig& s) {
    SupernetConfig sc;
    sc.stages = s.stages;
    sc.unet.init_channels = s.channels;
    return sc;
}

std::vector<ImageU8> manifest_images(const RunConfig& cfg, bool test_set) {
    if (cfg.manifest.empty()) throw std::runtime_error("config: manifest path required");
    Manifest m = load_manifest(cfg.manifest);
    const auto& list = test_set ? m.test : m.train;
    if (list.empty())
        throw std::runtime_error(std::string("manifest: empty ") +
                                 (test_set ? "test" : "train") + " list");
    return load_images(list);
}

int run_search_mode(const RunConfig& cfg, int start_epoch) {
    auto images = manifest_images(cfg, false);
    Supernet net(supernet_config(cfg.search), cfg.search.seed);
    if (!cfg.checkpoint.empty()) checkpoint_load(net.store(), cfg.checkpoint);
    SearchLog log = run_search(net, images, cfg.search, cfg.out_dir, start_epoch);
    write_text_file(cfg.out_dir + "/search_log.csv", log_to_csv(log));
    std::cout << "search: " << log.records.size() << " epochs, final val PSNR "
              << (log.records.empty() ? 0.0 : log.records.back().val_psnr) << " dB\n";
    return 0;
}

int run_derive_mode(const RunConfig& cfg) {
    Supernet net(supernet_config(cfg.search), cfg.search.seed);
    if (!cfg.checkpoint.empty()) checkpoint_load(net.store(), cfg.checkpoint);
    DerivedArch arch = derive_architecture(net, {});
    const std::string out =
        cfg.arch_path.empty() ? cfg.out_dir + "/arch.json" : cfg.arch_path;
    export_arch(arch, out);
    std::cout << "derive: wrote " << out << " (" << count_params(arch) << " params)\n";
    return 0;
}

int run_train_mode(const RunConfig& cfg) {
    if (cfg.arch_path.empty()) throw std::runtime_error("train: arch_path required");
    DerivedArch arch = import_arch(cfg.arch_path);
    DerivedNet net(arch, cfg.train.seed);
    auto images = manifest_images(cfg, false);
    auto records = train_derived(net, images, cfg.train);
    checkpoint_save(net.store(), cfg.out_dir + "/derived.ckpt");
    std::string csv = "step,loss\n";
    char buf[64];
    for (const auto& [step, loss] : records) {
        std::snprintf(buf, sizeof(buf), "%d,%.10g\n", step, loss);
        csv += buf;
    }
    write_text_file(cfg.out_dir + "/train_log.csv", csv);
    std::cout << "train: " << cfg.train.steps << " steps, final loss "
              << (records.empty() ? 0.0 : records.back().second) << "\n";
    return 0;
}

int run_eval_mode(const RunConfig& cfg) {
    if (cfg.arch_path.empty()) throw std::runtime_error("eval: arch_path required");
    DerivedArch arch = import_arch(cfg.arch_path);
    DerivedNet net(arch, cfg.train.seed);
    if (!cfg.checkpoint.empty()) checkpoint_load(net.store(), cfg.checkpoint);
    auto images = manifest_images(cfg, true);
    auto pairs = make_noisy_pairs(images, cfg.train.sigma_8bit, cfg.train.seed, 5);

    nlohmann::ordered_json out;
    out["images"] = nlohmann::ordered_json::array();
    double sum_psnr = 0, sum_noisy = 0, sum_ssim = 0;
    for (size_t i = 0; i < pairs.size(); ++i) {
        FloatImage den = denoise_image(net, pairs[i].noisy);
        const double p = psnr(den, pairs[i].clean, cfg.metrics);
        const double pn = psnr(pairs[i].noisy, pairs[i].clean, cfg.metrics);
        const double s = ssim(den, pairs[i].clean, cfg.metrics);
        nlohmann::ordered_json rec;
        rec["index"] = i;
        rec["psnr_noisy_db"] = pn;
        rec["psnr_db"] = p;
        rec["ssim"] = s;
        out["images"].push_back(std::move(rec));
        sum_psnr += p;
        sum_noisy += pn;
        sum_ssim += s;
    }
    const double n = static_cast<double>(pairs.size());
    out["average"] = {{"psnr_noisy_db", sum_noisy / n},
                      {"psnr_db", sum_psnr / n},
                      {"ssim", sum_ssim / n}};
    out["params"] = count_params(arch);
    out["macs"] = count_macs(arch, cfg.metrics.h_ref, cfg.metrics.w_ref);
    write_text_file(cfg.out_dir + "/eval.json", out.dump(2) + "\n");
    std::cout << "eval: avg PSNR " << sum_psnr / n << " dB (noisy " << sum_noisy / n
              << " dB), avg SSIM " << sum_ssim / n << "\n";
    return 0;
}

int run_count_mode(const RunConfig& cfg) {
    if (cfg.arch_path.empty()) throw std::runtime_error("count: arch_path required");
    DerivedArch arch = import_arch(cfg.arch_path);
    std::cout << "params: " << count_params(arch) << "\n"
              << "macs@" << cfg.metrics.h_ref << "x" << cfg.metrics.w_ref << ": "
              << count_macs(arch, cfg.metrics.h_ref, cfg.metrics.w_ref) << "\n";
    return 0;
}

void add_common(CLI::App* sub, Overrides& o) {
    sub->add_option("--config", o.config_path, "run configuration JSON")->required();
    sub->add_option("--out", o.out, "output directory override");
    sub->add_option("--arch", o.arch, "architecture file override");
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint path override");
    sub->add_option("--seed", o.seed, "seed override");
    sub->add_option("--epochs", o.epochs, "search epoch override");
    sub->add_option("--stages", o.stages, "stage count override");
    sub->add_option("--sigma", o.sigma, "noise sigma override (8-bit scale)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MoD-NAS: differentiable architecture search for unfolded denoising"};
    app.require_subcommand(1);
    Overrides o;
    auto* search = app.add_subcommand("search", "bi-level supernet search");
    auto* derive = app.add_subcommand("derive", "extract the discrete architecture");
    auto* train = app.add_subcommand("train", "train a derived network");
    auto* eval = app.add_subcommand("eval", "evaluate on the test set");
    auto* count = app.add_subcommand("count", "print params and MACs");
    for (auto* sub : {search, derive, train, eval, count}) add_common(sub, o);
    search->add_option("--start-epoch", o.start_epoch, "resume epoch (state from --checkpoint)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (search->parsed()) return run_search_mode(resolve_config(o, "search"), o.start_epoch);
        if (derive->parsed()) return run_derive_mode(resolve_config(o, "derive"));
        if (train->parsed()) return run_train_mode(resolve_config(o, "train"));
        if (eval->parsed()) return run_eval_mode(resolve_config(o, "eval"));
        if (count->parsed()) return run_count_mode(resolve_config(o, "count"));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
