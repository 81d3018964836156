#include "modnas/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace modnas {

namespace {

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

template <class T>
void pick(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void search_from_json(const nlohmann::json& j, SearchConfig& s) {
    pick(j, "epochs", s.epochs);
    pick(j, "warmup_epochs", s.warmup_epochs);
    pick(j, "batch", s.batch);
    pick(j, "patch", s.patch);
    pick(j, "sigma", s.sigma_8bit);
    pick(j, "stages", s.stages);
    pick(j, "channels", s.channels);
    pick(j, "seed", s.seed);
    pick(j, "checkpoint_every", s.checkpoint_every);
    pick(j, "max_val_images", s.max_val_images);
    pick(j, "lr_max", s.opt_w.lr_max);
    pick(j, "lr_min", s.opt_w.lr_min);
    pick(j, "arch_lr_max", s.opt_a.lr_max);
    pick(j, "arch_lr_min", s.opt_a.lr_min);
}

nlohmann::ordered_json search_to_json(const SearchConfig& s) {
    nlohmann::ordered_json j;
    j["epochs"] = s.epochs;
    j["warmup_epochs"] = s.warmup_epochs;
    j["batch"] = s.batch;
    j["patch"] = s.patch;
    j["sigma"] = s.sigma_8bit;
    j["stages"] = s.stages;
    j["channels"] = s.channels;
    j["seed"] = s.seed;
    j["checkpoint_every"] = s.checkpoint_every;
    j["max_val_images"] = s.max_val_images;
    j["lr_max"] = s.opt_w.lr_max;
    j["lr_min"] = s.opt_w.lr_min;
    j["arch_lr_max"] = s.opt_a.lr_max;
    j["arch_lr_min"] = s.opt_a.lr_min;
    return j;
}

void train_from_json(const nlohmann::json& j, TrainConfig& t) {
    pick(j, "steps", t.steps);
    pick(j, "batch", t.batch);
    pick(j, "patch", t.patch);
    pick(j, "sigma", t.sigma_8bit);
    pick(j, "seed", t.seed);
    pick(j, "log_every", t.log_every);
    pick(j, "lr_max", t.opt.lr_max);
    pick(j, "lr_min", t.opt.lr_min);
}

nlohmann::ordered_json train_to_json(const TrainConfig& t) {
    nlohmann::ordered_json j;
    j["steps"] = t.steps;
    j["batch"] = t.batch;
    j["patch"] = t.patch;
    j["sigma"] = t.sigma_8bit;
    j["seed"] = t.seed;
    j["log_every"] = t.log_every;
    j["lr_max"] = t.opt.lr_max;
    j["lr_min"] = t.opt.lr_min;
    return j;
}

void metrics_from_json(const nlohmann::json& j, MetricsConfig& m) {
    pick(j, "max_value", m.max_value);
    pick(j, "ssim_window", m.ssim_window);
    pick(j, "ssim_sigma", m.ssim_sigma);
    pick(j, "k1", m.k1);
    pick(j, "k2", m.k2);
    pick(j, "h_ref", m.h_ref);
    pick(j, "w_ref", m.w_ref);
}

nlohmann::ordered_json metrics_to_json(const MetricsConfig& m) {
    nlohmann::ordered_json j;
    j["max_value"] = m.max_value;
    j["ssim_window"] = m.ssim_window;
    j["ssim_sigma"] = m.ssim_sigma;
    j["k1"] = m.k1;
    j["k2"] = m.k2;
    j["h_ref"] = m.h_ref;
    j["w_ref"] = m.w_ref;
    return j;
}

}  // namespace

RunConfig config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("config: parse error: ") + e.what());
    }
    RunConfig cfg;
    pick(j, "mode", cfg.mode);
    pick(j, "manifest", cfg.manifest);
    pick(j, "out_dir", cfg.out_dir);
    pick(j, "arch_path", cfg.arch_path);
    pick(j, "checkpoint", cfg.checkpoint);
    if (j.contains("search")) search_from_json(j.at("search"), cfg.search);
    if (j.contains("train")) train_from_json(j.at("train"), cfg.train);
    if (j.contains("metrics")) metrics_from_json(j.at("metrics"), cfg.metrics);
    static const std::vector<std::string> modes = {"search", "derive", "train", "eval", "count"};
    if (std::find(modes.begin(), modes.end(), cfg.mode) == modes.end())
        throw std::runtime_error("config: unknown mode '" + cfg.mode + "'");
    return cfg;
}

std::string config_to_json(const RunConfig& cfg) {
    nlohmann::ordered_json j;
    j["mode"] = cfg.mode;
    j["manifest"] = cfg.manifest;
    j["out_dir"] = cfg.out_dir;
    j["arch_path"] = cfg.arch_path;
    j["checkpoint"] = cfg.checkpoint;
    j["search"] = search_to_json(cfg.search);
    j["train"] = train_to_json(cfg.train);
    j["metrics"] = metrics_to_json(cfg.metrics);
    return j.dump(2) + "\n";
}

RunConfig load_config(const std::string& path) {
    return config_from_json(read_text_file(path));
}

Manifest load_manifest(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("manifest: parse error in '" + path + "': " + e.what());
    }
    const auto base = std::filesystem::path(path).parent_path();
    Manifest m;
    auto resolve = [&](const nlohmann::json& arr, std::vector<std::string>& out) {
        for (const auto& p : arr) {
            std::filesystem::path fp = p.get<std::string>();
            out.push_back(fp.is_absolute() ? fp.string() : (base / fp).string());
        }
    };
    if (j.contains("train")) resolve(j.at("train"), m.train);
    if (j.contains("test")) resolve(j.at("test"), m.test);
    return m;
}

std::vector<ImageU8> load_images(const std::vector<std::string>& paths) {
    std::vector<ImageU8> images;
    images.reserve(paths.size());
    for (const auto& p : paths) images.push_back(read_pgm(p));
    return images;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f << text;
    if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace modnas
