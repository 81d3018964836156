#pragma once

#include "modnas/metrics.hpp"
#include "modnas/search.hpp"

namespace modnas {

/// One JSON file drives every CLI mode; unused sections keep their defaults.
struct RunConfig {
    std::string mode = "search";   // search | derive | train | eval | count
    std::string manifest;          // dataset manifest (JSON {train:[], test:[]})
    std::string out_dir = ".";
    std::string arch_path;         // derive output; train/eval/count input
    std::string checkpoint;        // derive input; search resume; eval weights
    SearchConfig search;
    TrainConfig train;
    MetricsConfig metrics;
};

RunConfig config_from_json(const std::string& text);
std::string config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::string& path);

struct Manifest {
    std::vector<std::string> train;  // resolved absolute/relative paths
    std::vector<std::string> test;
};

/// Paths inside the manifest resolve relative to the manifest's directory.
Manifest load_manifest(const std::string& path);

std::vector<ImageU8> load_images(const std::vector<std::string>& paths);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace modnas
