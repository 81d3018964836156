// Regenerates the bundled synthetic desk-scale dataset (PGM images plus a
// JSON manifest). Run from the repository root: gen_dataset data/desk
#include <filesystem>
#include <fstream>
#include <iostream>

#include "modnas/image.hpp"

int main(int argc, char** argv) {
    const std::string dir = argc > 1 ? argv[1] : "data/desk";
    const int train_count = 16, test_count = 4, size = 64;
    try {
        std::filesystem::create_directories(dir);
        std::string train = "", test = "";
        for (int i = 0; i < train_count + test_count; ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "img_%02d.pgm", i);
            modnas::write_pgm(modnas::synthetic_image(i, size), dir + "/" + name);
            std::string& list = i < train_count ? train : test;
            if (!list.empty()) list += ", ";
            list += std::string("\"") + name + "\"";
        }
        std::ofstream m(dir + "/manifest.json", std::ios::trunc);
        m << "{\n  \"train\": [" << train << "],\n  \"test\": [" << test << "]\n}\n";
        if (!m) throw std::runtime_error("manifest write failed");
    } catch (const std::exception& e) {
        std::cerr << "gen_dataset: " << e.what() << "\n";
        return 1;
    }
    std::cout << "wrote " << train_count << "+" << test_count << " images to " << dir << "\n";
    return 0;
}
