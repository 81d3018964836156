#include "modnas/image.hpp"

#include <cmath>
#include <fstream>

namespace modnas {

namespace {

// Reads one PGM header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {}
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

}  // namespace

ImageU8 read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_pgm: cannot open '" + path + "'");
    std::string magic = next_token(f);
    if (magic == "P2")
        throw std::runtime_error("read_pgm: ASCII PGM (P2) is not supported: '" + path + "'");
    if (magic != "P5")
        throw std::runtime_error("read_pgm: not a binary PGM (P5): '" + path + "'");
    ImageU8 img;
    try {
        img.width = std::stoi(next_token(f));
        img.height = std::stoi(next_token(f));
        const int maxval = std::stoi(next_token(f));
        if (maxval != 255)
            throw std::runtime_error("read_pgm: maxval must be 255, got " + std::to_string(maxval));
    } catch (const std::invalid_argument&) {
        throw std::runtime_error("read_pgm: malformed header in '" + path + "'");
    }
    if (img.width <= 0 || img.height <= 0)
        throw std::runtime_error("read_pgm: bad dimensions in '" + path + "'");
    img.pixels.resize(static_cast<size_t>(img.width) * img.height);
    f.read(reinterpret_cast<char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
    if (f.gcount() != static_cast<std::streamsize>(img.pixels.size()))
        throw std::runtime_error("read_pgm: truncated payload in '" + path + "'");
    return img;
}

void write_pgm(const ImageU8& img, const std::string& path) {
    if (img.pixels.size() != static_cast<size_t>(img.width) * img.height)
        throw std::invalid_argument("write_pgm: pixel count does not match dimensions");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("write_pgm: cannot open '" + path + "'");
    f << "P5\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (!f) throw std::runtime_error("write_pgm: write failed for '" + path + "'");
}

ImagePair add_gaussian_noise(const ImageU8& img, const NoiseModel& model) {
    ImagePair p;
    p.clean.width = p.noisy.width = img.width;
    p.clean.height = p.noisy.height = img.height;
    p.clean.v.resize(img.pixels.size());
    p.noisy.v.resize(img.pixels.size());
    std::mt19937_64 rng(model.seed);
    std::normal_distribution<float> noise(0.0f, model.sigma_8bit / 255.0f);
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        p.clean.v[i] = static_cast<float>(img.pixels[i]) / 255.0f;
        p.noisy.v[i] = p.clean.v[i] + noise(rng);
    }
    return p;
}

PatchBatch sample_patches(const std::vector<ImagePair>& pairs, int patch, int count,
                          std::mt19937_64& rng) {
    if (pairs.empty()) throw std::invalid_argument("sample_patches: empty pair list");
    if (patch % 8 != 0) throw std::invalid_argument("sample_patches: patch must be divisible by 8");
    for (const auto& p : pairs)
        if (p.clean.width < patch || p.clean.height < patch)
            throw std::invalid_argument("sample_patches: image smaller than patch size");
    PatchBatch batch;
    batch.clean = make_tensor({count, 1, patch, patch});
    batch.noisy = make_tensor({count, 1, patch, patch});
    for (int n = 0; n < count; ++n) {
        const auto& p = pairs[rng() % pairs.size()];
        const int max_y = p.clean.height - patch;
        const int max_x = p.clean.width - patch;
        const int y0 = max_y > 0 ? static_cast<int>(rng() % (max_y + 1)) : 0;
        const int x0 = max_x > 0 ? static_cast<int>(rng() % (max_x + 1)) : 0;
        for (int y = 0; y < patch; ++y)
            for (int x = 0; x < patch; ++x) {
                batch.clean->at(n, 0, y, x) = p.clean.at(y0 + y, x0 + x);
                batch.noisy->at(n, 0, y, x) = p.noisy.at(y0 + y, x0 + x);
            }
    }
    return batch;
}

TensorPtr image_to_tensor(const FloatImage& img) {
    auto t = make_tensor({1, 1, img.height, img.width});
    t->values = img.v;
    return t;
}

FloatImage tensor_to_image(const Tensor4D& t, int batch_index) {
    if (t.shape.c != 1)
        throw std::invalid_argument("tensor_to_image: expected single-channel tensor");
    FloatImage img;
    img.width = t.shape.w;
    img.height = t.shape.h;
    img.v.assign(t.values.begin() + t.idx(batch_index, 0, 0, 0),
                 t.values.begin() + t.idx(batch_index, 0, 0, 0) + img.width * img.height);
    return img;
}

ImageU8 float_to_u8(const FloatImage& img) {
    ImageU8 out;
    out.width = img.width;
    out.height = img.height;
    out.pixels.resize(img.v.size());
    for (size_t i = 0; i < img.v.size(); ++i) {
        float x = img.v[i];
        x = x < 0.0f ? 0.0f : (x > 1.0f ? 1.0f : x);
        out.pixels[i] = static_cast<uint8_t>(std::lround(x * 255.0f));
    }
    return out;
}

ImageU8 synthetic_image(int index, int size) {
    ImageU8 img;
    img.width = img.height = size;
    img.pixels.resize(static_cast<size_t>(size) * size);
    const float s = static_cast<float>(size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const float u = x / s, v = y / s;
            float g = 0.0f;
            switch (index % 4) {
                case 0: {  // tilted linear gradient
                    const float a = 0.3f + 0.15f * (index / 4);
                    g = a * u + (1.0f - a) * v;
                    break;
                }
                case 1: {  // sinusoid texture
                    const float f = 2.0f + static_cast<float>(index / 4);
                    g = 0.5f + 0.35f * std::sin(2.0f * static_cast<float>(M_PI) * f * u) *
                                   std::cos(2.0f * static_cast<float>(M_PI) * f * v);
                    break;
                }
                case 2: {  // soft checkerboard
                    const int cells = 2 + index / 4;
                    const int cx = static_cast<int>(u * cells), cy = static_cast<int>(v * cells);
                    g = ((cx + cy) % 2 == 0) ? 0.25f + 0.1f * (index / 4) : 0.75f;
                    break;
                }
                default: {  // radial blob
                    const float cx = 0.35f + 0.1f * (index / 4);
                    const float r2 = (u - cx) * (u - cx) + (v - 0.5f) * (v - 0.5f);
                    g = 0.85f * std::exp(-r2 * (8.0f + 2.0f * (index / 4)));
                    break;
                }
            }
            g = g < 0.0f ? 0.0f : (g > 1.0f ? 1.0f : g);
            img.pixels[static_cast<size_t>(y) * size + x] =
                static_cast<uint8_t>(std::lround(g * 255.0f));
        }
    }
    return img;
}

}  // namespace modnas
