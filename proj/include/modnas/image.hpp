#pragma once

#include <random>
#include <string>
#include <vector>

#include "modnas/tensor.hpp"

namespace modnas {

/// 8-bit grayscale image, row-major.
struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;
};

/// Binary PGM (P5), maxval 255 only.
ImageU8 read_pgm(const std::string& path);
void write_pgm(const ImageU8& img, const std::string& path);

struct FloatImage {
    int width = 0;
    int height = 0;
    std::vector<float> v;

    float& at(int y, int x) { return v[static_cast<size_t>(y) * width + x]; }
    float at(int y, int x) const { return v[static_cast<size_t>(y) * width + x]; }
};

struct NoiseModel {
    float sigma_8bit = 25.0f;
    uint64_t seed = 0;
};

struct ImagePair {
    FloatImage clean;   // pixels / 255
    FloatImage noisy;   // clean + N(0, (sigma/255)^2), unclipped
};

/// Normalizes to [0,1] and adds white Gaussian noise in float space.
ImagePair add_gaussian_noise(const ImageU8& img, const NoiseModel& model);

struct PatchBatch {
    TensorPtr clean;   // (count, 1, patch, patch)
    TensorPtr noisy;
};

/// Uniformly random aligned crops from the pair list, deterministic per rng
/// state. Every image must be at least patch x patch.
PatchBatch sample_patches(const std::vector<ImagePair>& pairs, int patch, int count,
                          std::mt19937_64& rng);

TensorPtr image_to_tensor(const FloatImage& img);
FloatImage tensor_to_image(const Tensor4D& t, int batch_index = 0);

/// Clamp to [0,1] and quantize to 8 bits.
ImageU8 float_to_u8(const FloatImage& img);

/// Deterministic synthetic grayscale pattern (gradients, sinusoid textures,
/// checkerboards, radial blobs) used for the bundled desk-scale dataset.
ImageU8 synthetic_image(int index, int size = 64);

}  // namespace modnas
