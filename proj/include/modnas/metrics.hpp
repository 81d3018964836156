#pragma once

#include "modnas/derive.hpp"
#include "modnas/image.hpp"

namespace modnas {

struct MetricsConfig {
    float max_value = 1.0f;   // peak signal for normalized images
    int ssim_window = 11;     // Gaussian window size (odd)
    float ssim_sigma = 1.5f;
    float k1 = 0.01f;
    float k2 = 0.03f;
    int h_ref = 128;          // reference input size for MAC counting
    int w_ref = 128;
};

struct MetricsReport {
    double psnr_db = 0.0;
    double ssim = 0.0;
    int64_t params = 0;
    int64_t macs = 0;
};

std::string report_to_json(const MetricsReport& r);

/// 10*log10(max^2 / mse), capped at 100 dB when the images coincide.
double psnr(const FloatImage& a, const FloatImage& b, const MetricsConfig& cfg = {});

/// Mean local structural similarity with a Gaussian window; evaluated over
/// window positions fully inside the image.
double ssim(const FloatImage& a, const FloatImage& b, const MetricsConfig& cfg = {});

/// All weight and bias elements of an instantiated architecture, including
/// the per-stage relaxation scalars.
int64_t count_params(const DerivedArch& arch);

/// Multiply-accumulates of one dense convolution, bias-free:
/// k^2 * (C_in/groups) * C_out * H_out * W_out.
int64_t conv_macs(int kernel, int c_in, int c_out, int h_out, int w_out, int groups = 1);

/// Multiply-accumulates of one forward pass at the reference input size.
/// Convs count C_out*(C_in/groups)*k^2 per output position; transposed convs
/// are counted at their output resolution; interpolation candidates count
/// only their trailing 1x1 conv.
int64_t count_macs(const DerivedArch& arch, int h_ref, int w_ref);

}  // namespace modnas
