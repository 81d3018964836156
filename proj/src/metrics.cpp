#include "modnas/metrics.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

namespace modnas {

std::string report_to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["psnr_db"] = r.psnr_db;
    j["ssim"] = r.ssim;
    j["params"] = r.params;
    j["macs"] = r.macs;
    return j.dump(2) + "\n";
}

double psnr(const FloatImage& a, const FloatImage& b, const MetricsConfig& cfg) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("psnr: image shapes differ");
    double se = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        const double d = static_cast<double>(a.v[i]) - b.v[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.v.size());
    if (mse <= 0.0) return 100.0;
    const double db = 10.0 * std::log10(static_cast<double>(cfg.max_value) * cfg.max_value / mse);
    return db > 100.0 ? 100.0 : db;
}

double ssim(const FloatImage& a, const FloatImage& b, const MetricsConfig& cfg) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("ssim: image shapes differ");
    const int win = cfg.ssim_window;
    if (win < 1 || win % 2 == 0) throw std::invalid_argument("ssim: window must be odd");
    if (a.width < win || a.height < win)
        throw std::invalid_argument("ssim: image smaller than the window");

    std::vector<double> g(static_cast<size_t>(win) * win);
    const double s2 = 2.0 * cfg.ssim_sigma * cfg.ssim_sigma;
    const int half = win / 2;
    double gsum = 0.0;
    for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
            const double dy = y - half, dx = x - half;
            g[static_cast<size_t>(y) * win + x] = std::exp(-(dx * dx + dy * dy) / s2);
            gsum += g[static_cast<size_t>(y) * win + x];
        }
    for (auto& w : g) w /= gsum;

    const double c1 = (cfg.k1 * cfg.max_value) * (cfg.k1 * cfg.max_value);
    const double c2 = (cfg.k2 * cfg.max_value) * (cfg.k2 * cfg.max_value);

    double total = 0.0;
    int count = 0;
    for (int y0 = 0; y0 + win <= a.height; ++y0) {
        for (int x0 = 0; x0 + win <= a.width; ++x0) {
            double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
            for (int y = 0; y < win; ++y)
                for (int x = 0; x < win; ++x) {
                    const double w = g[static_cast<size_t>(y) * win + x];
                    const double va = a.at(y0 + y, x0 + x);
                    const double vb = b.at(y0 + y, x0 + x);
                    mu_a += w * va;
                    mu_b += w * vb;
                    aa += w * va * va;
                    bb += w * vb * vb;
                    ab += w * va * vb;
                }
            const double var_a = aa - mu_a * mu_a;
            const double var_b = bb - mu_b * mu_b;
            const double cov = ab - mu_a * mu_b;
            const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            ++count;
        }
    }
    return total / count;
}

int64_t count_params(const DerivedArch& arch) {
    DerivedNet net(arch, /*init_seed=*/1);
    return net.store().total_elements();
}

int64_t conv_macs(int kernel, int c_in, int c_out, int h_out, int w_out, int groups) {
    if (kernel < 1 || c_in < 1 || c_out < 1 || h_out < 1 || w_out < 1 || groups < 1 ||
        c_in % groups != 0)
        throw std::invalid_argument("conv_macs: bad convolution geometry");
    return static_cast<int64_t>(kernel) * kernel * (c_in / groups) * c_out *
           (static_cast<int64_t>(h_out) * w_out);
}

namespace {

int64_t layer_macs(const DerivedLayer& l, bool is_down_sampler, int h_ref, int w_ref) {
    const int64_t cin = l.c_in, cout = l.c_out, k = l.op.kernel;
    const int r = l.resolution;
    const int64_t hw_in = static_cast<int64_t>(h_ref / r) * (w_ref / r);
    switch (l.op.kind) {
        case OpKind::conv:
        case OpKind::dilated_conv:
            return conv_macs(l.op.kernel, l.c_in, l.c_out, h_ref / r, w_ref / r);
        case OpKind::strided_conv:
            return k * k * cin * cout * hw_in / (is_down_sampler ? 4 : 1);
        case OpKind::separable_conv:
            return (k * k * cin + cin * cout) * hw_in;
        case OpKind::residual_block:
            return (k * k * cin * cout + k * k * cout * cout +
                    (cin != cout ? cin * cout : 0)) * hw_in;
        case OpKind::skip:
            return 0;
        case OpKind::deconv:
            return k * k * cin * cout * hw_in * 4;  // counted at the 2x output
        case OpKind::interp_nearest:
        case OpKind::interp_bilinear:
        case OpKind::interp_area:
        case OpKind::pixel_repeat:
            // the resample itself is free; only the 1x1 conversion conv counts
            return cin * cout * hw_in * (is_down_sampler ? 1 : 4) / (is_down_sampler ? 4 : 1);
    }
    return 0;
}

}  // namespace

int64_t count_macs(const DerivedArch& arch, int h_ref, int w_ref) {
    if (h_ref % 8 != 0 || w_ref % 8 != 0)
        throw std::invalid_argument("count_macs: reference size must be divisible by 8");
    validate_arch(arch);
    int64_t per_stage = 0;
    for (const auto& blk : arch.blocks) {
        const bool has_sampler = blk.name[0] == 'e' || blk.name == "db0" ||
                                 blk.name == "db1" || blk.name == "db2";
        for (size_t i = 0; i < blk.layers.size(); ++i) {
            const bool sampler = has_sampler && i + 1 == blk.layers.size();
            const bool down = sampler && blk.name[0] == 'e';
            per_stage += layer_macs(blk.layers[i], down, h_ref, w_ref);
        }
    }
    return per_stage * arch.stages;
}

}  // namespace modnas
