#include "modnas/ops.hpp"

#include <cmath>
#include <cstring>

namespace modnas {

namespace {

bool want_grad(const Tape& tape, std::initializer_list<const TensorPtr*> ins) {
    if (!tape.recording()) return false;
    for (auto* p : ins)
        if (*p && (*p)->requires_grad) return true;
    return false;
}

struct ConvDims {
    int k, stride, dilation, groups;
    int cin, cout, cg, mg;       // cg = cin/groups, mg = cout/groups
    int hin, win, hout, wout;
    int pad;
    int patch;                   // cg * k * k
};

ConvDims conv_dims(const Shape4& xs, const Shape4& ws, int stride, int dilation, int groups) {
    ConvDims d;
    d.k = ws.h;
    d.stride = stride;
    d.dilation = dilation;
    d.groups = groups;
    if (stride < 1 || dilation < 1 || groups < 1)
        throw std::invalid_argument("conv2d: stride/dilation/groups must be >= 1");
    if (ws.h != ws.w || ws.h % 2 == 0)
        throw std::invalid_argument("conv2d: kernel must be square and odd, got " +
                                    std::to_string(ws.h) + "x" + std::to_string(ws.w));
    if (xs.c % groups != 0)
        throw std::invalid_argument("conv2d: input channels not divisible by groups");
    if (ws.c != xs.c / groups)
        throw std::invalid_argument("conv2d: weight expects " + std::to_string(ws.c) +
                                    " input channels per group, input has " +
                                    std::to_string(xs.c / groups));
    if (ws.n % groups != 0)
        throw std::invalid_argument("conv2d: output channels not divisible by groups");
    d.cin = xs.c;
    d.cout = ws.n;
    d.cg = xs.c / groups;
    d.mg = ws.n / groups;
    d.hin = xs.h;
    d.win = xs.w;
    d.pad = dilation * (d.k - 1) / 2;
    d.hout = (xs.h + stride - 1) / stride;
    d.wout = (xs.w + stride - 1) / stride;
    d.patch = d.cg * d.k * d.k;
    return d;
}

// colsT layout: [hout*wout][cg*k*k], one batch item, one channel group.
void im2col_t(const Tensor4D& x, const ConvDims& d, int n, int g, float* colsT) {
    const int c0 = g * d.cg;
    for (int oh = 0; oh < d.hout; ++oh) {
        for (int ow = 0; ow < d.wout; ++ow) {
            float* row = colsT + (static_cast<size_t>(oh) * d.wout + ow) * d.patch;
            int p = 0;
            for (int ci = 0; ci < d.cg; ++ci) {
                const float* xc = &x.values[x.idx(n, c0 + ci, 0, 0)];
                for (int kh = 0; kh < d.k; ++kh) {
                    const int ih = oh * d.stride - d.pad + kh * d.dilation;
                    for (int kw = 0; kw < d.k; ++kw, ++p) {
                        const int iw = ow * d.stride - d.pad + kw * d.dilation;
                        row[p] = (ih >= 0 && ih < d.hin && iw >= 0 && iw < d.win)
                                     ? xc[static_cast<size_t>(ih) * d.win + iw]
                                     : 0.0f;
                    }
                }
            }
        }
    }
}

// Adjoint of im2col_t: scatter-add colsT rows back into dx.
void col2im_t(const float* colsT, const ConvDims& d, int n, int g, Tensor4D& dx) {
    const int c0 = g * d.cg;
    for (int oh = 0; oh < d.hout; ++oh) {
        for (int ow = 0; ow < d.wout; ++ow) {
            const float* row = colsT + (static_cast<size_t>(oh) * d.wout + ow) * d.patch;
            int p = 0;
            for (int ci = 0; ci < d.cg; ++ci) {
                float* gc = &dx.grad[dx.idx(n, c0 + ci, 0, 0)];
                for (int kh = 0; kh < d.k; ++kh) {
                    const int ih = oh * d.stride - d.pad + kh * d.dilation;
                    for (int kw = 0; kw < d.k; ++kw, ++p) {
                        const int iw = ow * d.stride - d.pad + kw * d.dilation;
                        if (ih >= 0 && ih < d.hin && iw >= 0 && iw < d.win)
                            gc[static_cast<size_t>(ih) * d.win + iw] += row[p];
                    }
                }
            }
        }
    }
}

void conv_forward_kernel(const Tensor4D& x, const Tensor4D& w, const Tensor4D* b,
                         const ConvDims& d, Tensor4D& out, std::vector<float>& colsT) {
    const int npos = d.hout * d.wout;
    for (int n = 0; n < x.shape.n; ++n) {
        for (int g = 0; g < d.groups; ++g) {
            im2col_t(x, d, n, g, colsT.data());
            for (int m = 0; m < d.mg; ++m) {
                const int co = g * d.mg + m;
                const float* wr = &w.values[static_cast<size_t>(co) * d.patch];
                const float bias = b ? b->values[co] : 0.0f;
                float* orow = &out.values[out.idx(n, co, 0, 0)];
                for (int pos = 0; pos < npos; ++pos) {
                    const float* cr = colsT.data() + static_cast<size_t>(pos) * d.patch;
                    float acc = 0.0f;
                    for (int p = 0; p < d.patch; ++p) acc += wr[p] * cr[p];
                    orow[pos] = acc + bias;
                }
            }
        }
    }
}

// Accumulates dx (if dx non-null), dw (if non-null), db (if non-null) for the
// conv described by d, given upstream dy.
void conv_backward_kernel(const Tensor4D& x, const Tensor4D& w, const Tensor4D& dy_holder,
                          const ConvDims& d, Tensor4D* dx, Tensor4D* dw, Tensor4D* db) {
    const int npos = d.hout * d.wout;
    std::vector<float> colsT;
    std::vector<float> dcolsT;
    if (dw || dx) colsT.resize(static_cast<size_t>(npos) * d.patch);
    if (dx) dcolsT.resize(static_cast<size_t>(npos) * d.patch);
    for (int n = 0; n < x.shape.n; ++n) {
        for (int g = 0; g < d.groups; ++g) {
            if (dw) im2col_t(x, d, n, g, colsT.data());
            if (dx) std::fill(dcolsT.begin(), dcolsT.end(), 0.0f);
            for (int m = 0; m < d.mg; ++m) {
                const int co = g * d.mg + m;
                const float* dyr = &dy_holder.grad[dy_holder.idx(n, co, 0, 0)];
                if (db) {
                    float acc = 0.0f;
                    for (int pos = 0; pos < npos; ++pos) acc += dyr[pos];
                    db->grad[co] += acc;
                }
                if (dw) {
                    float* dwr = &dw->grad[static_cast<size_t>(co) * d.patch];
                    for (int pos = 0; pos < npos; ++pos) {
                        const float g0 = dyr[pos];
                        if (g0 == 0.0f) continue;
                        const float* cr = colsT.data() + static_cast<size_t>(pos) * d.patch;
                        for (int p = 0; p < d.patch; ++p) dwr[p] += g0 * cr[p];
                    }
                }
                if (dx) {
                    const float* wr = &w.values[static_cast<size_t>(co) * d.patch];
                    for (int pos = 0; pos < npos; ++pos) {
                        const float g0 = dyr[pos];
                        if (g0 == 0.0f) continue;
                        float* dcr = dcolsT.data() + static_cast<size_t>(pos) * d.patch;
                        for (int p = 0; p < d.patch; ++p) dcr[p] += g0 * wr[p];
                    }
                }
            }
            if (dx) col2im_t(dcolsT.data(), d, n, g, *dx);
        }
    }
}

}  // namespace

TensorPtr conv2d(Tape& tape, const TensorPtr& x, const TensorPtr& weight,
                 const TensorPtr& bias, int stride, int dilation, int groups) {
    ConvDims d = conv_dims(x->shape, weight->shape, stride, dilation, groups);
    if (bias && bias->numel() != d.cout)
        throw std::invalid_argument("conv2d: bias length mismatch");
    auto out = make_tensor({x->shape.n, d.cout, d.hout, d.wout});
    std::vector<float> colsT(static_cast<size_t>(d.hout) * d.wout * d.patch);
    conv_forward_kernel(*x, *weight, bias.get(), d, *out, colsT);

    if (want_grad(tape, {&x, &weight, &bias})) {
        out->requires_grad = true;
        TensorPtr xs = x, ws = weight, bs = bias, os = out;
        tape.record([xs, ws, bs, os, d]() {
            if (!os->has_grad()) return;
            Tensor4D* dx = nullptr;
            Tensor4D* dw = nullptr;
            Tensor4D* db = nullptr;
            if (xs->requires_grad) { xs->ensure_grad(); dx = xs.get(); }
            if (ws->requires_grad) { ws->ensure_grad(); dw = ws.get(); }
            if (bs && bs->requires_grad) { bs->ensure_grad(); db = bs.get(); }
            conv_backward_kernel(*xs, *ws, *os, d, dx, dw, db);
        });
    }
    return out;
}

TensorPtr transposed_conv2d(Tape& tape, const TensorPtr& x, const TensorPtr& weight,
                            const TensorPtr& bias, int stride) {
    // Computed as the adjoint of conv2d: a conv with weight (Cf_out=Cin_t,
    // Cf_in=Cout_t, k, k) maps the (stride*H, stride*W) plane to (H, W);
    // this op applies its transpose.
    if (stride != 1 && stride != 2)
        throw std::invalid_argument("transposed_conv2d: stride must be 1 or 2");
    const Shape4& ws = weight->shape;
    if (ws.h != ws.w || ws.h % 2 == 0)
        throw std::invalid_argument("transposed_conv2d: kernel must be square and odd");
    if (ws.n != x->shape.c)
        throw std::invalid_argument("transposed_conv2d: weight expects " +
                                    std::to_string(ws.n) + " input channels, got " +
                                    std::to_string(x->shape.c));
    const int cout = ws.c;
    Shape4 big{x->shape.n, cout, stride * x->shape.h, stride * x->shape.w};
    ConvDims d = conv_dims(big, ws, stride, 1, 1);
    if (bias && bias->numel() != cout)
        throw std::invalid_argument("transposed_conv2d: bias length mismatch");

    auto out = make_tensor(big);
    {
        // Forward = conv_backward_kernel's dx path with dy := x.
        Tensor4D xin(big);        // zero stand-in for the conv's input values
        Tensor4D dy_holder({x->shape.n, ws.n, d.hout, d.wout});
        dy_holder.grad = x->values;
        out->ensure_grad();       // dx accumulator, moved to values below
        conv_backward_kernel(xin, *weight, dy_holder, d, out.get(), nullptr, nullptr);
        out->values.swap(out->grad);
        out->grad.clear();
        if (bias) {
            for (int n = 0; n < big.n; ++n)
                for (int c = 0; c < big.c; ++c) {
                    float* row = &out->values[out->idx(n, c, 0, 0)];
                    const float b = bias->values[c];
                    const int sp = big.h * big.w;
                    for (int i = 0; i < sp; ++i) row[i] += b;
                }
        }
    }

    if (want_grad(tape, {&x, &weight, &bias})) {
        out->requires_grad = true;
        TensorPtr xs = x, wsp = weight, bs = bias, os = out;
        tape.record([xs, wsp, bs, os, d, big]() {
            if (!os->has_grad()) return;
            // Adjoint of adjoint: dx = conv2d(dout, w); dw = correlate(dout, x).
            Tensor4D dout(big);
            dout.values = os->grad;
            if (xs->requires_grad) {
                xs->ensure_grad();
                std::vector<float> colsT(static_cast<size_t>(d.hout) * d.wout * d.patch);
                Tensor4D tmp({big.n, wsp->shape.n, d.hout, d.wout});
                conv_forward_kernel(dout, *wsp, nullptr, d, tmp, colsT);
                for (size_t i = 0; i < xs->grad.size(); ++i) xs->grad[i] += tmp.values[i];
            }
            if (wsp->requires_grad) {
                wsp->ensure_grad();
                Tensor4D dy_holder({big.n, wsp->shape.n, d.hout, d.wout});
                dy_holder.grad = xs->values;
                conv_backward_kernel(dout, *wsp, dy_holder, d, nullptr, wsp.get(), nullptr);
            }
            if (bs && bs->requires_grad) {
                bs->ensure_grad();
                for (int n = 0; n < big.n; ++n)
                    for (int c = 0; c < big.c; ++c) {
                        const float* row = &os->grad[os->idx(n, c, 0, 0)];
                        float acc = 0.0f;
                        const int sp = big.h * big.w;
                        for (int i = 0; i < sp; ++i) acc += row[i];
                        bs->grad[c] += acc;
                    }
            }
        });
    }
    return out;
}

namespace {

// Bilinear 2x up, align-corners-false: src = (dst + 0.5)/2 - 0.5.
void bilinear_up_weights(int dst, int size, int& i0, int& i1, float& w0, float& w1) {
    float src = (dst + 0.5f) * 0.5f - 0.5f;
    if (src < 0.0f) src = 0.0f;
    i0 = static_cast<int>(src);
    if (i0 > size - 1) i0 = size - 1;
    i1 = std::min(i0 + 1, size - 1);
    w1 = src - static_cast<float>(i0);
    w0 = 1.0f - w1;
}

}  // namespace

TensorPtr interpolate(Tape& tape, const TensorPtr& x, InterpMode mode, bool upscale) {
    const Shape4 s = x->shape;
    if (!upscale && (s.h % 2 != 0 || s.w % 2 != 0))
        throw std::invalid_argument("interpolate: scale 1/2 requires even spatial size, got " + s.str());
    Shape4 os{s.n, s.c, upscale ? s.h * 2 : s.h / 2, upscale ? s.w * 2 : s.w / 2};
    auto out = make_tensor(os);

    // area-upscale falls back to nearest; bilinear-1/2 with align-corners-false
    // lands exactly between pixel pairs, i.e. the 2x2 block mean.
    InterpMode m = mode;
    if (upscale && m == InterpMode::kArea) m = InterpMode::kNearest;
    if (!upscale && m == InterpMode::kBilinear) m = InterpMode::kArea;

    const int plane_in = s.h * s.w;
    const int plane_out = os.h * os.w;
    for (int nc = 0; nc < s.n * s.c; ++nc) {
        const float* in = x->values.data() + static_cast<size_t>(nc) * plane_in;
        float* o = out->values.data() + static_cast<size_t>(nc) * plane_out;
        if (upscale && m == InterpMode::kNearest) {
            for (int i = 0; i < os.h; ++i)
                for (int j = 0; j < os.w; ++j)
                    o[i * os.w + j] = in[(i / 2) * s.w + (j / 2)];
        } else if (upscale) {  // bilinear
            for (int i = 0; i < os.h; ++i) {
                int r0, r1; float wr0, wr1;
                bilinear_up_weights(i, s.h, r0, r1, wr0, wr1);
                for (int j = 0; j < os.w; ++j) {
                    int c0, c1; float wc0, wc1;
                    bilinear_up_weights(j, s.w, c0, c1, wc0, wc1);
                    o[i * os.w + j] = wr0 * (wc0 * in[r0 * s.w + c0] + wc1 * in[r0 * s.w + c1]) +
                                      wr1 * (wc0 * in[r1 * s.w + c0] + wc1 * in[r1 * s.w + c1]);
                }
            }
        } else if (m == InterpMode::kNearest) {
            for (int i = 0; i < os.h; ++i)
                for (int j = 0; j < os.w; ++j)
                    o[i * os.w + j] = in[(2 * i) * s.w + 2 * j];
        } else {  // area: 2x2 mean
            for (int i = 0; i < os.h; ++i)
                for (int j = 0; j < os.w; ++j)
                    o[i * os.w + j] = 0.25f * (in[(2 * i) * s.w + 2 * j] +
                                               in[(2 * i) * s.w + 2 * j + 1] +
                                               in[(2 * i + 1) * s.w + 2 * j] +
                                               in[(2 * i + 1) * s.w + 2 * j + 1]);
        }
    }

    if (want_grad(tape, {&x})) {
        out->requires_grad = true;
        TensorPtr xs = x, osp = out;
        tape.record([xs, osp, m, upscale, s, os, plane_in, plane_out]() {
            if (!osp->has_grad()) return;
            xs->ensure_grad();
            for (int nc = 0; nc < s.n * s.c; ++nc) {
                float* dx = xs->grad.data() + static_cast<size_t>(nc) * plane_in;
                const float* dy = osp->grad.data() + static_cast<size_t>(nc) * plane_out;
                if (upscale && m == InterpMode::kNearest) {
                    for (int i = 0; i < os.h; ++i)
                        for (int j = 0; j < os.w; ++j)
                            dx[(i / 2) * s.w + (j / 2)] += dy[i * os.w + j];
                } else if (upscale) {
                    for (int i = 0; i < os.h; ++i) {
                        int r0, r1; float wr0, wr1;
                        bilinear_up_weights(i, s.h, r0, r1, wr0, wr1);
                        for (int j = 0; j < os.w; ++j) {
                            int c0, c1; float wc0, wc1;
                            bilinear_up_weights(j, s.w, c0, c1, wc0, wc1);
                            const float g = dy[i * os.w + j];
                            dx[r0 * s.w + c0] += wr0 * wc0 * g;
                            dx[r0 * s.w + c1] += wr0 * wc1 * g;
                            dx[r1 * s.w + c0] += wr1 * wc0 * g;
                            dx[r1 * s.w + c1] += wr1 * wc1 * g;
                        }
                    }
                } else if (m == InterpMode::kNearest) {
                    for (int i = 0; i < os.h; ++i)
                        for (int j = 0; j < os.w; ++j)
                            dx[(2 * i) * s.w + 2 * j] += dy[i * os.w + j];
                } else {
                    for (int i = 0; i < os.h; ++i)
                        for (int j = 0; j < os.w; ++j) {
                            const float g = 0.25f * dy[i * os.w + j];
                            dx[(2 * i) * s.w + 2 * j] += g;
                            dx[(2 * i) * s.w + 2 * j + 1] += g;
                            dx[(2 * i + 1) * s.w + 2 * j] += g;
                            dx[(2 * i + 1) * s.w + 2 * j + 1] += g;
                        }
                }
            }
        });
    }
    return out;
}

TensorPtr relu(Tape& tape, const TensorPtr& x) {
    auto out = make_tensor(x->shape);
    for (size_t i = 0; i < x->values.size(); ++i)
        out->values[i] = x->values[i] > 0.0f ? x->values[i] : 0.0f;
    if (want_grad(tape, {&x})) {
        out->requires_grad = true;
        TensorPtr xs = x, os = out;
        tape.record([xs, os]() {
            if (!os->has_grad()) return;
            xs->ensure_grad();
            for (size_t i = 0; i < xs->values.size(); ++i)
                if (xs->values[i] > 0.0f) xs->grad[i] += os->grad[i];
        });
    }
    return out;
}

TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape)
        throw std::invalid_argument("add: shape mismatch " + a->shape.str() + " vs " + b->shape.str());
    auto out = make_tensor(a->shape);
    for (size_t i = 0; i < a->values.size(); ++i)
        out->values[i] = a->values[i] + b->values[i];
    if (want_grad(tape, {&a, &b})) {
        out->requires_grad = true;
        TensorPtr as = a, bs = b, os = out;
        tape.record([as, bs, os]() {
            if (!os->has_grad()) return;
            if (as->requires_grad) {
                as->ensure_grad();
                for (size_t i = 0; i < as->grad.size(); ++i) as->grad[i] += os->grad[i];
            }
            if (bs->requires_grad) {
                bs->ensure_grad();
                for (size_t i = 0; i < bs->grad.size(); ++i) bs->grad[i] += os->grad[i];
            }
        });
    }
    return out;
}

TensorPtr slice_channels(Tape& tape, const TensorPtr& x, int first, int count) {
    const Shape4 s = x->shape;
    if (first < 0 || count < 1 || first + count > s.c)
        throw std::invalid_argument("slice_channels: range [" + std::to_string(first) + ", " +
                                    std::to_string(first + count) + ") outside " +
                                    std::to_string(s.c) + " channels");
    auto out = make_tensor({s.n, count, s.h, s.w});
    const size_t plane = static_cast<size_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
        std::memcpy(&out->values[out->idx(n, 0, 0, 0)],
                    &x->values[x->idx(n, first, 0, 0)], count * plane * sizeof(float));
    if (want_grad(tape, {&x})) {
        out->requires_grad = true;
        TensorPtr xs = x, os = out;
        tape.record([xs, os, first, count, plane]() {
            if (!os->has_grad()) return;
            xs->ensure_grad();
            for (int n = 0; n < xs->shape.n; ++n) {
                const float* src = &os->grad[os->idx(n, 0, 0, 0)];
                float* dst = &xs->grad[xs->idx(n, first, 0, 0)];
                for (size_t i = 0; i < count * plane; ++i) dst[i] += src[i];
            }
        });
    }
    return out;
}

TensorPtr concat_channels(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    const Shape4 sa = a->shape, sb = b->shape;
    if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w)
        throw std::invalid_argument("concat_channels: shape mismatch " + sa.str() + " vs " + sb.str());
    auto out = make_tensor({sa.n, sa.c + sb.c, sa.h, sa.w});
    const size_t plane = static_cast<size_t>(sa.h) * sa.w;
    for (int n = 0; n < sa.n; ++n) {
        std::memcpy(&out->values[out->idx(n, 0, 0, 0)],
                    &a->values[a->idx(n, 0, 0, 0)], sa.c * plane * sizeof(float));
        std::memcpy(&out->values[out->idx(n, sa.c, 0, 0)],
                    &b->values[b->idx(n, 0, 0, 0)], sb.c * plane * sizeof(float));
    }
    if (want_grad(tape, {&a, &b})) {
        out->requires_grad = true;
        TensorPtr as = a, bs = b, os = out;
        tape.record([as, bs, os, sa, sb, plane]() {
            if (!os->has_grad()) return;
            for (int n = 0; n < sa.n; ++n) {
                if (as->requires_grad) {
                    as->ensure_grad();
                    const float* src = &os->grad[os->idx(n, 0, 0, 0)];
                    float* dst = &as->grad[as->idx(n, 0, 0, 0)];
                    for (size_t i = 0; i < sa.c * plane; ++i) dst[i] += src[i];
                }
                if (bs->requires_grad) {
                    bs->ensure_grad();
                    const float* src = &os->grad[os->idx(n, sa.c, 0, 0)];
                    float* dst = &bs->grad[bs->idx(n, 0, 0, 0)];
                    for (size_t i = 0; i < sb.c * plane; ++i) dst[i] += src[i];
                }
            }
        });
    }
    return out;
}

TensorPtr channel_scale(Tape& tape, const TensorPtr& x, const TensorPtr& beta) {
    if (beta->numel() != x->shape.c)
        throw std::invalid_argument("channel_scale: beta length " + std::to_string(beta->numel()) +
                                    " != channels " + std::to_string(x->shape.c));
    auto out = make_tensor(x->shape);
    const size_t plane = static_cast<size_t>(x->shape.h) * x->shape.w;
    for (int n = 0; n < x->shape.n; ++n)
        for (int c = 0; c < x->shape.c; ++c) {
            const float s = beta->values[c];
            const float* in = &x->values[x->idx(n, c, 0, 0)];
            float* o = &out->values[out->idx(n, c, 0, 0)];
            for (size_t i = 0; i < plane; ++i) o[i] = s * in[i];
        }
    if (want_grad(tape, {&x, &beta})) {
        out->requires_grad = true;
        TensorPtr xs = x, bs = beta, os = out;
        tape.record([xs, bs, os, plane]() {
            if (!os->has_grad()) return;
            const Shape4 s = xs->shape;
            for (int n = 0; n < s.n; ++n)
                for (int c = 0; c < s.c; ++c) {
                    const float* dy = &os->grad[os->idx(n, c, 0, 0)];
                    if (xs->requires_grad) {
                        xs->ensure_grad();
                        const float sc = bs->values[c];
                        float* dx = &xs->grad[xs->idx(n, c, 0, 0)];
                        for (size_t i = 0; i < plane; ++i) dx[i] += sc * dy[i];
                    }
                    if (bs->requires_grad) {
                        bs->ensure_grad();
                        const float* in = &xs->values[xs->idx(n, c, 0, 0)];
                        float acc = 0.0f;
                        for (size_t i = 0; i < plane; ++i) acc += in[i] * dy[i];
                        bs->grad[c] += acc;
                    }
                }
        });
    }
    return out;
}

TensorPtr weighted_sum(Tape& tape, const std::vector<TensorPtr>& xs, const TensorPtr& coeffs) {
    if (xs.empty()) throw std::invalid_argument("weighted_sum: empty term list");
    if (coeffs->numel() != static_cast<int64_t>(xs.size()))
        throw std::invalid_argument("weighted_sum: coefficient count mismatch");
    const Shape4 s = xs[0]->shape;
    for (const auto& t : xs)
        if (t->shape != s)
            throw std::invalid_argument("weighted_sum: term shape mismatch " + t->shape.str() +
                                        " vs " + s.str());
    auto out = make_tensor(s);
    for (size_t k = 0; k < xs.size(); ++k) {
        const float w = coeffs->values[k];
        const float* in = xs[k]->values.data();
        float* o = out->values.data();
        for (size_t i = 0; i < out->values.size(); ++i) o[i] += w * in[i];
    }
    bool need = tape.recording() && coeffs->requires_grad;
    for (const auto& t : xs) need = need || (tape.recording() && t->requires_grad);
    if (need) {
        out->requires_grad = true;
        std::vector<TensorPtr> terms = xs;
        TensorPtr cs = coeffs, os = out;
        tape.record([terms, cs, os]() {
            if (!os->has_grad()) return;
            for (size_t k = 0; k < terms.size(); ++k) {
                if (terms[k]->requires_grad) {
                    terms[k]->ensure_grad();
                    const float w = cs->values[k];
                    float* dx = terms[k]->grad.data();
                    const float* dy = os->grad.data();
                    for (size_t i = 0; i < os->grad.size(); ++i) dx[i] += w * dy[i];
                }
                if (cs->requires_grad) {
                    cs->ensure_grad();
                    const float* in = terms[k]->values.data();
                    const float* dy = os->grad.data();
                    float acc = 0.0f;
                    for (size_t i = 0; i < os->grad.size(); ++i) acc += in[i] * dy[i];
                    cs->grad[k] += acc;
                }
            }
        });
    }
    return out;
}

TensorPtr softmax_vec(Tape& tape, const TensorPtr& v) {
    if (v->numel() < 1) throw std::invalid_argument("softmax_vec: empty vector");
    auto out = make_tensor(v->shape);
    float mx = v->values[0];
    for (float x : v->values) mx = std::max(mx, x);
    float sum = 0.0f;
    for (size_t i = 0; i < v->values.size(); ++i) {
        out->values[i] = std::exp(v->values[i] - mx);
        sum += out->values[i];
    }
    for (auto& x : out->values) x /= sum;
    if (want_grad(tape, {&v})) {
        out->requires_grad = true;
        TensorPtr vs = v, os = out;
        tape.record([vs, os]() {
            if (!os->has_grad()) return;
            vs->ensure_grad();
            float dot = 0.0f;
            for (size_t i = 0; i < os->values.size(); ++i) dot += os->grad[i] * os->values[i];
            for (size_t i = 0; i < os->values.size(); ++i)
                vs->grad[i] += os->values[i] * (os->grad[i] - dot);
        });
    }
    return out;
}

TensorPtr sigmoid(Tape& tape, const TensorPtr& v) {
    auto out = make_tensor(v->shape);
    for (size_t i = 0; i < v->values.size(); ++i)
        out->values[i] = 1.0f / (1.0f + std::exp(-v->values[i]));
    if (want_grad(tape, {&v})) {
        out->requires_grad = true;
        TensorPtr vs = v, os = out;
        tape.record([vs, os]() {
            if (!os->has_grad()) return;
            vs->ensure_grad();
            for (size_t i = 0; i < os->values.size(); ++i)
                vs->grad[i] += os->grad[i] * os->values[i] * (1.0f - os->values[i]);
        });
    }
    return out;
}

TensorPtr lerp(Tape& tape, const TensorPtr& y, const TensorPtr& v, const TensorPtr& delta) {
    if (y->shape != v->shape)
        throw std::invalid_argument("lerp: shape mismatch " + y->shape.str() + " vs " + v->shape.str());
    if (delta->numel() != 1) throw std::invalid_argument("lerp: delta must be scalar");
    const float dl = delta->values[0];
    auto out = make_tensor(y->shape);
    for (size_t i = 0; i < out->values.size(); ++i)
        out->values[i] = dl * y->values[i] + (1.0f - dl) * v->values[i];
    if (want_grad(tape, {&y, &v, &delta})) {
        out->requires_grad = true;
        TensorPtr ys = y, vs = v, ds = delta, os = out;
        tape.record([ys, vs, ds, os]() {
            if (!os->has_grad()) return;
            const float d = ds->values[0];
            if (ys->requires_grad) {
                ys->ensure_grad();
                for (size_t i = 0; i < os->grad.size(); ++i) ys->grad[i] += d * os->grad[i];
            }
            if (vs->requires_grad) {
                vs->ensure_grad();
                for (size_t i = 0; i < os->grad.size(); ++i) vs->grad[i] += (1.0f - d) * os->grad[i];
            }
            if (ds->requires_grad) {
                ds->ensure_grad();
                float acc = 0.0f;
                for (size_t i = 0; i < os->grad.size(); ++i)
                    acc += (ys->values[i] - vs->values[i]) * os->grad[i];
                ds->grad[0] += acc;
            }
        });
    }
    return out;
}

TensorPtr mse_loss(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape)
        throw std::invalid_argument("mse_loss: shape mismatch " + a->shape.str() + " vs " + b->shape.str());
    const float inv_n = 1.0f / static_cast<float>(a->numel());
    float acc = 0.0f;
    for (size_t i = 0; i < a->values.size(); ++i) {
        const float d = a->values[i] - b->values[i];
        acc += d * d;
    }
    auto out = make_scalar(acc * inv_n);
    if (want_grad(tape, {&a, &b})) {
        out->requires_grad = true;
        TensorPtr as = a, bs = b, os = out;
        tape.record([as, bs, os, inv_n]() {
            if (!os->has_grad()) return;
            const float g = 2.0f * inv_n * os->grad[0];
            if (as->requires_grad) {
                as->ensure_grad();
                for (size_t i = 0; i < as->values.size(); ++i)
                    as->grad[i] += g * (as->values[i] - bs->values[i]);
            }
            if (bs->requires_grad) {
                bs->ensure_grad();
                for (size_t i = 0; i < bs->values.size(); ++i)
                    bs->grad[i] += g * (bs->values[i] - as->values[i]);
            }
        });
    }
    return out;
}

}  // namespace modnas
