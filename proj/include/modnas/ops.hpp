#pragma once

#include "modnas/tensor.hpp"

namespace modnas {

enum class InterpMode { kNearest, kBilinear, kArea };

/// 2D cross-correlation with zero "same" padding (pad = dilation*(k-1)/2,
/// odd k). weight shape (C_out, C_in/groups, k, k), bias (1, C_out, 1, 1)
/// or null. Output spatial size is ceil(H/stride) x ceil(W/stride).
TensorPtr conv2d(Tape& tape, const TensorPtr& x, const TensorPtr& weight,
                 const TensorPtr& bias, int stride = 1, int dilation = 1,
                 int groups = 1);

/// Linear adjoint of conv2d with the same weight and padding convention.
/// weight shape (C_in, C_out, k, k); stride in {1, 2}; stride-2 output is
/// exactly (2H, 2W).
TensorPtr transposed_conv2d(Tape& tape, const TensorPtr& x, const TensorPtr& weight,
                            const TensorPtr& bias, int stride = 1);

/// Resample by a factor of 2 (upscale=true) or 1/2. Bilinear follows the
/// align-corners-false convention; area-downscale is the 2x2 block mean;
/// area-upscale falls back to nearest.
TensorPtr interpolate(Tape& tape, const TensorPtr& x, InterpMode mode, bool upscale);

TensorPtr relu(Tape& tape, const TensorPtr& x);

/// First `count` channels starting at `first`.
TensorPtr slice_channels(Tape& tape, const TensorPtr& x, int first, int count);
TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr concat_channels(Tape& tape, const TensorPtr& a, const TensorPtr& b);

/// out[n,c,h,w] = x[n,c,h,w] * beta[c]; beta is a (1,C,1,1) vector.
TensorPtr channel_scale(Tape& tape, const TensorPtr& x, const TensorPtr& beta);

/// Sum_i coeffs[i] * xs[i] over same-shape tensors; coeffs is a flat
/// vector tensor of matching length. Differentiable in both.
TensorPtr weighted_sum(Tape& tape, const std::vector<TensorPtr>& xs,
                       const TensorPtr& coeffs);

/// Softmax over all elements of v treated as a flat vector.
TensorPtr softmax_vec(Tape& tape, const TensorPtr& v);

TensorPtr sigmoid(Tape& tape, const TensorPtr& v);

/// delta*y + (1-delta)*v with a scalar delta tensor.
TensorPtr lerp(Tape& tape, const TensorPtr& y, const TensorPtr& v,
               const TensorPtr& delta);

/// Mean of squared differences over all elements; returns a (1,1,1,1) tensor.
TensorPtr mse_loss(Tape& tape, const TensorPtr& a, const TensorPtr& b);

}  // namespace modnas
