#pragma once

#include <vector>

#include "panostitch/image.hpp"

namespace panostitch {

// --- backward warping ---------------------------------------------------

template <typename T>
struct WarpResult {
  Image<T> image;
  Mask mask;  // 1 where every bilinear tap with nonzero weight is in bounds
};

template <typename T>
struct WarpGrad {
  Image<T> d_image;
  WarpField<T> d_field;
};

/// Backward warp: output pixel p samples `image` at field(p) bilinearly.
/// Taps outside the source read as zero, so the result is continuous in the
/// field coordinates.
template <typename T>
WarpResult<T> warp(const Image<T>& image, const WarpField<T>& field);

template <typename T>
WarpGrad<T> warp_backward(const Image<T>& image, const WarpField<T>& field,
                          const Image<T>& d_out);

// --- warp composition ---------------------------------------------------

/// U = G + alpha * L on both coordinate channels.
template <typename T>
WarpField<T> compose_warp(const WarpField<T>& global, const WarpField<T>& local, T alpha);

template <typename T>
struct ComposeGrad {
  WarpField<T> d_global;
  WarpField<T> d_local;
};

template <typename T>
ComposeGrad<T> compose_warp_backward(const WarpField<T>& d_out, T alpha);

// --- blending -----------------------------------------------------------

/// N nonnegative per-pixel maps that sum to one at every pixel.
template <typename T>
struct BlendWeights {
  std::vector<Image<T>> maps;

  /// Max |sum_n W_n - 1| over pixels where any `validity` mask is set,
  /// after renormalizing over valid inputs. Used by tests and diagnostics.
  double max_partition_error(const std::vector<Mask>& validity) const;
};

/// Normalized exponential across n, per pixel.
template <typename T>
BlendWeights<T> softmax_weights(const std::vector<Image<T>>& logits);

template <typename T>
std::vector<Image<T>> softmax_weights_backward(const BlendWeights<T>& weights,
                                               const std::vector<Image<T>>& d_weights);

/// Weights renormalized over valid inputs per pixel (zero where invalid).
template <typename T>
BlendWeights<T> renormalize_weights(const BlendWeights<T>& weights,
                                    const std::vector<Mask>& validity);

/// P = sum_n v_n W_n I_n / sum_n v_n W_n; zero where no input is valid.
template <typename T>
Image<T> weighted_sum(const std::vector<Image<T>>& images, const BlendWeights<T>& weights,
                      const std::vector<Mask>& validity);

template <typename T>
struct WeightedSumGrad {
  std::vector<Image<T>> d_images;
  std::vector<Image<T>> d_weights;
};

template <typename T>
WeightedSumGrad<T> weighted_sum_backward(const std::vector<Image<T>>& images,
                                         const BlendWeights<T>& weights,
                                         const std::vector<Mask>& validity,
                                         const Image<T>& output, const Image<T>& d_out);

// --- control-grid upsampling ---------------------------------------------

/// Bilinear resize of a coarse control grid onto a height x width grid with
/// half-pixel alignment and edge clamping.
template <typename T>
Image<T> upsample_bilinear(const Image<T>& coarse, int height, int width);

/// Adjoint of upsample_bilinear: scatters a full-resolution cotangent back
/// onto the coarse grid.
template <typename T>
Image<T> upsample_bilinear_adjoint(const Image<T>& d_full, int coarse_height, int coarse_width);

/// ceil(size / divisor), at least 1.
int control_size(int size, int divisor);

}  // namespace panostitch
