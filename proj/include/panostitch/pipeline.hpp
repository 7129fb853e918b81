#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "panostitch/geometry.hpp"
#include "panostitch/image.hpp"
#include "panostitch/image_ops.hpp"
#include "panostitch/losses.hpp"

namespace panostitch::pipeline {

constexpr double kDefaultAlpha = 0.3;
constexpr int kDefaultControlDivisor = 8;

/// 2x3 matrix acting on homogeneous source coordinates, row-major.
template <typename T>
struct AffineTransform {
  std::array<T, 6> m{T(1), T(0), T(0), T(0), T(1), T(0)};

  static AffineTransform identity() { return {}; }
  static AffineTransform translation(T tx, T ty) { return {{T(1), T(0), tx, T(0), T(1), ty}}; }

  T apply_x(T x, T y) const { return m[0] * x + m[1] * y + m[2]; }
  T apply_y(T x, T y) const { return m[3] * x + m[4] * y + m[5]; }
  bool operator==(const AffineTransform&) const = default;
};

enum class ParamGroup { kPreColor, kAffine, kLocalAdjust, kWeightLogits, kPostColor };

inline constexpr std::array<ParamGroup, 5> kAllGroups = {
    ParamGroup::kPreColor, ParamGroup::kAffine, ParamGroup::kLocalAdjust,
    ParamGroup::kWeightLogits, ParamGroup::kPostColor};

std::string_view group_name(ParamGroup g);
/// Accepts the names printed by group_name (pre_color, affine, local, weights, post_color).
ParamGroup parse_group(std::string_view name);

/// Everything the optimizer adjusts for one scene. Color maps are stored
/// unconstrained; the applied coefficient is tanh(value), so |C| < 1.
template <typename T>
struct SceneParams {
  std::vector<Image<T>> pre_color;          // per input, fisheye control grid, 3 ch
  std::vector<AffineTransform<T>> affines;  // per input
  std::vector<Image<T>> local_adjust;       // per input, ERP control grid, 2 ch, pixels
  std::vector<Image<T>> weight_logits;      // per input, ERP control grid, 1 ch
  Image<T> post_color;                      // ERP control grid, 3 ch

  std::size_t inputs() const { return affines.size(); }

  /// Calls fn(group, span) for every contiguous parameter block, in a fixed order.
  template <typename Fn>
  void for_each_block(Fn&& fn) {
    for (auto& m : pre_color) fn(ParamGroup::kPreColor, std::span<T>(m.storage()));
    for (auto& a : affines) fn(ParamGroup::kAffine, std::span<T>(a.m));
    for (auto& m : local_adjust) fn(ParamGroup::kLocalAdjust, std::span<T>(m.storage()));
    for (auto& m : weight_logits) fn(ParamGroup::kWeightLogits, std::span<T>(m.storage()));
    fn(ParamGroup::kPostColor, std::span<T>(post_color.storage()));
  }
  template <typename Fn>
  void for_each_block(Fn&& fn) const {
    const_cast<SceneParams*>(this)->for_each_block(
        [&](ParamGroup g, std::span<T> s) { fn(g, std::span<const T>(s)); });
  }

  std::size_t parameter_count() const;
  /// Same shapes, all zeros (affines included).
  SceneParams zeros_like() const;
  bool all_finite() const;

  template <typename U>
  SceneParams<U> cast() const {
    SceneParams<U> out;
    for (const auto& m : pre_color) out.pre_color.push_back(m.template cast<U>());
    for (const auto& a : affines) {
      AffineTransform<U> b;
      for (int i = 0; i < 6; ++i) b.m[i] = static_cast<U>(a.m[i]);
      out.affines.push_back(b);
    }
    for (const auto& m : local_adjust) out.local_adjust.push_back(m.template cast<U>());
    for (const auto& m : weight_logits) out.weight_logits.push_back(m.template cast<U>());
    out.post_color = post_color.template cast<U>();
    return out;
  }

  bool operator==(const SceneParams&) const = default;
};

/// Grid sizes of a stitching problem.
struct SceneShape {
  int inputs = 3;
  int fisheye_height = 256;
  int fisheye_width = 256;
  int erp_height = 128;
  int erp_width = 256;
  int control_divisor = kDefaultControlDivisor;

  static SceneShape from_rig(const geometry::RigConfig& rig,
                             int control_divisor = kDefaultControlDivisor);
};

/// Zero color maps, identity affines, zero local grids, uniform logits.
template <typename T>
SceneParams<T> init_params(const SceneShape& shape);

template <typename T>
SceneParams<T> init_params(const geometry::RigConfig& rig,
                           int control_divisor = kDefaultControlDivisor) {
  return init_params<T>(SceneShape::from_rig(rig, control_divisor));
}

/// G(p) = A [base(p); 1].
template <typename T>
WarpField<T> global_warp(const WarpField<T>& base, const AffineTransform<T>& affine);

template <typename T>
std::array<T, 6> global_warp_backward(const WarpField<T>& base, const WarpField<T>& d_global);

/// Fixed inputs of one scene: fisheye images, calibration warps and their
/// footprints (the per-input validity used for blending).
template <typename T>
struct StitchInputs {
  std::vector<Image<T>> images;
  std::vector<WarpField<T>> base_fields;
  std::vector<Mask> base_masks;

  void validate() const;
  SceneShape shape(int control_divisor = kDefaultControlDivisor) const;
  template <typename U>
  StitchInputs<U> cast() const {
    StitchInputs<U> out;
    for (const auto& i : images) out.images.push_back(i.template cast<U>());
    for (const auto& f : base_fields) out.base_fields.push_back(f.template cast<U>());
    out.base_masks = base_masks;
    return out;
  }
};

/// Every intermediate of the output-generation chain.
template <typename T>
struct ForwardState {
  std::vector<Image<T>> pre_curves;   // full-res C_pre (fisheye grid)
  std::vector<Image<T>> corrected;    // I_hat
  std::vector<WarpField<T>> global;   // G
  std::vector<WarpField<T>> local;    // L (upsampled)
  std::vector<WarpField<T>> final_warp;  // U = G + alpha L
  std::vector<Image<T>> warped;       // I_bar
  std::vector<Mask> warp_masks;       // all taps in bounds
  std::vector<Mask> validity;         // footprints used for blending
  BlendWeights<T> raw_weights;        // softmax of logits
  BlendWeights<T> weights;            // renormalized over valid inputs
  Image<T> blended;                   // P
  Image<T> post_curve;                // full-res C_post
  Image<T> output;                    // O
};

template <typename T>
ForwardState<T> forward(const StitchInputs<T>& inputs, const SceneParams<T>& params,
                        T alpha = T(kDefaultAlpha));

template <typename T>
struct ForwardBackwardResult {
  losses::LossValue loss;
  SceneParams<T> grads;
  ForwardState<T> state;
};

/// Objective value and its exact gradient with respect to every parameter.
template <typename T>
ForwardBackwardResult<T> forward_backward(const StitchInputs<T>& inputs,
                                          const SceneParams<T>& params,
                                          const losses::LossEvaluator<T>& objective,
                                          T alpha = T(kDefaultAlpha));

/// Objective value only (no backward pass).
template <typename T>
losses::LossValue evaluate_loss(const StitchInputs<T>& inputs, const SceneParams<T>& params,
                                const losses::LossEvaluator<T>& objective,
                                T alpha = T(kDefaultAlpha));

}  // namespace panostitch::pipeline
