#include "panostitch/pipeline.hpp"

#include <cmath>

#include "panostitch/color.hpp"
#include "panostitch/parallel.hpp"

namespace panostitch::pipeline {
namespace {

template <typename T>
Image<T> tanh_map(const Image<T>& raw) {
  Image<T> out = raw;
  for (auto& v : out.storage()) v = std::tanh(v);
  return out;
}

// Chains a cotangent of tanh(raw) back onto raw.
template <typename T>
Image<T> tanh_backward(const Image<T>& raw, Image<T> d_squashed) {
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const T t = std::tanh(raw.storage()[i]);
    d_squashed.storage()[i] *= T(1) - t * t;
  }
  return d_squashed;
}

}  // namespace

std::string_view group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::kPreColor: return "pre_color";
    case ParamGroup::kAffine: return "affine";
    case ParamGroup::kLocalAdjust: return "local";
    case ParamGroup::kWeightLogits: return "weights";
    case ParamGroup::kPostColor: return "post_color";
  }
  return "?";
}

ParamGroup parse_group(std::string_view name) {
  for (ParamGroup g : kAllGroups)
    if (group_name(g) == name) return g;
  throw DomainError("unknown parameter group '" + std::string(name) +
                    "' (expected pre_color, affine, local, weights or post_color)");
}

template <typename T>
std::size_t SceneParams<T>::parameter_count() const {
  std::size_t n = 0;
  for_each_block([&](ParamGroup, std::span<const T> s) { n += s.size(); });
  return n;
}

template <typename T>
SceneParams<T> SceneParams<T>::zeros_like() const {
  SceneParams<T> out = *this;
  out.for_each_block([](ParamGroup, std::span<T> s) { std::fill(s.begin(), s.end(), T(0)); });
  return out;
}

template <typename T>
bool SceneParams<T>::all_finite() const {
  bool ok = true;
  for_each_block([&](ParamGroup, std::span<const T> s) {
    for (T v : s) ok = ok && std::isfinite(v);
  });
  return ok;
}

SceneShape SceneShape::from_rig(const geometry::RigConfig& rig, int control_divisor) {
  rig.validate();
  SceneShape s;
  s.inputs = static_cast<int>(rig.input_yaws_deg.size());
  s.fisheye_height = rig.camera_template.height;
  s.fisheye_width = rig.camera_template.width;
  s.erp_height = rig.erp_height;
  s.erp_width = rig.erp_width;
  s.control_divisor = control_divisor;
  return s;
}

template <typename T>
SceneParams<T> init_params(const SceneShape& shape) {
  if (shape.inputs < 1) throw DomainError("init_params: no inputs");
  const int fh = control_size(shape.fisheye_height, shape.control_divisor);
  const int fw = control_size(shape.fisheye_width, shape.control_divisor);
  const int eh = control_size(shape.erp_height, shape.control_divisor);
  const int ew = control_size(shape.erp_width, shape.control_divisor);
  SceneParams<T> p;
  for (int n = 0; n < shape.inputs; ++n) {
    p.pre_color.emplace_back(fh, fw, 3);
    p.affines.push_back(AffineTransform<T>::identity());
    p.local_adjust.emplace_back(eh, ew, 2);
    p.weight_logits.emplace_back(eh, ew, 1);
  }
  p.post_color = Image<T>(eh, ew, 3);
  return p;
}

template <typename T>
WarpField<T> global_warp(const WarpField<T>& base, const AffineTransform<T>& affine) {
  WarpField<T> out(base.height(), base.width());
  parallel_rows(base.height(), [&](int y) {
    for (int x = 0; x < base.width(); ++x) {
      const T bx = base.sx(y, x), by = base.sy(y, x);
      out.sx(y, x) = affine.apply_x(bx, by);
      out.sy(y, x) = affine.apply_y(bx, by);
    }
  });
  return out;
}

template <typename T>
std::array<T, 6> global_warp_backward(const WarpField<T>& base, const WarpField<T>& d_global) {
  if (!base.same_grid(d_global)) throw DomainError("global_warp_backward: dimension mismatch");
  std::vector<std::array<double, 6>> rows(base.height());
  parallel_rows(base.height(), [&](int y) {
    std::array<double, 6> acc{};
    for (int x = 0; x < base.width(); ++x) {
      const double bx = base.sx(y, x), by = base.sy(y, x);
      const double gx = d_global.sx(y, x), gy = d_global.sy(y, x);
      acc[0] += gx * bx;
      acc[1] += gx * by;
      acc[2] += gx;
      acc[3] += gy * bx;
      acc[4] += gy * by;
      acc[5] += gy;
    }
    rows[y] = acc;
  });
  std::array<double, 6> total{};
  for (const auto& r : rows)
    for (int i = 0; i < 6; ++i) total[i] += r[i];
  std::array<T, 6> out;
  for (int i = 0; i < 6; ++i) out[i] = static_cast<T>(total[i]);
  return out;
}

template <typename T>
void StitchInputs<T>::validate() const {
  const std::size_t n = images.size();
  if (n == 0 || base_fields.size() != n || base_masks.size() != n)
    throw DomainError("StitchInputs: need one base field and mask per input image");
  for (std::size_t i = 0; i < n; ++i) {
    if (!images[i].same_shape(images[0]) || images[i].channels() != 3)
      throw DomainError("StitchInputs: input images must share one 3-channel shape");
    if (!base_fields[i].same_grid(base_fields[0]) ||
        !base_masks[i].same_grid(base_fields[0].height(), base_fields[0].width()))
      throw DomainError("StitchInputs: base fields and masks must share the ERP grid");
  }
}

template <typename T>
SceneShape StitchInputs<T>::shape(int control_divisor) const {
  validate();
  SceneShape s;
  s.inputs = static_cast<int>(images.size());
  s.fisheye_height = images[0].height();
  s.fisheye_width = images[0].width();
  s.erp_height = base_fields[0].height();
  s.erp_width = base_fields[0].width();
  s.control_divisor = control_divisor;
  return s;
}

template <typename T>
ForwardState<T> forward(const StitchInputs<T>& inputs, const SceneParams<T>& params, T alpha) {
  inputs.validate();
  const std::size_t n_in = inputs.images.size();
  if (params.inputs() != n_in || params.pre_color.size() != n_in ||
      params.local_adjust.size() != n_in || params.weight_logits.size() != n_in)
    throw DomainError("forward: parameter set does not match the number of inputs");
  const int fh = inputs.images[0].height(), fw = inputs.images[0].width();
  const int eh = inputs.base_fields[0].height(), ew = inputs.base_fields[0].width();

  ForwardState<T> s;
  std::vector<Image<T>> logits;
  for (std::size_t n = 0; n < n_in; ++n) {
    s.pre_curves.push_back(upsample_bilinear(tanh_map(params.pre_color[n]), fh, fw));
    s.corrected.push_back(color::apply_curve(inputs.images[n], s.pre_curves[n]));
    s.global.push_back(global_warp(inputs.base_fields[n], params.affines[n]));
    s.local.push_back(WarpField<T>(upsample_bilinear(params.local_adjust[n], eh, ew)));
    s.final_warp.push_back(compose_warp(s.global[n], s.local[n], alpha));
    WarpResult<T> w = warp(s.corrected[n], s.final_warp[n]);
    s.warped.push_back(std::move(w.image));
    s.warp_masks.push_back(std::move(w.mask));
    s.validity.push_back(inputs.base_masks[n]);
    logits.push_back(upsample_bilinear(params.weight_logits[n], eh, ew));
  }
  s.raw_weights = softmax_weights(logits);
  s.weights = renormalize_weights(s.raw_weights, s.validity);
  s.blended = weighted_sum(s.warped, s.raw_weights, s.validity);
  s.post_curve = upsample_bilinear(tanh_map(params.post_color), eh, ew);
  s.output = color::apply_curve(s.blended, s.post_curve);
  return s;
}

template <typename T>
ForwardBackwardResult<T> forward_backward(const StitchInputs<T>& inputs,
                                          const SceneParams<T>& params,
                                          const losses::LossEvaluator<T>& objective, T alpha) {
  ForwardBackwardResult<T> r;
  r.state = forward(inputs, params, alpha);
  const ForwardState<T>& s = r.state;
  Image<T> d_output;
  r.loss = objective.evaluate(s.output, &d_output);

  SceneParams<T>& g = r.grads;
  g = params.zeros_like();

  const auto post = color::apply_curve_backward(s.blended, s.post_curve, d_output);
  g.post_color = tanh_backward(params.post_color,
                               upsample_bilinear_adjoint(post.d_curve, params.post_color.height(),
                                                         params.post_color.width()));

  const auto blend = weighted_sum_backward(s.warped, s.raw_weights, s.validity, s.blended,
                                           post.d_image);
  const auto d_logits = softmax_weights_backward(s.raw_weights, blend.d_weights);

  for (std::size_t n = 0; n < inputs.images.size(); ++n) {
    const auto& coarse_w = params.weight_logits[n];
    g.weight_logits[n] = upsample_bilinear_adjoint(d_logits[n], coarse_w.height(), coarse_w.width());

    const auto wg = warp_backward(s.corrected[n], s.final_warp[n], blend.d_images[n]);
    const auto cg = compose_warp_backward(wg.d_field, alpha);
    const auto& coarse_l = params.local_adjust[n];
    g.local_adjust[n] =
        upsample_bilinear_adjoint(cg.d_local.coords(), coarse_l.height(), coarse_l.width());
    g.affines[n].m = global_warp_backward(inputs.base_fields[n], cg.d_global);

    const auto pre = color::apply_curve_backward(inputs.images[n], s.pre_curves[n], wg.d_image);
    const auto& coarse_c = params.pre_color[n];
    g.pre_color[n] = tanh_backward(
        coarse_c, upsample_bilinear_adjoint(pre.d_curve, coarse_c.height(), coarse_c.width()));
  }
  return r;
}

template <typename T>
losses::LossValue evaluate_loss(const StitchInputs<T>& inputs, const SceneParams<T>& params,
                                const losses::LossEvaluator<T>& objective, T alpha) {
  return objective.evaluate(forward(inputs, params, alpha).output);
}

#define PANOSTITCH_INSTANTIATE(T)                                                              \
  template struct SceneParams<T>;                                                              \
  template SceneParams<T> init_params<T>(const SceneShape&);                                   \
  template WarpField<T> global_warp<T>(const WarpField<T>&, const AffineTransform<T>&);        \
  template std::array<T, 6> global_warp_backward<T>(const WarpField<T>&, const WarpField<T>&); \
  template struct StitchInputs<T>;                                                             \
  template ForwardState<T> forward<T>(const StitchInputs<T>&, const SceneParams<T>&, T);       \
  template ForwardBackwardResult<T> forward_backward<T>(                                       \
      const StitchInputs<T>&, const SceneParams<T>&, const losses::LossEvaluator<T>&, T);      \
  template losses::LossValue evaluate_loss<T>(const StitchInputs<T>&, const SceneParams<T>&,   \
                                              const losses::LossEvaluator<T>&, T);

PANOSTITCH_INSTANTIATE(float)
PANOSTITCH_INSTANTIATE(double)

#undef PANOSTITCH_INSTANTIATE

}  // namespace panostitch::pipeline
