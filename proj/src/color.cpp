#include "panostitch/color.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "panostitch/parallel.hpp"

namespace panostitch::color {

template <typename T>
Image<T> apply_curve(const Image<T>& image, const Image<T>& curve) {
  if (!image.same_shape(curve)) throw DomainError("apply_curve: dimension mismatch");
  Image<T> out(image.height(), image.width(), image.channels());
  const auto& x = image.storage();
  const auto& cv = curve.storage();
  auto& o = out.storage();
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = x[i] + cv[i] * x[i] * (T(1) - x[i]);
  return out;
}

template <typename T>
CurveGrad<T> apply_curve_backward(const Image<T>& image, const Image<T>& curve,
                                  const Image<T>& d_out) {
  if (!image.same_shape(curve) || !image.same_shape(d_out))
    throw DomainError("apply_curve_backward: dimension mismatch");
  CurveGrad<T> g{Image<T>(image.height(), image.width(), image.channels()),
                 Image<T>(image.height(), image.width(), image.channels())};
  const auto& x = image.storage();
  const auto& cv = curve.storage();
  const auto& up = d_out.storage();
  for (std::size_t i = 0; i < x.size(); ++i) {
    g.d_image.storage()[i] = up[i] * (T(1) + cv[i] * (T(1) - T(2) * x[i]));
    g.d_curve.storage()[i] = up[i] * x[i] * (T(1) - x[i]);
  }
  return g;
}

template Image<float> apply_curve<float>(const Image<float>&, const Image<float>&);
template Image<double> apply_curve<double>(const Image<double>&, const Image<double>&);
template CurveGrad<float> apply_curve_backward<float>(const Image<float>&, const Image<float>&,
                                                      const Image<float>&);
template CurveGrad<double> apply_curve_backward<double>(const Image<double>&,
                                                        const Image<double>&,
                                                        const Image<double>&);

bool ColorPolynomial::monotone() const {
  return std::all_of(channels.begin(), channels.end(),
                     [](const QuadraticFit& f) { return f.monotone(); });
}

ImageF ColorPolynomial::apply(const ImageF& image) const {
  if (static_cast<int>(channels.size()) != image.channels())
    throw DomainError("ColorPolynomial::apply: channel count mismatch");
  ImageF out = image;
  const int c = image.channels();
  auto& v = out.storage();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double y = channels[i % c](v[i]);
    v[i] = static_cast<float>(std::clamp(y, 0.0, 1.0));
  }
  return out;
}

QuadraticFit fit_quadratic(std::span<const double> query, std::span<const double> reference) {
  if (query.size() != reference.size())
    throw DomainError("fit_quadratic: sample lists differ in length");
  std::vector<double> distinct(query.begin(), query.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3)
    throw DegenerateFitError("fit_quadratic: need at least 3 distinct query values, got " +
                             std::to_string(distinct.size()));

  // Normal equations on the design [x^2, x, 1].
  Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
  Eigen::Vector3d atb = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < query.size(); ++i) {
    const double x = query[i];
    const Eigen::Vector3d row(x * x, x, 1.0);
    ata.noalias() += row * row.transpose();
    atb += row * reference[i];
  }
  const Eigen::Vector3d coef = ata.ldlt().solve(atb);
  if (!coef.allFinite()) throw DegenerateFitError("fit_quadratic: singular normal equations");

  QuadraticFit fit{coef[0], coef[1], coef[2], 0.0};
  double sse = 0.0;
  for (std::size_t i = 0; i < query.size(); ++i) {
    const double e = fit(query[i]) - reference[i];
    sse += e * e;
  }
  fit.residual = sse / static_cast<double>(query.size());
  return fit;
}

ColorPolynomial fit_color_polynomial(const ChannelSamples& samples) {
  if (samples.query.size() != samples.reference.size() || samples.query.empty())
    throw DomainError("fit_color_polynomial: malformed sample set");
  ColorPolynomial poly;
  for (std::size_t c = 0; c < samples.channels(); ++c)
    poly.channels.push_back(fit_quadratic(samples.query[c], samples.reference[c]));
  return poly;
}

ChannelSamples sample_overlap_correspondences(const geometry::FisheyeCamera& cam_a,
                                              const geometry::FisheyeCamera& cam_b,
                                              geometry::ErpSize erp, const ImageF& image_a,
                                              const ImageF& image_b, int patch_radius,
                                              int grid_stride) {
  if (patch_radius < 0 || grid_stride <= 0)
    throw DomainError("sample_overlap_correspondences: invalid patch radius or stride");
  if (image_a.channels() != image_b.channels())
    throw DomainError("sample_overlap_correspondences: channel count mismatch");
  if (!image_a.same_grid(cam_a.height, cam_a.width) ||
      !image_b.same_grid(cam_b.height, cam_b.width))
    throw DomainError("sample_overlap_correspondences: image does not match its camera");
  const auto warp_a = geometry::build_base_warp<double>(cam_a, erp);
  const auto warp_b = geometry::build_base_warp<double>(cam_b, erp);
  const int channels = image_a.channels();
  ChannelSamples out;
  out.query.resize(channels);
  out.reference.resize(channels);
  bool overlap = false;
  for (int y = grid_stride / 2; y < erp.height; y += grid_stride)
    for (int x = grid_stride / 2; x < erp.width; x += grid_stride) {
      if (!warp_a.mask.at(y, x) || !warp_b.mask.at(y, x)) continue;
      overlap = true;
      const int ax = static_cast<int>(std::floor(warp_a.field.sx(y, x)));
      const int ay = static_cast<int>(std::floor(warp_a.field.sy(y, x)));
      const int bx = static_cast<int>(std::floor(warp_b.field.sx(y, x)));
      const int by = static_cast<int>(std::floor(warp_b.field.sy(y, x)));
      for (int dy = -patch_radius; dy <= patch_radius; ++dy)
        for (int dx = -patch_radius; dx <= patch_radius; ++dx) {
          const int qx = ax + dx, qy = ay + dy, rx = bx + dx, ry = by + dy;
          if (qx < 0 || qy < 0 || qx >= image_a.width() || qy >= image_a.height()) continue;
          if (rx < 0 || ry < 0 || rx >= image_b.width() || ry >= image_b.height()) continue;
          for (int c = 0; c < channels; ++c) {
            out.query[c].push_back(image_a.at(qy, qx, c));
            out.reference[c].push_back(image_b.at(ry, rx, c));
          }
        }
    }
  if (!overlap) throw DomainError("sample_overlap_correspondences: cameras do not overlap");
  return out;
}

ChannelSamples sample_erp_overlap(const ImageF& query, const Mask& query_mask,
                                  const ImageF& reference, const Mask& reference_mask,
                                  int patch_radius, int grid_stride) {
  if (!query.same_shape(reference) || !query_mask.same_grid(query.height(), query.width()) ||
      !reference_mask.same_grid(query.height(), query.width()))
    throw DomainError("sample_erp_overlap: dimension mismatch");
  if (patch_radius < 0 || grid_stride <= 0)
    throw DomainError("sample_erp_overlap: invalid patch radius or stride");
  const Mask both = query_mask & reference_mask;
  if (!both.any()) throw DomainError("sample_erp_overlap: footprints do not overlap");
  const int channels = query.channels();
  ChannelSamples out;
  out.query.resize(channels);
  out.reference.resize(channels);
  for (int y = grid_stride / 2; y < query.height(); y += grid_stride)
    for (int x = grid_stride / 2; x < query.width(); x += grid_stride) {
      if (!both.at(y, x)) continue;
      for (int dy = -patch_radius; dy <= patch_radius; ++dy)
        for (int dx = -patch_radius; dx <= patch_radius; ++dx) {
          const int py = y + dy;
          const int px = (x + dx + query.width()) % query.width();  // longitude wraps
          if (py < 0 || py >= query.height() || !both.at(py, px)) continue;
          for (int c = 0; c < channels; ++c) {
            out.query[c].push_back(query.at(py, px, c));
            out.reference[c].push_back(reference.at(py, px, c));
          }
        }
    }
  return out;
}

std::size_t reference_index(const geometry::RigConfig& rig, double yaw_deg) {
  std::size_t best = 0;
  double best_d = 1e9;
  for (std::size_t i = 0; i < rig.supervision_yaws_deg.size(); ++i) {
    double d = std::fmod(std::abs(rig.supervision_yaws_deg[i] - yaw_deg), 360.0);
    d = std::min(d, 360.0 - d);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

ConsistencyResult correct_weak_supervision(const std::vector<ImageF>& queries,
                                           const ImageF& reference,
                                           const geometry::RigConfig& rig,
                                           const ConsistencyOptions& options) {
  const auto masks = geometry::weak_supervision_masks(rig);
  ConsistencyResult result;
  result.reference_index = reference_index(rig, options.reference_yaw_deg);
  for (std::size_t i = 0; i < rig.supervision_yaws_deg.size(); ++i)
    if (i != result.reference_index) result.query_indices.push_back(i);
  if (queries.size() != result.query_indices.size())
    throw DomainError("correct_weak_supervision: expected " +
                      std::to_string(result.query_indices.size()) + " query views");
  const Mask& ref_mask = masks.footprints[result.reference_index];
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const Mask& q_mask = masks.footprints[result.query_indices[q]];
    const ChannelSamples samples = sample_erp_overlap(queries[q], q_mask, reference, ref_mask,
                                                      options.patch_radius, options.grid_stride);
    ColorPolynomial poly = fit_color_polynomial(samples);
    result.corrected.push_back(apply_mask(poly.apply(queries[q]), q_mask));
    result.polynomials.push_back(std::move(poly));
  }
  return result;
}

}  // namespace panostitch::color
