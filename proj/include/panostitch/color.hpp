#pragma once

#include <span>
#include <vector>

#include "panostitch/geometry.hpp"
#include "panostitch/image.hpp"

namespace panostitch::color {

// --- per-pixel quadratic curves -------------------------------------------

/// x' = x + C x (1 - x), per pixel and channel. `curve` must match `image`
/// in shape; with |C| <= 1 the map keeps [0,1] in [0,1] and fixes 0 and 1.
template <typename T>
Image<T> apply_curve(const Image<T>& image, const Image<T>& curve);

template <typename T>
struct CurveGrad {
  Image<T> d_image;  // upstream * (1 + C (1 - 2x))
  Image<T> d_curve;  // upstream * x (1 - x)
};

template <typename T>
CurveGrad<T> apply_curve_backward(const Image<T>& image, const Image<T>& curve,
                                  const Image<T>& d_out);

// --- consistency polynomial ----------------------------------------------

class DegenerateFitError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// x' = a x^2 + b x + c for one channel.
struct QuadraticFit {
  double a = 0.0;
  double b = 1.0;
  double c = 0.0;
  double residual = 0.0;  // mean squared error over the fitted samples

  double operator()(double x) const { return (a * x + b) * x + c; }
  /// Nondecreasing on [0,1]: the derivative is affine so checking both ends suffices.
  bool monotone() const { return b >= 0.0 && 2.0 * a + b >= 0.0; }
};

struct ColorPolynomial {
  std::vector<QuadraticFit> channels;

  bool monotone() const;
  /// Applies per channel and clamps to [0,1].
  ImageF apply(const ImageF& image) const;
};

/// Co-indexed intensity samples, one list pair per channel.
struct ChannelSamples {
  std::vector<std::vector<double>> query;
  std::vector<std::vector<double>> reference;

  std::size_t channels() const { return query.size(); }
  std::size_t count() const { return query.empty() ? 0 : query.front().size(); }
};

/// Least-squares quadratic mapping query -> reference (normal equations in
/// double). Throws DegenerateFitError with fewer than 3 distinct query values.
QuadraticFit fit_quadratic(std::span<const double> query, std::span<const double> reference);

ColorPolynomial fit_color_polynomial(const ChannelSamples& samples);

/// Fisheye-domain correspondences through the shared ERP frame: ERP pixels on
/// a regular grid inside both footprints map to a fisheye pixel in each image,
/// and (2r+1)^2 patches around those pixels are read pairwise.
ChannelSamples sample_overlap_correspondences(const geometry::FisheyeCamera& cam_a,
                                              const geometry::FisheyeCamera& cam_b,
                                              geometry::ErpSize erp, const ImageF& image_a,
                                              const ImageF& image_b, int patch_radius,
                                              int grid_stride = 4);

/// Same idea for images already projected to ERP: corresponding pixels share
/// coordinates, so patches are read at identical locations.
ChannelSamples sample_erp_overlap(const ImageF& query, const Mask& query_mask,
                                  const ImageF& reference, const Mask& reference_mask,
                                  int patch_radius, int grid_stride = 4);

struct ConsistencyOptions {
  double reference_yaw_deg = 180.0;
  int patch_radius = 2;
  int grid_stride = 4;
};

struct ConsistencyResult {
  std::vector<ImageF> corrected;          // same order as the queries
  std::vector<ColorPolynomial> polynomials;
  std::size_t reference_index = 0;        // index into rig.supervision_yaws_deg
  std::vector<std::size_t> query_indices;
};

/// Fits one polynomial per query view against the reference view on their
/// footprint overlap and applies it to the whole query (clamped to [0,1],
/// zero outside the query footprint). Queries are the supervision views other
/// than the reference, in rig order.
ConsistencyResult correct_weak_supervision(const std::vector<ImageF>& queries,
                                           const ImageF& reference,
                                           const geometry::RigConfig& rig,
                                           const ConsistencyOptions& options = {});

/// Index of the supervision camera closest to `yaw_deg`.
std::size_t reference_index(const geometry::RigConfig& rig, double yaw_deg);

}  // namespace panostitch::color
