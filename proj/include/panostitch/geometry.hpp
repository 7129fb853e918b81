#pragma once

#include <Eigen/Core>
#include <vector>

#include "panostitch/image.hpp"

namespace panostitch::geometry {

/// Continuous pixel coordinates; pixel (i, j) has its center at (i + 0.5, j + 0.5).
struct PixelCoord {
  double x = 0.0;
  double y = 0.0;
};

struct ErpSize {
  int width = 0;
  int height = 0;
};

/// Ideal equidistant fisheye lens. The optical axis points at longitude
/// `yaw_deg` on the horizon; pitch and roll are zero.
///
/// World frame: +z forward (longitude 0), +x right (longitude +90), +y up.
/// Image frame: u grows to the right, v grows downward.
struct FisheyeCamera {
  double yaw_deg = 0.0;
  double fov_deg = 185.0;
  int width = 256;
  int height = 256;
  double cx = 128.0;
  double cy = 128.0;
  double radius_px = 128.0;

  /// Square sensor whose image circle touches all four edges.
  static FisheyeCamera centered(int size, double fov_deg, double yaw_deg);

  /// Throws DomainError when an invariant is broken.
  void validate() const;
  double half_fov_rad() const;
};

struct RigConfig {
  std::vector<double> input_yaws_deg{0.0, 120.0, 240.0};
  std::vector<double> supervision_yaws_deg{60.0, 180.0, 300.0};
  FisheyeCamera camera_template = FisheyeCamera::centered(256, 185.0, 0.0);
  int erp_width = 256;
  int erp_height = 128;

  void validate() const;
  ErpSize erp_size() const { return {erp_width, erp_height}; }
  FisheyeCamera input_camera(std::size_t i) const;
  FisheyeCamera supervision_camera(std::size_t i) const;
};

Eigen::Vector3d erp_pixel_to_ray(PixelCoord px, ErpSize erp);

/// Inverse ERP mapping; x lies in [0, width), y in [0, height].
PixelCoord ray_to_erp_pixel(const Eigen::Vector3d& ray, ErpSize erp);

struct FisheyeProjection {
  PixelCoord pixel;
  bool valid = false;
};

FisheyeProjection ray_to_fisheye_pixel(const Eigen::Vector3d& ray, const FisheyeCamera& cam);
Eigen::Vector3d fisheye_pixel_to_ray(PixelCoord px, const FisheyeCamera& cam);

/// Lens model in the camera frame (optical axis = +z), independent of yaw.
FisheyeProjection project_camera_ray(const Eigen::Vector3d& ray_cam, const FisheyeCamera& cam);
Eigen::Vector3d unproject_camera_pixel(PixelCoord px, const FisheyeCamera& cam);

/// Camera-to-world rotation: yaw about +y, then pitch about +x, then roll
/// about +z (applied to the camera-frame vector in reverse order).
Eigen::Matrix3d camera_rotation(double yaw_deg, double pitch_deg = 0.0, double roll_deg = 0.0);

template <typename T>
struct BaseWarp {
  WarpField<T> field;
  Mask mask;
};

/// Source fisheye coordinate for every ERP pixel center; mask marks valid rays.
template <typename T = float>
BaseWarp<T> build_base_warp(const FisheyeCamera& cam, ErpSize erp);

struct SupervisionMasks {
  std::vector<Mask> footprints;  // M_n
  Mask exclusive;                // M_hat: covered by exactly one supervision camera
};

SupervisionMasks weak_supervision_masks(const RigConfig& rig);

/// Fraction of the sphere inside a cone with the given half angle.
double spherical_cap_fraction(double half_angle_rad);

/// Solid-angle fraction of the sphere covered by an ERP mask.
double erp_area_fraction(const Mask& mask);

}  // namespace panostitch::geometry
