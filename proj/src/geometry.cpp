#include "panostitch/geometry.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "panostitch/parallel.hpp"

namespace panostitch::geometry {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;
constexpr double kUnitTolerance = 1e-6;

void require_unit(const Eigen::Vector3d& ray, const char* where) {
  const double n = ray.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > kUnitTolerance)
    throw DomainError(std::string(where) + ": ray is not unit length (norm " + std::to_string(n) +
                      ")");
}

}  // namespace

FisheyeCamera FisheyeCamera::centered(int size, double fov_deg, double yaw_deg) {
  FisheyeCamera cam;
  cam.yaw_deg = yaw_deg;
  cam.fov_deg = fov_deg;
  cam.width = size;
  cam.height = size;
  cam.cx = size / 2.0;
  cam.cy = size / 2.0;
  cam.radius_px = size / 2.0;
  return cam;
}

void FisheyeCamera::validate() const {
  if (!(fov_deg > 0.0 && fov_deg <= 360.0))
    throw DomainError("FisheyeCamera: fov_deg must be in (0, 360], got " + std::to_string(fov_deg));
  if (!(radius_px > 0.0)) throw DomainError("FisheyeCamera: radius_px must be positive");
  if (width <= 0 || height <= 0) throw DomainError("FisheyeCamera: empty sensor");
  if (!(cx >= 0.0 && cx <= width && cy >= 0.0 && cy <= height))
    throw DomainError("FisheyeCamera: principal point outside the image");
  if (!std::isfinite(yaw_deg)) throw DomainError("FisheyeCamera: yaw is not finite");
}

double FisheyeCamera::half_fov_rad() const { return 0.5 * fov_deg * kDeg; }

void RigConfig::validate() const {
  camera_template.validate();
  if (input_yaws_deg.size() < 2) throw DomainError("RigConfig: need at least two input cameras");
  if (supervision_yaws_deg.empty()) throw DomainError("RigConfig: no supervision cameras");
  auto check_range = [](double yaw) {
    if (!(yaw >= 0.0 && yaw < 360.0))
      throw DomainError("RigConfig: yaw " + std::to_string(yaw) + " outside [0, 360)");
  };
  for (double a : input_yaws_deg) {
    check_range(a);
    for (double b : supervision_yaws_deg)
      if (a == b)
        throw DomainError("RigConfig: yaw " + std::to_string(a) +
                          " is both an input and a supervision camera");
  }
  for (double b : supervision_yaws_deg) check_range(b);
  if (erp_width <= 0 || erp_height <= 0 || erp_width != 2 * erp_height)
    throw DomainError("RigConfig: ERP size must satisfy width = 2 * height");
}

FisheyeCamera RigConfig::input_camera(std::size_t i) const {
  FisheyeCamera cam = camera_template;
  cam.yaw_deg = input_yaws_deg.at(i);
  return cam;
}

FisheyeCamera RigConfig::supervision_camera(std::size_t i) const {
  FisheyeCamera cam = camera_template;
  cam.yaw_deg = supervision_yaws_deg.at(i);
  return cam;
}

Eigen::Vector3d erp_pixel_to_ray(PixelCoord px, ErpSize erp) {
  if (erp.width <= 0 || erp.height <= 0) throw DomainError("erp_pixel_to_ray: empty ERP size");
  if (!(px.x >= 0.0 && px.x <= erp.width && px.y >= 0.0 && px.y <= erp.height))
    throw DomainError("erp_pixel_to_ray: pixel (" + std::to_string(px.x) + ", " +
                      std::to_string(px.y) + ") outside the panorama");
  const double lon = 2.0 * kPi * px.x / erp.width - kPi;
  const double lat = 0.5 * kPi - kPi * px.y / erp.height;
  const double cl = std::cos(lat);
  return {cl * std::sin(lon), std::sin(lat), cl * std::cos(lon)};
}

PixelCoord ray_to_erp_pixel(const Eigen::Vector3d& ray, ErpSize erp) {
  const double lon = std::atan2(ray.x(), ray.z());
  const double lat = std::asin(std::clamp(ray.y() / ray.norm(), -1.0, 1.0));
  double x = (lon + kPi) / (2.0 * kPi) * erp.width;
  if (x >= erp.width) x -= erp.width;
  return {x, (0.5 * kPi - lat) / kPi * erp.height};
}

Eigen::Matrix3d camera_rotation(double yaw_deg, double pitch_deg, double roll_deg) {
  const double y = yaw_deg * kDeg, p = pitch_deg * kDeg, r = roll_deg * kDeg;
  Eigen::Matrix3d ry, rx, rz;
  ry << std::cos(y), 0, std::sin(y), 0, 1, 0, -std::sin(y), 0, std::cos(y);
  rx << 1, 0, 0, 0, std::cos(p), -std::sin(p), 0, std::sin(p), std::cos(p);
  rz << std::cos(r), -std::sin(r), 0, std::sin(r), std::cos(r), 0, 0, 0, 1;
  return ry * rx * rz;
}

FisheyeProjection project_camera_ray(const Eigen::Vector3d& ray_cam, const FisheyeCamera& cam) {
  const double rho = std::hypot(ray_cam.x(), ray_cam.y());
  const double theta = std::atan2(rho, ray_cam.z());
  const double r = cam.radius_px * theta / cam.half_fov_rad();
  // On the optical axis (or directly behind it) the azimuth is undefined; any
  // direction gives the same radius, so pick +u.
  const double ux = rho > 0.0 ? ray_cam.x() / rho : 1.0;
  const double uy = rho > 0.0 ? ray_cam.y() / rho : 0.0;
  FisheyeProjection out;
  out.pixel = {cam.cx + r * ux, cam.cy - r * uy};
  const bool in_bounds = out.pixel.x >= 0.0 && out.pixel.x <= cam.width && out.pixel.y >= 0.0 &&
                         out.pixel.y <= cam.height;
  out.valid = theta <= cam.half_fov_rad() && r <= cam.radius_px && in_bounds;
  return out;
}

Eigen::Vector3d unproject_camera_pixel(PixelCoord px, const FisheyeCamera& cam) {
  const double dx = px.x - cam.cx;
  const double dy = cam.cy - px.y;
  const double r = std::hypot(dx, dy);
  if (!(r <= cam.radius_px * (1.0 + 1e-12)))
    throw DomainError("fisheye_pixel_to_ray: pixel (" + std::to_string(px.x) + ", " +
                      std::to_string(px.y) + ") lies outside the image circle");
  const double theta = std::min(r, cam.radius_px) / cam.radius_px * cam.half_fov_rad();
  const double s = std::sin(theta);
  if (r == 0.0) return {0.0, 0.0, 1.0};
  return {s * dx / r, s * dy / r, std::cos(theta)};
}

FisheyeProjection ray_to_fisheye_pixel(const Eigen::Vector3d& ray, const FisheyeCamera& cam) {
  require_unit(ray, "ray_to_fisheye_pixel");
  return project_camera_ray(camera_rotation(cam.yaw_deg).transpose() * ray, cam);
}

Eigen::Vector3d fisheye_pixel_to_ray(PixelCoord px, const FisheyeCamera& cam) {
  return camera_rotation(cam.yaw_deg) * unproject_camera_pixel(px, cam);
}

template <typename T>
BaseWarp<T> build_base_warp(const FisheyeCamera& cam, ErpSize erp) {
  cam.validate();
  if (erp.width <= 0 || erp.height <= 0) throw DomainError("build_base_warp: empty ERP size");
  BaseWarp<T> out{WarpField<T>(erp.height, erp.width), Mask(erp.height, erp.width)};
  const Eigen::Matrix3d world_to_cam = camera_rotation(cam.yaw_deg).transpose();
  parallel_rows(erp.height, [&](int y) {
    for (int x = 0; x < erp.width; ++x) {
      const Eigen::Vector3d ray = erp_pixel_to_ray({x + 0.5, y + 0.5}, erp);
      const FisheyeProjection proj = project_camera_ray(world_to_cam * ray, cam);
      out.field.sx(y, x) = static_cast<T>(proj.pixel.x);
      out.field.sy(y, x) = static_cast<T>(proj.pixel.y);
      out.mask.set(y, x, proj.valid);
    }
  });
  return out;
}

template BaseWarp<float> build_base_warp<float>(const FisheyeCamera&, ErpSize);
template BaseWarp<double> build_base_warp<double>(const FisheyeCamera&, ErpSize);

SupervisionMasks weak_supervision_masks(const RigConfig& rig) {
  rig.validate();
  const ErpSize erp = rig.erp_size();
  SupervisionMasks out;
  std::vector<int> cover(static_cast<std::size_t>(erp.width) * erp.height, 0);
  for (std::size_t n = 0; n < rig.supervision_yaws_deg.size(); ++n) {
    Mask m = build_base_warp<float>(rig.supervision_camera(n), erp).mask;
    for (std::size_t i = 0; i < m.size(); ++i) cover[i] += m[i];
    out.footprints.push_back(std::move(m));
  }
  out.exclusive = Mask(erp.height, erp.width);
  for (int y = 0; y < erp.height; ++y)
    for (int x = 0; x < erp.width; ++x)
      out.exclusive.set(y, x, cover[static_cast<std::size_t>(y) * erp.width + x] == 1);
  return out;
}

double spherical_cap_fraction(double half_angle_rad) {
  return 0.5 * (1.0 - std::cos(std::clamp(half_angle_rad, 0.0, kPi)));
}

double erp_area_fraction(const Mask& mask) {
  // Each ERP row is a latitude band; its solid angle is proportional to the
  // difference of sin(latitude) across the band.
  double covered = 0.0;
  for (int y = 0; y < mask.height(); ++y) {
    const double lat0 = 0.5 * kPi - kPi * y / mask.height();
    const double lat1 = 0.5 * kPi - kPi * (y + 1) / mask.height();
    const double band = (std::sin(lat0) - std::sin(lat1)) / mask.width();
    int row = 0;
    for (int x = 0; x < mask.width(); ++x) row += mask.at(y, x) ? 1 : 0;
    covered += band * row;
  }
  return covered / 2.0;
}

}  // namespace panostitch::geometry
