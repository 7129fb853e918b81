#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "panostitch/color.hpp"
#include "panostitch/geometry.hpp"
#include "panostitch/image.hpp"
#include "panostitch/pipeline.hpp"

namespace panostitch::rigsim {

struct CameraPerturbation {
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
  double roll_deg = 0.0;
  double gain = 1.0;
  double gamma = 1.0;

  void validate() const;
  bool is_identity() const;
};

/// Pose and color perturbations for the rendered cameras. Missing entries
/// mean "unperturbed".
struct PerturbationSpec {
  std::vector<CameraPerturbation> inputs;
  std::vector<CameraPerturbation> supervision;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  CameraPerturbation input(std::size_t i) const;
  CameraPerturbation supervised(std::size_t i) const;
};

/// Renders a fisheye view of an ERP panorama. Pixels outside the image
/// circle are 0; the panorama wraps horizontally.
ImageF render_fisheye(const ImageF& source_erp, const geometry::FisheyeCamera& cam);

/// Same, with an explicit camera-to-world rotation (used for pose errors).
ImageF render_fisheye(const ImageF& source_erp, const geometry::FisheyeCamera& cam,
                      const Eigen::Matrix3d& camera_to_world);

/// Gamma, then gain, inside the image circle; then additive Gaussian noise and
/// clamping to [0,1].
ImageF perturb_colors(const ImageF& image, const geometry::FisheyeCamera& cam,
                      const CameraPerturbation& p, double noise_sigma, std::mt19937_64& rng);

/// Projects a fisheye image into ERP with the camera's nominal calibration;
/// zero outside its footprint.
ImageF project_to_erp(const ImageF& fisheye, const geometry::FisheyeCamera& cam,
                      geometry::ErpSize erp);

struct SceneBundle {
  geometry::RigConfig rig;
  PerturbationSpec perturbation;
  std::vector<ImageF> inputs;            // fisheye renders at the input yaws
  std::vector<ImageF> supervision_raw;   // ERP-projected, before consistency correction
  std::vector<ImageF> supervision_erp;   // corrected weak-supervision targets
  std::vector<Mask> masks;               // M_n
  Mask m_hat;
  std::vector<WarpField<float>> base_fields;  // nominal input calibration
  std::vector<Mask> base_masks;
  std::vector<color::ColorPolynomial> polynomials;  // per non-reference supervision view
  ImageF truth;                          // held out; never used for optimization

  pipeline::StitchInputs<float> stitch_inputs() const;
};

SceneBundle make_scene(const ImageF& source_erp, const geometry::RigConfig& rig,
                       const PerturbationSpec& perturb,
                       const color::ConsistencyOptions& consistency = {});

/// Base warps and footprints of the nominal input cameras.
void attach_calibration(SceneBundle& scene);

/// Seam-continuous procedural panorama (soft-edged caps, stripes and a sky
/// gradient defined on the sphere), values in [0.05, 0.95].
ImageF synthetic_panorama(int width, int height, std::uint64_t seed);

/// Mean absolute difference between views over all pairwise footprint overlaps.
double overlap_disagreement(const std::vector<ImageF>& views, const std::vector<Mask>& masks);

/// Perturbation manifest: noise_sigma, seed and input.<n>.{yaw,pitch,roll,
/// gain,gamma} / supervision.<n>.{...} as key = value lines.
std::string perturbation_text(const PerturbationSpec& p);
PerturbationSpec parse_perturbation(std::string_view text, std::string_view origin);
PerturbationSpec read_perturbation(const std::filesystem::path& path);

/// Directory layout: scene.cfg, manifest.txt, truth.png, inputs/input_<n>.png,
/// supervision/supervision_<n>.png, masks/mask_<n>.png, masks/m_hat.png.
void write_scene(const SceneBundle& scene, const std::filesystem::path& dir);
SceneBundle read_scene(const std::filesystem::path& dir);

}  // namespace panostitch::rigsim
