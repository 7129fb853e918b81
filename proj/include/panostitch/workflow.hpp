#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "panostitch/config.hpp"
#include "panostitch/optimizer.hpp"
#include "panostitch/rigsim.hpp"

namespace panostitch::workflow {

struct StitchOutcome {
  pipeline::SceneParams<float> params;
  optimizer::OptimReport report;
  ImageF initial;  // panorama from init_params
  ImageF output;   // panorama from the best parameters
  pipeline::ForwardState<float> state;
};

/// Optimizes one scene with the settings in `cfg`.
StitchOutcome stitch_scene(const rigsim::SceneBundle& scene, const config::Config& cfg,
                           const optimizer::ProgressFn& progress = {});

struct Metrics {
  double perceptual_distance = 0.0;
  std::optional<double> psnr;  // only with a truth panorama
  std::optional<double> ssim;
};

/// P_d against the weak supervisions; PSNR and SSIM against the truth
/// panorama over the pixels covered by at least one input.
Metrics evaluate_panorama(const ImageF& panorama, const rigsim::SceneBundle& scene,
                          const config::Config& cfg);

/// Union of the input footprints.
Mask covered_region(const rigsim::SceneBundle& scene);

/// "iteration,total,perceptual,ssim" rows.
std::string report_csv(const optimizer::OptimReport& report);

/// Writes the forward intermediates as PNGs (weights, warped inputs, P, O).
void dump_intermediates(const pipeline::ForwardState<float>& state,
                        const std::filesystem::path& dir);

/// Random pose and color errors: |yaw| <= max_yaw_deg and gains in
/// [gain_min, gain_max] for the inputs; non-reference supervision cameras get
/// gains too when `supervision_gains` is set.
rigsim::PerturbationSpec random_perturbation(const geometry::RigConfig& rig, std::uint64_t seed,
                                             double max_yaw_deg, double gain_min,
                                             double gain_max, bool supervision_gains,
                                             double reference_yaw_deg, double noise_sigma);

}  // namespace panostitch::workflow
