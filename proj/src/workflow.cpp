#include "panostitch/workflow.hpp"

#include <random>
#include <sstream>

#include "panostitch/io.hpp"

namespace panostitch::workflow {

StitchOutcome stitch_scene(const rigsim::SceneBundle& scene, const config::Config& cfg,
                           const optimizer::ProgressFn& progress) {
  const auto inputs = scene.stitch_inputs();
  const losses::LossEvaluator<float> objective(scene.supervision_erp, scene.masks, scene.m_hat,
                                               cfg.loss());
  const auto alpha = static_cast<float>(cfg.alpha());
  const int divisor = cfg.control_divisor();
  auto result = optimizer::optimize_scene(inputs, objective, cfg.optim(), alpha, divisor, progress);

  StitchOutcome out;
  out.initial = pipeline::forward(inputs, pipeline::init_params<float>(inputs.shape(divisor)), alpha)
                    .output;
  out.state = pipeline::forward(inputs, result.params, alpha);
  out.output = out.state.output;
  out.params = std::move(result.params);
  out.report = std::move(result.report);
  return out;
}

Mask covered_region(const rigsim::SceneBundle& scene) {
  Mask cov(scene.rig.erp_height, scene.rig.erp_width);
  for (const auto& m : scene.base_masks) cov = cov | m;
  return cov;
}

Metrics evaluate_panorama(const ImageF& panorama, const rigsim::SceneBundle& scene,
                          const config::Config& cfg) {
  const auto erp = scene.rig.erp_size();
  if (!panorama.same_grid(erp.height, erp.width) || panorama.channels() != 3)
    throw DomainError("eval: panorama is " + std::to_string(panorama.width()) + "x" +
                      std::to_string(panorama.height()) + ", scene expects " +
                      std::to_string(erp.width) + "x" + std::to_string(erp.height) + " RGB");
  const auto loss_cfg = cfg.loss();
  Metrics m;
  m.perceptual_distance =
      losses::perceptual_distance(panorama, scene.supervision_erp, scene.masks, loss_cfg);
  if (!scene.truth.empty()) {
    const Mask cov = covered_region(scene);
    m.psnr = losses::psnr(panorama, scene.truth, cov);
    m.ssim = losses::mean_ssim(panorama, scene.truth, cov, loss_cfg);
  }
  return m;
}

std::string report_csv(const optimizer::OptimReport& report) {
  std::ostringstream out;
  out.precision(10);
  out << "iteration,total,perceptual,ssim\n";
  for (std::size_t i = 0; i < report.history.size(); ++i) {
    const auto& r = report.history[i];
    out << i << "," << r.total << "," << r.perceptual << "," << r.ssim << "\n";
  }
  return out.str();
}

void dump_intermediates(const pipeline::ForwardState<float>& state,
                        const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t n = 0; n < state.warped.size(); ++n) {
    const std::string s = std::to_string(n);
    io::write_png(dir / ("corrected_" + s + ".png"), state.corrected[n]);
    io::write_png(dir / ("warped_" + s + ".png"), state.warped[n]);
    io::write_png(dir / ("weight_" + s + ".png"), state.weights.maps[n]);
    io::write_mask_png(dir / ("validity_" + s + ".png"), state.validity[n]);
    io::write_wssf(dir / ("warp_" + s + ".wssf"), state.final_warp[n].coords());
  }
  io::write_png(dir / "blended.png", state.blended);
  io::write_png(dir / "output.png", state.output);
}

rigsim::PerturbationSpec random_perturbation(const geometry::RigConfig& rig, std::uint64_t seed,
                                             double max_yaw_deg, double gain_min,
                                             double gain_max, bool supervision_gains,
                                             double reference_yaw_deg, double noise_sigma) {
  if (!(gain_min > 0 && gain_min <= gain_max)) throw DomainError("gain range must be 0 < min <= max");
  if (!(max_yaw_deg >= 0)) throw DomainError("yaw error bound must be non-negative");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> yaw(-max_yaw_deg, max_yaw_deg);
  std::uniform_real_distribution<double> gain(gain_min, gain_max);
  rigsim::PerturbationSpec p;
  p.seed = seed;
  p.noise_sigma = noise_sigma;
  for (std::size_t i = 0; i < rig.input_yaws_deg.size(); ++i) {
    rigsim::CameraPerturbation c;
    c.yaw_deg = yaw(rng);
    c.gain = gain(rng);
    p.inputs.push_back(c);
  }
  const std::size_t ref = color::reference_index(rig, reference_yaw_deg);
  for (std::size_t i = 0; i < rig.supervision_yaws_deg.size(); ++i) {
    rigsim::CameraPerturbation c;
    const double g = gain(rng);
    if (supervision_gains && i != ref) c.gain = g;
    p.supervision.push_back(c);
  }
  return p;
}

}  // namespace panostitch::workflow
