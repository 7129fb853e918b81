#pragma once

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "panostitch/image.hpp"

namespace panostitch::losses {

constexpr int kPyramidLevels = 5;

/// Five feature maps; level i (1-based) has size (H >> i, W >> i).
template <typename T>
struct FeaturePyramid {
  std::vector<Image<T>> levels;
  std::string extractor_id;

  const Image<T>& level(int i) const { return levels.at(i - 1); }
};

/// Pluggable multi-scale feature extractor. Any implementation producing five
/// halving levels (with an exact backward pass) can drive the perceptual terms.
template <typename T>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string id() const = 0;
  virtual FeaturePyramid<T> extract(const Image<T>& image) const = 0;
  /// Pulls per-level cotangents back onto the image. Empty entries in
  /// `d_levels` are treated as zero.
  virtual Image<T> backward(const Image<T>& image, const std::vector<Image<T>>& d_levels) const = 0;
};

/// Default extractor: per level, Gaussian blur (sigma 1) of the previous level,
/// 2x decimation, then [luminance, |d/dx luminance|, |d/dy luminance|].
template <typename T>
class GradientPyramidExtractor final : public FeatureExtractor<T> {
 public:
  std::string id() const override { return "gradient-pyramid-v1"; }
  FeaturePyramid<T> extract(const Image<T>& image) const override;
  Image<T> backward(const Image<T>& image, const std::vector<Image<T>>& d_levels) const override;
};

template <typename T>
const FeatureExtractor<T>& default_extractor();

struct LossConfig {
  double lambda = 0.4;
  std::set<int> training_levels{3, 4, 5};
  std::set<int> metric_levels{1, 2, 3, 4, 5};
  int ssim_window = 11;
  double ssim_sigma = 1.5;
  double ssim_k1 = 0.01;
  double ssim_k2 = 0.03;

  void validate() const;
};

struct LossValue {
  double total = 0.0;
  double perceptual = 0.0;
  double ssim = 0.0;
};

/// Sum over `levels` of the mean absolute feature difference
/// between target and mask * output.
template <typename T>
double perceptual_loss(const Image<T>& output, const Image<T>& target, const Mask& mask,
                       const LossConfig& cfg,
                       const FeatureExtractor<T>& extractor = default_extractor<T>());

/// Per-pixel SSIM (Gaussian window, reflect-101 borders), averaged over
/// channels. Returns a single-channel map.
template <typename T>
Image<T> ssim_map(const Image<T>& x, const Image<T>& y, const LossConfig& cfg);

/// Pixels where the SSIM window lies entirely inside `m_hat`.
Mask ssim_domain(const Mask& m_hat, const LossConfig& cfg);

/// Per-target SSIM domains: windows entirely inside m_hat & masks[n], i.e.
/// the part of the exclusive region that target n actually covers.
std::vector<Mask> ssim_domains(const Mask& m_hat, const std::vector<Mask>& masks,
                               const LossConfig& cfg);

/// sum_n (1 - mean SSIM(m_hat * target_n, m_hat * output)), each mean taken
/// over target n's SSIM domain. Targets with an empty domain contribute 0;
/// throws when every domain is empty.
template <typename T>
double ssim_loss(const Image<T>& output, const std::vector<Image<T>>& targets,
                 const std::vector<Mask>& masks, const Mask& m_hat, const LossConfig& cfg);

/// (1 - lambda) * perceptual + lambda * ssim.
LossValue combine(double perceptual, double ssim, double lambda);

template <typename T>
LossValue total_loss(const Image<T>& output, const std::vector<Image<T>>& targets,
                     const std::vector<Mask>& masks, const Mask& m_hat, const LossConfig& cfg);

/// Perceptual structure summed over levels 1..5 (cfg.metric_levels).
template <typename T>
double perceptual_distance(const Image<T>& output, const std::vector<Image<T>>& targets,
                           const std::vector<Mask>& masks, const LossConfig& cfg = {});

constexpr double kPsnrIdentical = 99.0;

/// 10 log10(1 / MSE) over masked pixels; 99 dB when the images agree exactly.
double psnr(const ImageF& x, const ImageF& y, const Mask& mask);

/// Mean SSIM over the mask (whole map when the mask is empty-shaped).
double mean_ssim(const ImageF& x, const ImageF& y, const Mask& mask, const LossConfig& cfg = {});

/// Caches everything about the supervision side of the objective so repeated
/// evaluations only process the output image.
template <typename T>
class LossEvaluator {
 public:
  LossEvaluator(std::vector<Image<T>> targets, std::vector<Mask> masks, Mask m_hat,
                LossConfig cfg,
                const FeatureExtractor<T>& extractor = default_extractor<T>());

  /// Loss of `output`; fills `d_output` with dL/dO when non-null.
  LossValue evaluate(const Image<T>& output, Image<T>* d_output = nullptr) const;

  const LossConfig& config() const { return cfg_; }
  const std::vector<Mask>& ssim_domains() const { return domains_; }

 private:
  double perceptual_term(const Image<T>& output, Image<T>* d_output, T scale) const;
  double ssim_term(const Image<T>& output, Image<T>* d_output, T scale) const;

  std::vector<Image<T>> targets_;
  std::vector<Mask> masks_;
  Mask m_hat_;
  LossConfig cfg_;
  const FeatureExtractor<T>* extractor_;
  std::vector<FeaturePyramid<T>> target_pyramids_;
  std::vector<double> window_;
  std::vector<Mask> domains_;
  std::vector<std::size_t> domain_counts_;
  // SSIM statistics of m_hat * target_n.
  std::vector<Image<T>> masked_targets_, mu_x_, second_x_;
};

}  // namespace panostitch::losses
