#include "panostitch/losses.hpp"

#include <cmath>
#include <string>

#include "panostitch/filter.hpp"
#include "panostitch/parallel.hpp"

namespace panostitch::losses {
namespace {

constexpr double kLuma[3] = {0.299, 0.587, 0.114};
constexpr double kBlurSigma = 1.0;
constexpr int kBlurRadius = 3;

template <typename T>
T sign(T v) {
  return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
}

template <typename T>
Image<T> decimate(const Image<T>& in) {
  Image<T> out(in.height() / 2, in.width() / 2, in.channels());
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      for (int c = 0; c < in.channels(); ++c) out.at(y, x, c) = in.at(2 * y, 2 * x, c);
  return out;
}

template <typename T>
Image<T> decimate_adjoint(const Image<T>& d_out, int height, int width) {
  Image<T> out(height, width, d_out.channels());
  for (int y = 0; y < d_out.height(); ++y)
    for (int x = 0; x < d_out.width(); ++x)
      for (int c = 0; c < d_out.channels(); ++c) out.at(2 * y, 2 * x, c) = d_out.at(y, x, c);
  return out;
}

template <typename T>
Image<T> luminance(const Image<T>& rgb) {
  Image<T> lum(rgb.height(), rgb.width(), 1);
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x)
      lum.at(y, x) = T(kLuma[0]) * rgb.at(y, x, 0) + T(kLuma[1]) * rgb.at(y, x, 1) +
                     T(kLuma[2]) * rgb.at(y, x, 2);
  return lum;
}

// Central differences with replicated borders, halved.
template <typename T>
T diff_x(const Image<T>& lum, int y, int x) {
  const int w = lum.width();
  return (lum.at(y, std::min(x + 1, w - 1)) - lum.at(y, std::max(x - 1, 0))) / T(2);
}
template <typename T>
T diff_y(const Image<T>& lum, int y, int x) {
  const int h = lum.height();
  return (lum.at(std::min(y + 1, h - 1), x) - lum.at(std::max(y - 1, 0), x)) / T(2);
}

template <typename T>
Image<T> level_features(const Image<T>& rgb) {
  const Image<T> lum = luminance(rgb);
  Image<T> f(rgb.height(), rgb.width(), 3);
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x) {
      f.at(y, x, 0) = lum.at(y, x);
      f.at(y, x, 1) = std::abs(diff_x(lum, y, x));
      f.at(y, x, 2) = std::abs(diff_y(lum, y, x));
    }
  return f;
}

template <typename T>
void level_features_backward(const Image<T>& rgb, const Image<T>& d_feat, Image<T>& d_rgb) {
  const Image<T> lum = luminance(rgb);
  const int h = rgb.height(), w = rgb.width();
  Image<T> d_lum(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      d_lum.at(y, x) += d_feat.at(y, x, 0);
      const T sx = sign(diff_x(lum, y, x)) * d_feat.at(y, x, 1) / T(2);
      d_lum.at(y, std::min(x + 1, w - 1)) += sx;
      d_lum.at(y, std::max(x - 1, 0)) -= sx;
      const T sy = sign(diff_y(lum, y, x)) * d_feat.at(y, x, 2) / T(2);
      d_lum.at(std::min(y + 1, h - 1), x) += sy;
      d_lum.at(std::max(y - 1, 0), x) -= sy;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) d_rgb.at(y, x, c) += T(kLuma[c]) * d_lum.at(y, x);
}

template <typename T>
std::vector<Image<T>> cascade(const Image<T>& image) {
  if (image.channels() != 3)
    throw DomainError("extract_pyramid: expected a 3-channel image");
  constexpr int kMin = 1 << kPyramidLevels;
  if (image.height() < kMin || image.width() < kMin)
    throw DomainError("extract_pyramid: image " + std::to_string(image.height()) + "x" +
                      std::to_string(image.width()) + " is smaller than 32 in some dimension");
  const auto kernel = gaussian_kernel(kBlurSigma, kBlurRadius);
  std::vector<Image<T>> chain;
  chain.reserve(kPyramidLevels);
  const Image<T>* prev = &image;
  for (int i = 0; i < kPyramidLevels; ++i) {
    chain.push_back(decimate(filter_separable(*prev, kernel)));
    prev = &chain.back();
  }
  return chain;
}

template <typename T>
void check_same(const Image<T>& a, const Image<T>& b, const char* where) {
  if (!a.same_shape(b)) throw DomainError(std::string(where) + ": dimension mismatch");
}

void check_mask(const Mask& m, int h, int w, const char* where) {
  if (!m.same_grid(h, w)) throw DomainError(std::string(where) + ": mask size mismatch");
}

template <typename T>
double mean_abs_diff(const Image<T>& a, const Image<T>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += std::abs(static_cast<double>(a.storage()[i]) - static_cast<double>(b.storage()[i]));
  return s / static_cast<double>(a.size());
}

template <typename T>
double pyramid_distance(const FeaturePyramid<T>& a, const FeaturePyramid<T>& b,
                        const std::set<int>& levels) {
  double s = 0.0;
  for (int i : levels) s += mean_abs_diff(a.level(i), b.level(i));
  return s;
}

// SSIM of one window given its moments.
struct SsimTerms {
  double value, d_mu_y, d_second_y, d_cross;
};

inline SsimTerms ssim_terms(double mu_x, double mu_y, double xx, double yy, double xy, double c1,
                            double c2) {
  const double var_x = xx - mu_x * mu_x;
  const double var_y = yy - mu_y * mu_y;
  const double cov = xy - mu_x * mu_y;
  const double a1 = 2.0 * mu_x * mu_y + c1;
  const double a2 = 2.0 * cov + c2;
  const double b1 = mu_x * mu_x + mu_y * mu_y + c1;
  const double b2 = var_x + var_y + c2;
  const double s = (a1 * a2) / (b1 * b2);
  const double inv = 1.0 / (b1 * b2);
  SsimTerms t;
  t.value = s;
  t.d_mu_y = 2.0 * mu_x * a2 * inv - 2.0 * mu_x * a1 * inv - 2.0 * mu_y * s / b1 +
             2.0 * mu_y * s / b2;
  t.d_second_y = -s / b2;
  t.d_cross = 2.0 * a1 * inv;
  return t;
}

template <typename T>
Image<T> product(const Image<T>& a, const Image<T>& b) {
  Image<T> out(a.height(), a.width(), a.channels());
  for (std::size_t i = 0; i < a.size(); ++i) out.storage()[i] = a.storage()[i] * b.storage()[i];
  return out;
}

}  // namespace

// --- extractor -------------------------------------------------------------

template <typename T>
FeaturePyramid<T> GradientPyramidExtractor<T>::extract(const Image<T>& image) const {
  FeaturePyramid<T> p;
  p.extractor_id = id();
  for (const Image<T>& level : cascade(image)) p.levels.push_back(level_features(level));
  return p;
}

template <typename T>
Image<T> GradientPyramidExtractor<T>::backward(const Image<T>& image,
                                               const std::vector<Image<T>>& d_levels) const {
  const std::vector<Image<T>> chain = cascade(image);
  const auto kernel = gaussian_kernel(kBlurSigma, kBlurRadius);
  Image<T> carry;  // cotangent of chain[i] coming from deeper levels
  for (int i = kPyramidLevels - 1; i >= 0; --i) {
    Image<T> d_level(chain[i].height(), chain[i].width(), 3);
    if (!carry.empty()) d_level = std::move(carry);
    if (i < static_cast<int>(d_levels.size()) && !d_levels[i].empty())
      level_features_backward(chain[i], d_levels[i], d_level);
    const Image<T>& parent = i == 0 ? image : chain[i - 1];
    carry = filter_separable_adjoint(
        decimate_adjoint(d_level, parent.height(), parent.width()), kernel);
  }
  return carry;
}

template <typename T>
const FeatureExtractor<T>& default_extractor() {
  static const GradientPyramidExtractor<T> instance;
  return instance;
}

// --- config ---------------------------------------------------------------

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("LossConfig: lambda must be in [0,1]");
  auto check_levels = [](const std::set<int>& levels, const char* name) {
    if (levels.empty()) throw DomainError(std::string("LossConfig: ") + name + " is empty");
    for (int l : levels)
      if (l < 1 || l > kPyramidLevels)
        throw DomainError(std::string("LossConfig: ") + name + " must be a subset of {1..5}");
  };
  check_levels(training_levels, "training_levels");
  check_levels(metric_levels, "metric_levels");
  if (ssim_window < 3 || ssim_window % 2 == 0)
    throw DomainError("LossConfig: ssim window must be odd and >= 3");
  if (!(ssim_sigma > 0.0)) throw DomainError("LossConfig: ssim sigma must be positive");
}

LossValue combine(double perceptual, double ssim, double lambda) {
  return {(1.0 - lambda) * perceptual + lambda * ssim, perceptual, ssim};
}

// --- standalone losses ----------------------------------------------------

template <typename T>
double perceptual_loss(const Image<T>& output, const Image<T>& target, const Mask& mask,
                       const LossConfig& cfg, const FeatureExtractor<T>& extractor) {
  check_same(output, target, "perceptual_loss");
  check_mask(mask, output.height(), output.width(), "perceptual_loss");
  return pyramid_distance(extractor.extract(target), extractor.extract(apply_mask(output, mask)),
                          cfg.training_levels);
}

template <typename T>
Image<T> ssim_map(const Image<T>& x, const Image<T>& y, const LossConfig& cfg) {
  check_same(x, y, "ssim_map");
  const auto kernel = gaussian_kernel(cfg.ssim_sigma, cfg.ssim_window / 2);
  const Image<T> mx = filter_separable(x, kernel);
  const Image<T> my = filter_separable(y, kernel);
  const Image<T> xx = filter_separable(product(x, x), kernel);
  const Image<T> yy = filter_separable(product(y, y), kernel);
  const Image<T> xy = filter_separable(product(x, y), kernel);
  const double c1 = cfg.ssim_k1 * cfg.ssim_k1;
  const double c2 = cfg.ssim_k2 * cfg.ssim_k2;
  const int c = x.channels();
  Image<T> out(x.height(), x.width(), 1);
  for (int py = 0; py < x.height(); ++py)
    for (int px = 0; px < x.width(); ++px) {
      double s = 0.0;
      for (int k = 0; k < c; ++k)
        s += ssim_terms(mx.at(py, px, k), my.at(py, px, k), xx.at(py, px, k), yy.at(py, px, k),
                        xy.at(py, px, k), c1, c2)
                 .value;
      out.at(py, px) = static_cast<T>(s / c);
    }
  return out;
}

Mask ssim_domain(const Mask& m_hat, const LossConfig& cfg) {
  return erode_window(m_hat, cfg.ssim_window / 2);
}

std::vector<Mask> ssim_domains(const Mask& m_hat, const std::vector<Mask>& masks,
                               const LossConfig& cfg) {
  std::vector<Mask> out;
  for (const Mask& m : masks) {
    check_mask(m, m_hat.height(), m_hat.width(), "ssim_domains");
    out.push_back(ssim_domain(m_hat & m, cfg));
  }
  return out;
}

namespace {

std::string empty_domain_message(const Mask& m_hat, const LossConfig& cfg) {
  return "no pixel of the " + std::to_string(m_hat.count()) + "-pixel exclusive mask has its full " +
         std::to_string(cfg.ssim_window) + "x" + std::to_string(cfg.ssim_window) +
         " window inside a single supervision footprint";
}

}  // namespace

template <typename T>
double ssim_loss(const Image<T>& output, const std::vector<Image<T>>& targets,
                 const std::vector<Mask>& masks, const Mask& m_hat, const LossConfig& cfg) {
  check_mask(m_hat, output.height(), output.width(), "ssim_loss");
  if (targets.size() != masks.size()) throw DomainError("ssim_loss: targets/masks mismatch");
  const auto domains = ssim_domains(m_hat, masks, cfg);
  std::size_t total_count = 0;
  for (const Mask& d : domains) total_count += d.count();
  if (total_count == 0) throw DomainError("ssim_loss: " + empty_domain_message(m_hat, cfg));
  const Image<T> masked_out = apply_mask(output, m_hat);
  double total = 0.0;
  for (std::size_t n = 0; n < targets.size(); ++n) {
    check_same(targets[n], output, "ssim_loss");
    const std::size_t count = domains[n].count();
    if (count == 0) continue;
    const Image<T> map = ssim_map(apply_mask(targets[n], m_hat), masked_out, cfg);
    double s = 0.0;
    for (std::size_t i = 0; i < domains[n].size(); ++i)
      if (domains[n][i]) s += map.storage()[i];
    total += 1.0 - s / static_cast<double>(count);
  }
  return total;
}

template <typename T>
LossValue total_loss(const Image<T>& output, const std::vector<Image<T>>& targets,
                     const std::vector<Mask>& masks, const Mask& m_hat, const LossConfig& cfg) {
  if (targets.size() != masks.size()) throw DomainError("total_loss: targets/masks mismatch");
  double lp = 0.0;
  for (std::size_t n = 0; n < targets.size(); ++n)
    lp += perceptual_loss(output, targets[n], masks[n], cfg);
  return combine(lp, ssim_loss(output, targets, masks, m_hat, cfg), cfg.lambda);
}

template <typename T>
double perceptual_distance(const Image<T>& output, const std::vector<Image<T>>& targets,
                           const std::vector<Mask>& masks, const LossConfig& cfg) {
  if (targets.size() != masks.size())
    throw DomainError("perceptual_distance: targets/masks mismatch");
  const auto& ex = default_extractor<T>();
  double d = 0.0;
  for (std::size_t n = 0; n < targets.size(); ++n) {
    check_same(output, targets[n], "perceptual_distance");
    check_mask(masks[n], output.height(), output.width(), "perceptual_distance");
    d += pyramid_distance(ex.extract(targets[n]), ex.extract(apply_mask(output, masks[n])),
                          cfg.metric_levels);
  }
  return d;
}

double psnr(const ImageF& x, const ImageF& y, const Mask& mask) {
  check_same(x, y, "psnr");
  check_mask(mask, x.height(), x.width(), "psnr");
  if (!mask.any()) throw DomainError("psnr: empty mask");
  const int c = x.channels();
  double sse = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask[p]) continue;
    for (int k = 0; k < c; ++k) {
      const double e = static_cast<double>(x.storage()[p * c + k]) - y.storage()[p * c + k];
      sse += e * e;
    }
    n += c;
  }
  if (sse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(static_cast<double>(n) / sse);
}

double mean_ssim(const ImageF& x, const ImageF& y, const Mask& mask, const LossConfig& cfg) {
  check_mask(mask, x.height(), x.width(), "mean_ssim");
  if (!mask.any()) throw DomainError("mean_ssim: empty mask");
  const ImageF map = ssim_map(x, y, cfg);
  double s = 0.0;
  for (std::size_t p = 0; p < mask.size(); ++p)
    if (mask[p]) s += map.storage()[p];
  return s / static_cast<double>(mask.count());
}

// --- evaluator ------------------------------------------------------------

template <typename T>
LossEvaluator<T>::LossEvaluator(std::vector<Image<T>> targets, std::vector<Mask> masks,
                                Mask m_hat, LossConfig cfg, const FeatureExtractor<T>& extractor)
    : targets_(std::move(targets)),
      masks_(std::move(masks)),
      m_hat_(std::move(m_hat)),
      cfg_(std::move(cfg)),
      extractor_(&extractor) {
  cfg_.validate();
  if (targets_.empty() || targets_.size() != masks_.size())
    throw DomainError("LossEvaluator: need one mask per target");
  const int h = targets_[0].height(), w = targets_[0].width();
  for (std::size_t n = 0; n < targets_.size(); ++n) {
    check_same(targets_[n], targets_[0], "LossEvaluator");
    check_mask(masks_[n], h, w, "LossEvaluator");
  }
  check_mask(m_hat_, h, w, "LossEvaluator");
  for (const auto& t : targets_) target_pyramids_.push_back(extractor_->extract(t));

  window_ = gaussian_kernel(cfg_.ssim_sigma, cfg_.ssim_window / 2);
  domains_ = losses::ssim_domains(m_hat_, masks_, cfg_);
  std::size_t total_count = 0;
  for (const Mask& d : domains_) {
    domain_counts_.push_back(d.count());
    total_count += d.count();
  }
  if (total_count == 0)
    throw DomainError("LossEvaluator: " + empty_domain_message(m_hat_, cfg_));
  for (const auto& t : targets_) {
    Image<T> x = apply_mask(t, m_hat_);
    mu_x_.push_back(filter_separable(x, window_));
    second_x_.push_back(filter_separable(product(x, x), window_));
    masked_targets_.push_back(std::move(x));
  }
}

template <typename T>
double LossEvaluator<T>::perceptual_term(const Image<T>& output, Image<T>* d_output,
                                         T scale) const {
  double loss = 0.0;
  for (std::size_t n = 0; n < targets_.size(); ++n) {
    const Image<T> masked = apply_mask(output, masks_[n]);
    const FeaturePyramid<T> po = extractor_->extract(masked);
    loss += pyramid_distance(target_pyramids_[n], po, cfg_.training_levels);
    if (!d_output) continue;
    std::vector<Image<T>> d_levels(kPyramidLevels);
    for (int i : cfg_.training_levels) {
      const Image<T>& a = po.level(i);
      const Image<T>& b = target_pyramids_[n].level(i);
      Image<T> d(a.height(), a.width(), a.channels());
      const T inv = scale / static_cast<T>(a.size());
      for (std::size_t k = 0; k < a.size(); ++k)
        d.storage()[k] = sign(a.storage()[k] - b.storage()[k]) * inv;
      d_levels[i - 1] = std::move(d);
    }
    const Image<T> d_masked = extractor_->backward(masked, d_levels);
    const int c = output.channels();
    for (std::size_t p = 0; p < masks_[n].size(); ++p)
      if (masks_[n][p])
        for (int k = 0; k < c; ++k) d_output->storage()[p * c + k] += d_masked.storage()[p * c + k];
  }
  return loss;
}

template <typename T>
double LossEvaluator<T>::ssim_term(const Image<T>& output, Image<T>* d_output, T scale) const {
  const Image<T> y = apply_mask(output, m_hat_);
  const Image<T> mu_y = filter_separable(y, window_);
  const Image<T> second_y = filter_separable(product(y, y), window_);
  const double c1 = cfg_.ssim_k1 * cfg_.ssim_k1;
  const double c2 = cfg_.ssim_k2 * cfg_.ssim_k2;
  const int h = y.height(), w = y.width(), c = y.channels();

  Image<T> a_mu, a_second, dy;
  if (d_output) {
    a_mu = Image<T>(h, w, c);
    a_second = Image<T>(h, w, c);
    dy = Image<T>(h, w, c);
  }
  double loss = 0.0;
  for (std::size_t n = 0; n < targets_.size(); ++n) {
    if (domain_counts_[n] == 0) continue;
    const Mask& domain = domains_[n];
    const double upstream = -1.0 / (static_cast<double>(domain_counts_[n]) * c);
    const Image<T>& x = masked_targets_[n];
    const Image<T> cross = filter_separable(product(x, y), window_);
    Image<T> a_cross;
    if (d_output) a_cross = Image<T>(h, w, c);
    const double sum = parallel_row_sum<double>(h, [&](int py) {
      double row = 0.0;
      for (int px = 0; px < w; ++px) {
        if (!domain.at(py, px)) continue;
        for (int k = 0; k < c; ++k) {
          const SsimTerms t =
              ssim_terms(mu_x_[n].at(py, px, k), mu_y.at(py, px, k), second_x_[n].at(py, px, k),
                         second_y.at(py, px, k), cross.at(py, px, k), c1, c2);
          row += t.value;
          if (d_output) {
            a_mu.at(py, px, k) += static_cast<T>(upstream * t.d_mu_y);
            a_second.at(py, px, k) += static_cast<T>(upstream * t.d_second_y);
            a_cross.at(py, px, k) = static_cast<T>(upstream * t.d_cross);
          }
        }
      }
      return row;
    });
    loss += 1.0 - sum / (static_cast<double>(domain_counts_[n]) * c);
    if (d_output) {
      const Image<T> back = filter_separable_adjoint(a_cross, window_);
      for (std::size_t i = 0; i < dy.size(); ++i) dy.storage()[i] += x.storage()[i] * back.storage()[i];
    }
  }
  if (d_output) {
    const Image<T> back_mu = filter_separable_adjoint(a_mu, window_);
    const Image<T> back_second = filter_separable_adjoint(a_second, window_);
    for (std::size_t p = 0; p < m_hat_.size(); ++p) {
      if (!m_hat_[p]) continue;
      for (int k = 0; k < c; ++k) {
        const std::size_t i = p * c + k;
        const T g = dy.storage()[i] + back_mu.storage()[i] +
                    T(2) * y.storage()[i] * back_second.storage()[i];
        d_output->storage()[i] += scale * g;
      }
    }
  }
  return loss;
}

template <typename T>
LossValue LossEvaluator<T>::evaluate(const Image<T>& output, Image<T>* d_output) const {
  check_same(output, targets_[0], "LossEvaluator::evaluate");
  if (d_output) *d_output = Image<T>(output.height(), output.width(), output.channels());
  const double lp = perceptual_term(output, d_output, static_cast<T>(1.0 - cfg_.lambda));
  const double ls = ssim_term(output, d_output, static_cast<T>(cfg_.lambda));
  return combine(lp, ls, cfg_.lambda);
}

#define PANOSTITCH_INSTANTIATE(T)                                                              \
  template class GradientPyramidExtractor<T>;                                                  \
  template const FeatureExtractor<T>& default_extractor<T>();                                  \
  template double perceptual_loss<T>(const Image<T>&, const Image<T>&, const Mask&,            \
                                     const LossConfig&, const FeatureExtractor<T>&);           \
  template Image<T> ssim_map<T>(const Image<T>&, const Image<T>&, const LossConfig&);          \
  template double ssim_loss<T>(const Image<T>&, const std::vector<Image<T>>&,                 \
                               const std::vector<Mask>&, const Mask&,     \
                               const LossConfig&);                                             \
  template LossValue total_loss<T>(const Image<T>&, const std::vector<Image<T>>&,              \
                                   const std::vector<Mask>&, const Mask&, const LossConfig&);  \
  template double perceptual_distance<T>(const Image<T>&, const std::vector<Image<T>>&,        \
                                         const std::vector<Mask>&, const LossConfig&);         \
  template class LossEvaluator<T>;

PANOSTITCH_INSTANTIATE(float)
PANOSTITCH_INSTANTIATE(double)

#undef PANOSTITCH_INSTANTIATE

}  // namespace panostitch::losses
