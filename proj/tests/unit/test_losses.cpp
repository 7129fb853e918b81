#include <gtest/gtest.h>

#include <cmath>

#include "panostitch/filter.hpp"
#include "panostitch/losses.hpp"
#include "test_util.hpp"

using namespace panostitch;
using namespace panostitch::losses;

namespace {

// Straight-line oracles in double: direct 2-D windows, no separable passes.

int reflect(int i, int n) {
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

ImageD blur2d(const ImageD& in, double sigma, int r) {
  std::vector<double> k(2 * r + 1);
  double s = 0.0;
  for (int t = -r; t <= r; ++t) s += k[t + r] = std::exp(-0.5 * t * t / (sigma * sigma));
  for (auto& v : k) v /= s;
  ImageD out(in.height(), in.width(), in.channels());
  for (int y = 0; y < in.height(); ++y)
    for (int x = 0; x < in.width(); ++x)
      for (int c = 0; c < in.channels(); ++c) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx)
            acc += k[dy + r] * k[dx + r] *
                   in.at(reflect(y + dy, in.height()), reflect(x + dx, in.width()), c);
        out.at(y, x, c) = acc;
      }
  return out;
}

std::vector<ImageD> oracle_features(const ImageD& img) {
  std::vector<ImageD> feats;
  ImageD cur = img;
  for (int l = 0; l < 5; ++l) {
    const ImageD b = blur2d(cur, 1.0, 3);
    ImageD d(b.height() / 2, b.width() / 2, 3);
    for (int y = 0; y < d.height(); ++y)
      for (int x = 0; x < d.width(); ++x)
        for (int c = 0; c < 3; ++c) d.at(y, x, c) = b.at(2 * y, 2 * x, c);
    ImageD lum(d.height(), d.width(), 1), f(d.height(), d.width(), 3);
    for (int y = 0; y < d.height(); ++y)
      for (int x = 0; x < d.width(); ++x)
        lum.at(y, x) = 0.299 * d.at(y, x, 0) + 0.587 * d.at(y, x, 1) + 0.114 * d.at(y, x, 2);
    const int h = d.height(), w = d.width();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        f.at(y, x, 0) = lum.at(y, x);
        f.at(y, x, 1) = std::abs(lum.at(y, std::min(x + 1, w - 1)) - lum.at(y, std::max(x - 1, 0))) / 2;
        f.at(y, x, 2) = std::abs(lum.at(std::min(y + 1, h - 1), x) - lum.at(std::max(y - 1, 0), x)) / 2;
      }
    feats.push_back(f);
    cur = d;
  }
  return feats;
}

double oracle_perceptual(const ImageD& out, const ImageD& target, const Mask& m,
                         const std::set<int>& levels) {
  const auto a = oracle_features(target), b = oracle_features(apply_mask(out, m));
  double s = 0.0;
  for (int l : levels) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a[l - 1].size(); ++i)
      acc += std::abs(a[l - 1].storage()[i] - b[l - 1].storage()[i]);
    s += acc / a[l - 1].size();
  }
  return s;
}

double oracle_ssim_at(const ImageD& x, const ImageD& y, int py, int px, int window, double sigma) {
  const int r = window / 2;
  double total = 0.0;
  for (int c = 0; c < x.channels(); ++c) {
    double wsum = 0, mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        const double w = std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
        const double a = x.at(reflect(py + dy, x.height()), reflect(px + dx, x.width()), c);
        const double b = y.at(reflect(py + dy, y.height()), reflect(px + dx, y.width()), c);
        wsum += w;
        mx += w * a;
        my += w * b;
        xx += w * a * a;
        yy += w * b * b;
        xy += w * a * b;
      }
    mx /= wsum;
    my /= wsum;
    const double vx = xx / wsum - mx * mx, vy = yy / wsum - my * my, cv = xy / wsum - mx * my;
    const double c1 = 1e-4, c2 = 9e-4;
    total += (2 * mx * my + c1) * (2 * cv + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  }
  return total / x.channels();
}

Mask box_mask(int h, int w, int y0, int y1, int x0, int x1) {
  Mask m(h, w);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.set(y, x, true);
  return m;
}

struct Problem {
  ImageD output;
  std::vector<ImageD> targets;
  std::vector<Mask> masks;
  Mask m_hat;
};

Problem make_problem(std::uint64_t seed) {
  const int h = 32, w = 64;
  Problem s;
  s.output = test_util::random_image<double>(h, w, 3, seed);
  s.targets = {test_util::random_image<double>(h, w, 3, seed + 1),
               test_util::random_image<double>(h, w, 3, seed + 2)};
  s.masks = {box_mask(h, w, 0, h, 0, 40), box_mask(h, w, 0, h, 24, 64)};
  s.m_hat = box_mask(h, w, 0, h, 0, 24) | box_mask(h, w, 0, h, 40, 64);
  return s;
}

}  // namespace

TEST(Ssim, IdenticalImagesScoreOne) {
  const ImageD x = test_util::random_image<double>(20, 20, 3, 1);
  const auto map = ssim_map(x, x, LossConfig{});
  for (double v : map.storage()) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Ssim, ConstantImagesClosedForm) {
  // Zero variance: SSIM = (2ab + C1) / (a^2 + b^2 + C1).
  const double a = 0.5, b = 0.25, c1 = 1e-4;
  const double expected = (2 * a * b + c1) / (a * a + b * b + c1);
  EXPECT_NEAR(expected, 0.80006, 1e-4);
  const ImageD m = ssim_map(ImageD(16, 16, 3, a), ImageD(16, 16, 3, b), LossConfig{});
  for (double v : m.storage()) EXPECT_NEAR(v, expected, 1e-12);
}

TEST(Ssim, SymmetricAndMatchesDirectWindows) {
  const ImageD x = test_util::random_image<double>(24, 30, 3, 2);
  const ImageD y = test_util::random_image<double>(24, 30, 3, 3);
  const LossConfig cfg;
  const ImageD a = ssim_map(x, y, cfg), b = ssim_map(y, x, cfg);
  EXPECT_LT(test_util::max_abs_diff(a, b), 1e-12);
  for (auto [py, px] : {std::pair{0, 0}, {5, 17}, {23, 29}, {12, 1}})
    EXPECT_NEAR(a.at(py, px), oracle_ssim_at(x, y, py, px, 11, 1.5), 1e-10);
}

TEST(Ssim, DomainIsErodedIntersection) {
  const Problem s = make_problem(1);
  const LossConfig cfg;
  const auto d = ssim_domains(s.m_hat, s.masks, cfg);
  ASSERT_EQ(d.size(), 2u);
  // Target 0 covers columns [0, 24) of m_hat: reflected windows reach x in [0, 19).
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 64; ++x) {
      EXPECT_EQ(d[0].at(y, x), x < 19) << y << "," << x;
      EXPECT_EQ(d[1].at(y, x), x >= 45) << y << "," << x;
    }
}

TEST(Ssim, LossMatchesOracle) {
  const Problem s = make_problem(4);
  const LossConfig cfg;
  const auto domains = ssim_domains(s.m_hat, s.masks, cfg);
  const ImageD out = apply_mask(s.output, s.m_hat);
  double expected = 0.0;
  for (std::size_t n = 0; n < 2; ++n) {
    const ImageD t = apply_mask(s.targets[n], s.m_hat);
    double sum = 0.0;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 64; ++x)
        if (domains[n].at(y, x)) sum += oracle_ssim_at(t, out, y, x, 11, 1.5);
    expected += 1.0 - sum / domains[n].count();
  }
  EXPECT_NEAR(ssim_loss(s.output, s.targets, s.masks, s.m_hat, cfg), expected, 1e-6);
}

TEST(Ssim, EmptyDomainsAreSkippedOrRejected) {
  Problem s = make_problem(5);
  const LossConfig cfg;
  s.masks[1] = Mask(32, 64);
  const double one = ssim_loss(s.output, s.targets, s.masks, s.m_hat, cfg);
  const double only0 = ssim_loss(s.output, {s.targets[0]}, {s.masks[0]}, s.m_hat, cfg);
  EXPECT_DOUBLE_EQ(one, only0);
  s.masks[0] = Mask(32, 64);
  EXPECT_THROW(ssim_loss(s.output, s.targets, s.masks, s.m_hat, cfg), DomainError);
  EXPECT_THROW(LossEvaluator<double>(s.targets, s.masks, s.m_hat, cfg), DomainError);
}

TEST(Perceptual, MatchesOracle) {
  const Problem s = make_problem(6);
  const LossConfig cfg;
  for (std::size_t n = 0; n < 2; ++n)
    EXPECT_NEAR(perceptual_loss(s.output, s.targets[n], s.masks[n], cfg),
                oracle_perceptual(s.output, s.targets[n], s.masks[n], cfg.training_levels), 1e-6);
}

TEST(Perceptual, ZeroWhenMaskedOutputMatchesTarget) {
  const Problem s = make_problem(7);
  const ImageD t = apply_mask(s.output, s.masks[0]);
  EXPECT_NEAR(perceptual_loss(s.output, t, s.masks[0], LossConfig{}), 0.0, 1e-15);
}

TEST(Perceptual, PyramidShapesAndSizeCheck) {
  const auto p = default_extractor<double>().extract(ImageD(64, 128, 3, 0.5));
  ASSERT_EQ(p.levels.size(), 5u);
  for (int i = 1; i <= 5; ++i) {
    EXPECT_EQ(p.level(i).height(), 64 >> i);
    EXPECT_EQ(p.level(i).width(), 128 >> i);
    EXPECT_EQ(p.level(i).channels(), 3);
  }
  EXPECT_THROW(default_extractor<double>().extract(ImageD(31, 64, 3)), DomainError);
  EXPECT_THROW(default_extractor<double>().extract(ImageD(32, 64, 1)), DomainError);
}

TEST(Perceptual, DistanceUsesAllLevelsAndDominatesTraining) {
  const Problem s = make_problem(8);
  const LossConfig cfg;
  double training = 0.0, oracle = 0.0;
  for (std::size_t n = 0; n < 2; ++n) {
    training += perceptual_loss(s.output, s.targets[n], s.masks[n], cfg);
    oracle += oracle_perceptual(s.output, s.targets[n], s.masks[n], {1, 2, 3, 4, 5});
  }
  const double pd = perceptual_distance(s.output, s.targets, s.masks, cfg);
  EXPECT_NEAR(pd, oracle, 1e-6);
  EXPECT_GE(pd, training);
}

TEST(Total, CombineArithmetic) {
  const LossValue v = combine(1.0, 0.5, 0.4);
  EXPECT_DOUBLE_EQ(v.total, 0.8);
  EXPECT_DOUBLE_EQ(combine(1.0, 0.5, 0.0).total, 1.0);
  EXPECT_DOUBLE_EQ(combine(1.0, 0.5, 1.0).total, 0.5);
}

TEST(Total, AffineInLambda) {
  const Problem s = make_problem(9);
  LossConfig cfg;
  std::vector<double> totals;
  for (double l : {0.0, 0.25, 0.5}) {
    cfg.lambda = l;
    totals.push_back(total_loss(s.output, s.targets, s.masks, s.m_hat, cfg).total);
  }
  EXPECT_NEAR(totals[2] - totals[1], totals[1] - totals[0], 1e-12);
}

TEST(Total, EvaluatorMatchesFreeFunctions) {
  const Problem s = make_problem(10);
  const LossConfig cfg;
  const LossEvaluator<double> ev(s.targets, s.masks, s.m_hat, cfg);
  const LossValue a = ev.evaluate(s.output);
  const LossValue b = total_loss(s.output, s.targets, s.masks, s.m_hat, cfg);
  EXPECT_NEAR(a.total, b.total, 1e-12);
  EXPECT_NEAR(a.perceptual, b.perceptual, 1e-12);
  EXPECT_NEAR(a.ssim, b.ssim, 1e-12);
  // Gradient is zero outside every mask and m_hat.
  ImageD grad;
  ev.evaluate(s.output, &grad);
  ASSERT_TRUE(grad.same_shape(s.output));
  const Mask any = s.masks[0] | s.masks[1] | s.m_hat;
  for (std::size_t p = 0; p < any.size(); ++p)
    if (!any[p])
      for (int c = 0; c < 3; ++c) EXPECT_EQ(grad.storage()[p * 3 + c], 0.0);
}

TEST(Total, NonNegativeAndFloatAgreesWithDouble) {
  const Problem s = make_problem(11);
  const LossConfig cfg;
  const LossValue d = total_loss(s.output, s.targets, s.masks, s.m_hat, cfg);
  EXPECT_GE(d.perceptual, 0.0);
  EXPECT_GE(d.ssim, 0.0);
  std::vector<ImageF> tf;
  for (const auto& t : s.targets) tf.push_back(t.cast<float>());
  const LossValue f = total_loss(s.output.cast<float>(), tf, s.masks, s.m_hat, cfg);
  EXPECT_NEAR(f.total, d.total, 1e-4);
}

TEST(Metrics, Psnr) {
  const ImageF a(8, 8, 3, 0.5f);
  const Mask m = test_util::full_mask(8, 8);
  EXPECT_EQ(psnr(a, a, m), kPsnrIdentical);
  ImageD bd(8, 8, 3, 0.6);
  EXPECT_NEAR(psnr(ImageD(8, 8, 3, 0.5).cast<float>(), bd.cast<float>(), m), 20.0, 1e-5);
  EXPECT_THROW(psnr(a, a, Mask(8, 8)), DomainError);
}

TEST(Metrics, MeanSsimRespectsMask) {
  const ImageF x = test_util::random_image(20, 20, 3, 12);
  EXPECT_NEAR(mean_ssim(x, x, test_util::full_mask(20, 20)), 1.0, 1e-6);
  EXPECT_THROW(mean_ssim(x, x, Mask(20, 20)), DomainError);
}

TEST(Config, Validation) {
  LossConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.lambda = 1.5;
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg = {};
  cfg.training_levels = {0, 3};
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg = {};
  cfg.ssim_window = 4;
  EXPECT_THROW(cfg.validate(), DomainError);
}
