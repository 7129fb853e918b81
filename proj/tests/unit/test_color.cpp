#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "panostitch/color.hpp"
#include "panostitch/rigsim.hpp"
#include "test_util.hpp"

using namespace panostitch;
using namespace panostitch::color;

namespace {

// Independent least-squares oracle: Cramer's rule on the 3x3 normal equations.
std::array<double, 3> oracle_fit(const std::vector<double>& x, const std::vector<double>& y) {
  double s[5] = {0, 0, 0, 0, 0}, t[3] = {0, 0, 0};
  for (std::size_t i = 0; i < x.size(); ++i) {
    double p = 1.0;
    for (int k = 0; k < 5; ++k) {
      s[k] += p;
      if (k < 3) t[k] += p * y[i];
      p *= x[i];
    }
  }
  // Unknowns ordered (c, b, a): M[i][j] = s[i+j].
  const double m[3][3] = {{s[0], s[1], s[2]}, {s[1], s[2], s[3]}, {s[2], s[3], s[4]}};
  auto det = [](const double a[3][3]) {
    return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
           a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
           a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
  };
  const double d = det(m);
  std::array<double, 3> sol{};
  for (int k = 0; k < 3; ++k) {
    double mk[3][3];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) mk[i][j] = j == k ? t[i] : m[i][j];
    sol[k] = det(mk) / d;
  }
  return {sol[2], sol[1], sol[0]};  // a, b, c
}

}  // namespace

TEST(Curve, ZeroMapIsIdentity) {
  const ImageF img = test_util::random_image(4, 4, 3, 1);
  EXPECT_EQ(apply_curve(img, ImageF(4, 4, 3, 0.0f)), img);
}

TEST(Curve, EndpointsAreFixedForAnyCoefficient) {
  ImageD img(1, 2, 1);
  img.at(0, 0) = 0.0;
  img.at(0, 1) = 1.0;
  for (double c : {-1.0, -0.3, 0.7, 1.0, 5.0}) {
    const ImageD out = apply_curve(img, ImageD(1, 2, 1, c));
    EXPECT_EQ(out.at(0, 0), 0.0);
    EXPECT_EQ(out.at(0, 1), 1.0);
  }
}

TEST(Curve, Arithmetic) {
  const ImageD out = apply_curve(ImageD(1, 1, 1, 0.5), ImageD(1, 1, 1, 0.4));
  EXPECT_NEAR(out.at(0, 0), 0.6, 1e-15);
  EXPECT_THROW(apply_curve(ImageD(1, 1, 1), ImageD(1, 2, 1)), DomainError);
}

TEST(Curve, MonotoneAndInRangeForBoundedCoefficients) {
  for (double c : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
    double prev = -1.0;
    for (int i = 0; i <= 1000; ++i) {
      const double x = i / 1000.0;
      const double y = apply_curve(ImageD(1, 1, 1, x), ImageD(1, 1, 1, c)).at(0, 0);
      EXPECT_GE(y, 0.0);
      EXPECT_LE(y, 1.0);
      if (std::abs(c) < 1.0) EXPECT_GT(y, prev);
      prev = y;
    }
  }
}

TEST(Curve, GradientFormulas) {
  ImageD img(1, 1, 1, 0.5), curve(1, 1, 1, 0.0);
  const auto g = apply_curve_backward(img, curve, ImageD(1, 1, 1, 2.0));
  EXPECT_DOUBLE_EQ(g.d_image.at(0, 0), 2.0);   // C = 0 passes through
  EXPECT_DOUBLE_EQ(g.d_curve.at(0, 0), 0.5);   // 2 * 0.25
  const auto h = apply_curve_backward(ImageD(1, 1, 1, 0.2), ImageD(1, 1, 1, 0.6),
                                      ImageD(1, 1, 1, 1.0));
  EXPECT_NEAR(h.d_image.at(0, 0), 1.0 + 0.6 * (1.0 - 0.4), 1e-15);
}

TEST(Fit, IdentityIsExact) {
  const std::vector<double> x = {0.1, 0.3, 0.5, 0.9};
  const auto f = fit_quadratic(x, x);
  EXPECT_NEAR(f.a, 0.0, 1e-10);
  EXPECT_NEAR(f.b, 1.0, 1e-10);
  EXPECT_NEAR(f.c, 0.0, 1e-10);
  EXPECT_NEAR(f.residual, 0.0, 1e-20);
  EXPECT_TRUE(f.monotone());
}

TEST(Fit, RecoversPlantedCoefficients) {
  std::vector<double> x, y;
  for (int i = 0; i < 50; ++i) {
    x.push_back(i / 49.0);
    y.push_back(0.2 * x.back() * x.back() + 0.7 * x.back() + 0.05);
  }
  const auto f = fit_quadratic(x, y);
  EXPECT_NEAR(f.a, 0.2, 1e-6);
  EXPECT_NEAR(f.b, 0.7, 1e-6);
  EXPECT_NEAR(f.c, 0.05, 1e-6);
}

TEST(Fit, MatchesNormalEquationOracleOnNoisyData) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0), n(-0.05, 0.05);
  std::vector<double> x, y;
  for (int i = 0; i < 200; ++i) {
    x.push_back(u(rng));
    y.push_back(0.8 * x.back() + 0.1 + n(rng));
  }
  const auto f = fit_quadratic(x, y);
  const auto o = oracle_fit(x, y);
  EXPECT_NEAR(f.a, o[0], 1e-8);
  EXPECT_NEAR(f.b, o[1], 1e-8);
  EXPECT_NEAR(f.c, o[2], 1e-8);

  // Quadratic residual never exceeds the best linear residual.
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  const double slope = sxy / sxx, icpt = my - slope * mx;
  double lin = 0;
  for (std::size_t i = 0; i < x.size(); ++i) lin += std::pow(slope * x[i] + icpt - y[i], 2);
  EXPECT_LE(f.residual, lin / x.size() + 1e-15);

  // Sample order does not matter.
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<double> xs, ys;
  for (auto i : idx) {
    xs.push_back(x[i]);
    ys.push_back(y[i]);
  }
  const auto g = fit_quadratic(xs, ys);
  EXPECT_NEAR(g.a, f.a, 1e-9);
  EXPECT_NEAR(g.b, f.b, 1e-9);
  EXPECT_NEAR(g.c, f.c, 1e-9);
}

TEST(Fit, DegenerateInputsThrow) {
  const std::vector<double> same(10, 0.5), ref(10, 0.4);
  EXPECT_THROW(fit_quadratic(same, ref), DegenerateFitError);
  const std::vector<double> two = {0.1, 0.2, 0.1, 0.2};
  EXPECT_THROW(fit_quadratic(two, two), DegenerateFitError);
}

TEST(Fit, MonotonicityIsReportedNotClamped) {
  std::vector<double> x, y;
  for (int i = 0; i < 20; ++i) {
    x.push_back(i / 19.0);
    y.push_back(1.0 - x.back());
  }
  const auto f = fit_quadratic(x, y);
  EXPECT_FALSE(f.monotone());
  EXPECT_NEAR(f.b, -1.0, 1e-9);
}

TEST(Correspondences, SelfCorrespondenceIsExact) {
  const auto cam = geometry::FisheyeCamera::centered(64, 185.0, 60.0);
  const ImageF img = test_util::random_image(64, 64, 3, 4);
  const auto s = sample_overlap_correspondences(cam, cam, {128, 64}, img, img, 1);
  ASSERT_GT(s.count(), 0u);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(s.query[c], s.reference[c]);
  const auto s0 = sample_overlap_correspondences(cam, cam, {128, 64}, img, img, 0);
  EXPECT_GT(s0.count(), 0u);
  EXPECT_LE(s.count(), 9 * s0.count());
}

TEST(Correspondences, AdjacentSupervisionCamerasOverlap) {
  const geometry::RigConfig rig;
  const ImageF a = test_util::random_image(256, 256, 3, 5), b = test_util::random_image(256, 256, 3, 6);
  const auto s = sample_overlap_correspondences(rig.supervision_camera(0), rig.supervision_camera(1),
                                                rig.erp_size(), a, b, 2);
  EXPECT_GT(s.count(), 100u);
}

TEST(Correspondences, DisjointCamerasThrow) {
  const auto a = geometry::FisheyeCamera::centered(64, 90.0, 0.0);
  const auto b = geometry::FisheyeCamera::centered(64, 90.0, 180.0);
  const ImageF img(64, 64, 3);
  EXPECT_THROW(sample_overlap_correspondences(a, b, {128, 64}, img, img, 1), DomainError);
}

TEST(Consistency, GainIsCorrected) {
  const geometry::RigConfig rig;
  const ImageF src = rigsim::synthetic_panorama(256, 128, 11);
  const auto masks = geometry::weak_supervision_masks(rig);
  std::vector<ImageF> views;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto cam = rig.supervision_camera(i);
    views.push_back(rigsim::project_to_erp(rigsim::render_fisheye(src, cam), cam, rig.erp_size()));
  }
  ImageF dim = views[0];
  for (auto& v : dim.storage()) v *= 0.8f;
  const auto res = correct_weak_supervision({dim, views[2]}, views[1], rig);
  EXPECT_EQ(res.reference_index, 1u);
  EXPECT_EQ(res.query_indices, (std::vector<std::size_t>{0, 2}));
  // Slope of the fitted map is about 1/0.8.
  for (const auto& ch : res.polynomials[0].channels) EXPECT_NEAR(ch.b + ch.a, 1.25, 0.1);
  // Corrected view matches the reference on the overlap within the fit residual.
  const Mask both = masks.footprints[0] & masks.footprints[1];
  double err = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < both.size(); ++p)
    if (both[p])
      for (int c = 0; c < 3; ++c) {
        err += std::pow(res.corrected[0].storage()[p * 3 + c] - views[1].storage()[p * 3 + c], 2);
        ++n;
      }
  double resid = 0.0;
  for (const auto& ch : res.polynomials[0].channels) resid = std::max(resid, ch.residual);
  EXPECT_LE(err / n, 2.0 * resid + 1e-6);
  // An already consistent view is left nearly unchanged.
  double change = 0.0;
  for (std::size_t p = 0; p < masks.footprints[2].size(); ++p)
    if (masks.footprints[2][p])
      for (int c = 0; c < 3; ++c)
        change = std::max(change, static_cast<double>(std::abs(res.corrected[1].storage()[p * 3 + c] -
                                                                views[2].storage()[p * 3 + c])));
  EXPECT_LT(change, 0.05);
}

TEST(Consistency, ReferenceDefaultsToYaw180) {
  const geometry::RigConfig rig;
  EXPECT_EQ(reference_index(rig, 180.0), 1u);
  EXPECT_EQ(reference_index(rig, 59.0), 0u);
  EXPECT_EQ(reference_index(rig, 350.0), 2u);
}
