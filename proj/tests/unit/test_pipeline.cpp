#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <random>

#include "panostitch/pipeline.hpp"
#include "panostitch/rigsim.hpp"
#include "test_util.hpp"

using namespace panostitch;
using namespace panostitch::pipeline;

namespace {

geometry::RigConfig small_rig() {
  geometry::RigConfig rig;
  rig.camera_template = geometry::FisheyeCamera::centered(64, 185.0, 0.0);
  rig.erp_width = 128;
  rig.erp_height = 64;
  return rig;
}

const rigsim::SceneBundle& small_scene() {
  static const rigsim::SceneBundle scene = [] {
    rigsim::PerturbationSpec p;
    p.inputs = {{1.0, 0, 0, 0.9, 1.0}, {}, {-1.0, 0, 0, 1.1, 1.0}};
    return rigsim::make_scene(rigsim::synthetic_panorama(128, 64, 2), small_rig(), p);
  }();
  return scene;
}

template <typename T>
SceneParams<T> random_params(const SceneShape& shape, std::uint64_t seed) {
  SceneParams<T> p = init_params<T>(shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  p.for_each_block([&](ParamGroup g, std::span<T> s) {
    for (auto& v : s) {
      if (g == ParamGroup::kAffine) continue;
      v = static_cast<T>(g == ParamGroup::kLocalAdjust ? 2.0 * u(rng) : 0.5 * u(rng));
    }
  });
  for (auto& a : p.affines) a = AffineTransform<T>::translation(T(u(rng)), T(u(rng)));
  return p;
}

}  // namespace

TEST(Pipeline, GroupNamesRoundTrip) {
  for (ParamGroup g : kAllGroups) EXPECT_EQ(parse_group(group_name(g)), g);
  EXPECT_THROW(parse_group("colour"), DomainError);
}

TEST(Pipeline, InitShapes) {
  const SceneShape shape = SceneShape::from_rig(small_rig());
  const auto p = init_params<float>(shape);
  ASSERT_EQ(p.inputs(), 3u);
  EXPECT_EQ(p.pre_color[0].height(), 8);
  EXPECT_EQ(p.pre_color[0].channels(), 3);
  EXPECT_EQ(p.local_adjust[0].height(), 8);
  EXPECT_EQ(p.local_adjust[0].width(), 16);
  EXPECT_EQ(p.local_adjust[0].channels(), 2);
  EXPECT_EQ(p.weight_logits[0].channels(), 1);
  EXPECT_EQ(p.post_color.channels(), 3);
  EXPECT_EQ(p.affines[0], AffineTransform<float>::identity());
  EXPECT_EQ(p, init_params<float>(shape));
  EXPECT_EQ(p.parameter_count(), 3u * (8 * 8 * 3 + 6 + 8 * 16 * 3) + 8 * 16 * 3);
  EXPECT_TRUE(p.all_finite());
}

TEST(Pipeline, GlobalWarpExamples) {
  WarpField<double> base(1, 1);
  base.sx(0, 0) = 3.0;
  base.sy(0, 0) = 4.0;
  EXPECT_EQ(global_warp(base, AffineTransform<double>::identity()), base);
  const auto t = global_warp(base, AffineTransform<double>::translation(1.5, -2.0));
  EXPECT_DOUBLE_EQ(t.sx(0, 0), 4.5);
  EXPECT_DOUBLE_EQ(t.sy(0, 0), 2.0);
  const auto r = global_warp(base, AffineTransform<double>{{0.0, -1.0, 0.0, 1.0, 0.0, 0.0}});
  EXPECT_DOUBLE_EQ(r.sx(0, 0), -4.0);
  EXPECT_DOUBLE_EQ(r.sy(0, 0), 3.0);
}

TEST(Pipeline, IdentityParamsAverageValidInputs) {
  const auto& scene = small_scene();
  const auto in = scene.stitch_inputs();
  const auto s = forward(in, init_params<float>(in.shape()));
  std::vector<ImageF> warped;
  for (std::size_t n = 0; n < 3; ++n) warped.push_back(warp(in.images[n], in.base_fields[n]).image);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 128; ++x)
      for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        int count = 0;
        for (std::size_t n = 0; n < 3; ++n)
          if (in.base_masks[n].at(y, x)) {
            sum += warped[n].at(y, x, c);
            ++count;
          }
        const double expected = count ? sum / count : 0.0;
        EXPECT_NEAR(s.output.at(y, x, c), expected, 1e-5);
      }
}

TEST(Pipeline, ConstantInputsStayConstant) {
  auto in = small_scene().stitch_inputs();
  const Mask any = in.base_masks[0] | in.base_masks[1] | in.base_masks[2];
  for (auto& img : in.images) {
    const geometry::FisheyeCamera cam = small_rig().input_camera(0);
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = 0.5f;
    (void)cam;
  }
  const auto s = forward(in, init_params<float>(in.shape()));
  int interior = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 128; ++x) {
      if (!any.at(y, x)) {
        EXPECT_EQ(s.output.at(y, x), 0.0f);
        continue;
      }
      bool full = true;
      for (int n = 0; n < 3; ++n)
        if (in.base_masks[n].at(y, x) && !s.warp_masks[n].at(y, x)) full = false;
      if (!full) continue;
      ++interior;
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(s.output.at(y, x, c), 0.5f, 1e-6);
    }
  EXPECT_GT(interior, 64 * 128 / 2);
}

TEST(Pipeline, ManualCompositionIsBitExact) {
  const auto in = small_scene().stitch_inputs();
  const auto p = random_params<float>(in.shape(), 3);
  const float alpha = 0.3f;
  const auto s = forward(in, p, alpha);
  auto tanh_img = [](ImageF m) {
    for (auto& v : m.storage()) v = std::tanh(v);
    return m;
  };
  std::vector<ImageF> warped, logits;
  for (std::size_t n = 0; n < 3; ++n) {
    const ImageF curve = upsample_bilinear(tanh_img(p.pre_color[n]), 64, 64);
    const ImageF corrected = color::apply_curve(in.images[n], curve);
    const auto g = global_warp(in.base_fields[n], p.affines[n]);
    const WarpField<float> l(upsample_bilinear(p.local_adjust[n], 64, 128));
    warped.push_back(warp(corrected, compose_warp(g, l, alpha)).image);
    logits.push_back(upsample_bilinear(p.weight_logits[n], 64, 128));
  }
  const ImageF blended = weighted_sum(warped, softmax_weights(logits), in.base_masks);
  const ImageF out =
      color::apply_curve(blended, upsample_bilinear(tanh_img(p.post_color), 64, 128));
  EXPECT_EQ(s.output, out);
  EXPECT_EQ(s.blended, blended);
}

TEST(Pipeline, AlphaZeroIgnoresLocalGrid) {
  const auto in = small_scene().stitch_inputs();
  auto p = random_params<float>(in.shape(), 4);
  const auto s = forward(in, p, 0.0f);
  for (std::size_t n = 0; n < 3; ++n) EXPECT_EQ(s.final_warp[n], s.global[n]);
  for (auto& m : p.local_adjust) m.fill(0.0f);
  EXPECT_EQ(forward(in, p, 0.3f).output, s.output);
}

TEST(Pipeline, OutputInUnitRangeAndWeightsPartition) {
  const auto in = small_scene().stitch_inputs();
  const auto s = forward(in, random_params<float>(in.shape(), 5));
  for (float v : s.output.storage()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_LT(s.weights.max_partition_error(s.validity), 1e-5);
}

TEST(Pipeline, ForwardIsDeterministic) {
  const auto in = small_scene().stitch_inputs();
  const auto p = random_params<float>(in.shape(), 6);
  EXPECT_EQ(forward(in, p).output, forward(in, p).output);
}

TEST(Pipeline, ZeroLossConfigurationHasZeroGradient) {
  const auto& scene = small_scene();
  const auto in = scene.stitch_inputs().cast<double>();
  const auto p = init_params<double>(in.shape());
  const ImageD out = forward(in, p).output;
  // Targets equal to the masked output make both terms vanish at p.
  std::vector<ImageD> targets;
  for (const auto& m : scene.masks) targets.push_back(apply_mask(out, m));
  const losses::LossEvaluator<double> ev(targets, scene.masks, scene.m_hat, {});
  const auto r = forward_backward(in, p, ev);
  EXPECT_NEAR(r.loss.total, 0.0, 1e-9);
  double g = 0.0;
  r.grads.for_each_block([&](ParamGroup, std::span<const double> s) {
    for (double v : s) g = std::max(g, std::abs(v));
  });
  EXPECT_LT(g, 1e-6);
}

TEST(Pipeline, PostColorGradientVanishesAtSaturatedPixels) {
  auto in = small_scene().stitch_inputs().cast<double>();
  for (auto& img : in.images) img.fill(1.0);
  const auto& scene = small_scene();
  std::vector<ImageD> targets;
  for (const auto& t : scene.supervision_erp) targets.push_back(t.cast<double>());
  const losses::LossEvaluator<double> ev(targets, scene.masks, scene.m_hat, {});
  const auto p = random_params<double>(in.shape(), 7);
  const auto r = forward_backward(in, p, ev);
  // Blended values are 0 or 1 (up to warp-edge pixels), so x(1-x) kills the curve gradient.
  double edge_free = 0.0;
  for (double v : r.state.blended.storage()) edge_free = std::max(edge_free, std::min(v, 1.0 - v));
  if (edge_free < 1e-12) {
    for (double v : r.grads.post_color.storage()) EXPECT_EQ(v, 0.0);
  } else {
    const auto b = color::apply_curve_backward(r.state.blended, r.state.post_curve,
                                               ImageD(64, 128, 3, 1.0));
    for (std::size_t i = 0; i < b.d_curve.size(); ++i) {
      const double x = r.state.blended.storage()[i];
      if (x == 0.0 || x == 1.0) EXPECT_EQ(b.d_curve.storage()[i], 0.0);
    }
  }
}

TEST(Pipeline, ThreadCountDoesNotChangeResults) {
  const auto& scene = small_scene();
  const auto in = scene.stitch_inputs();
  const auto p = random_params<float>(in.shape(), 8);
  const losses::LossEvaluator<float> ev(scene.supervision_erp, scene.masks, scene.m_hat, {});
  setenv("PANOSTITCH_THREADS", "1", 1);
  const auto a = forward_backward(in, p, ev);
  setenv("PANOSTITCH_THREADS", "4", 1);
  const auto b = forward_backward(in, p, ev);
  unsetenv("PANOSTITCH_THREADS");
  EXPECT_EQ(a.state.output, b.state.output);
  EXPECT_EQ(a.loss.total, b.loss.total);
  EXPECT_EQ(a.grads, b.grads);
}

TEST(Pipeline, MismatchedParamsThrow) {
  const auto in = small_scene().stitch_inputs();
  auto p = init_params<float>(in.shape());
  p.affines.pop_back();
  EXPECT_THROW(forward(in, p), DomainError);
}
