#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "panostitch/optimizer.hpp"
#include "panostitch/rigsim.hpp"
#include "test_util.hpp"

using namespace panostitch;
using namespace panostitch::optimizer;
using pipeline::ParamGroup;

namespace {

rigsim::SceneBundle perturbed_scene(double yaw, double gain) {
  geometry::RigConfig rig;
  rig.camera_template = geometry::FisheyeCamera::centered(64, 185.0, 0.0);
  rig.erp_width = 128;
  rig.erp_height = 64;
  rigsim::PerturbationSpec p;
  p.inputs = {{yaw, 0, 0, gain, 1.0}, {}, {-yaw, 0, 0, 1.0 / gain, 1.0}};
  return rigsim::make_scene(rigsim::synthetic_panorama(128, 64, 5), rig, p);
}

losses::LossEvaluator<float> evaluator(const rigsim::SceneBundle& s) {
  return {s.supervision_erp, s.masks, s.m_hat, {}};
}

}  // namespace

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
  // m_hat = g, v_hat = g^2 after one step, so the move is lr * g / (|g| + eps).
  std::vector<double> p = {1.0, -2.0, 0.5, 3.0}, m(4, 0.0), v(4, 0.0);
  const std::vector<double> g = {0.3, -1e-3, 0.0, 10.0};
  const std::vector<double> start = p;
  adam_update<double>(p, g, m, v, 1, 0.01, 0.9, 0.999, 1e-8);
  for (int i = 0; i < 4; ++i)
    EXPECT_NEAR(p[i], start[i] - 0.01 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15) << i;
  EXPECT_EQ(p[2], start[2]);
}

TEST(Adam, MatchesStraightLineReference) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> p(5), m(5, 0.0), v(5, 0.0);
  for (auto& x : p) x = n(rng);
  std::vector<double> rp = p, rm(5, 0.0), rv(5, 0.0);
  for (int t = 1; t <= 100; ++t) {
    std::vector<double> g(5);
    for (std::size_t i = 0; i < 5; ++i) g[i] = 2.0 * p[i] + 0.1 * n(rng);
    adam_update<double>(p, g, m, v, t, 1e-2, 0.9, 0.999, 1e-8);
    for (std::size_t i = 0; i < 5; ++i) {
      rm[i] = 0.9 * rm[i] + 0.1 * g[i];
      rv[i] = 0.999 * rv[i] + 0.001 * g[i] * g[i];
      const double mh = rm[i] / (1 - std::pow(0.9, t)), vh = rv[i] / (1 - std::pow(0.999, t));
      rp[i] -= 1e-2 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(p[i], rp[i], 1e-12);
}

TEST(Adam, RejectsBadArguments) {
  std::vector<double> p(2), g(3), m(2), v(2);
  EXPECT_THROW(adam_update<double>(p, g, m, v, 1, 1e-3, 0.9, 0.999, 1e-8), DomainError);
  std::vector<double> g2(2);
  EXPECT_THROW(adam_update<double>(p, g2, m, v, 0, 1e-3, 0.9, 0.999, 1e-8), DomainError);
  OptimConfig cfg;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg = {};
  cfg.group_scale[ParamGroup::kAffine] = -1.0;
  EXPECT_THROW(cfg.validate(), DomainError);
}

TEST(Adam, StepRespectsFrozenGroupsAndScales) {
  pipeline::SceneShape shape;
  shape.inputs = 2;
  shape.fisheye_height = shape.fisheye_width = 16;
  shape.erp_height = 16;
  shape.erp_width = 32;
  auto params = pipeline::init_params<double>(shape);
  auto grads = params.zeros_like();
  grads.for_each_block([](ParamGroup, std::span<double> s) {
    for (auto& v : s) v = 1.0;
  });
  OptimConfig cfg;
  cfg.frozen = {ParamGroup::kAffine, ParamGroup::kPostColor};
  cfg.group_scale[ParamGroup::kWeightLogits] = 2.0;
  auto state = AdamState<double>::for_params(params);
  const auto before = params;
  adam_step(params, grads, state, cfg);
  EXPECT_EQ(params.affines, before.affines);
  EXPECT_EQ(params.post_color, before.post_color);
  // First Adam step with g = 1 moves by step / (1 + eps).
  EXPECT_NEAR(params.weight_logits[0].at(0, 0), -2.0 * cfg.learning_rate / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(params.pre_color[1].at(0, 0), -50.0 * cfg.learning_rate / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(state.step, 1);
}

TEST(Optimize, BestSoFarIsMonotoneAndParamsAreBest) {
  const auto scene = perturbed_scene(1.5, 0.85);
  const auto ev = evaluator(scene);
  OptimConfig cfg;
  cfg.iterations = 30;
  const auto in = scene.stitch_inputs();
  const auto r = optimize_scene(in, ev, cfg);
  ASSERT_EQ(r.report.history.size(), 30u);
  for (std::size_t i = 1; i < r.report.best_so_far.size(); ++i)
    EXPECT_LE(r.report.best_so_far[i], r.report.best_so_far[i - 1]);
  EXPECT_EQ(r.report.best_total(), r.report.history[r.report.best_iteration].total);
  EXPECT_DOUBLE_EQ(pipeline::evaluate_loss(in, r.params, ev).total, r.report.best_total());
}

TEST(Optimize, ReducesLossOnPerturbedScene) {
  const auto scene = perturbed_scene(1.5, 0.85);
  const auto ev = evaluator(scene);
  OptimConfig cfg;
  cfg.iterations = 150;
  const auto r = optimize_scene(scene.stitch_inputs(), ev, cfg);
  EXPECT_LT(r.report.best_total(), 0.5 * r.report.initial_total());
}

TEST(Optimize, FrozenGroupsKeepInitialValues) {
  const auto scene = perturbed_scene(1.0, 0.9);
  const auto ev = evaluator(scene);
  OptimConfig cfg;
  cfg.iterations = 10;
  cfg.frozen = {ParamGroup::kPreColor, ParamGroup::kAffine};
  const auto in = scene.stitch_inputs();
  const auto r = optimize_scene(in, ev, cfg);
  const auto init = pipeline::init_params<float>(in.shape());
  EXPECT_EQ(r.params.pre_color, init.pre_color);
  EXPECT_EQ(r.params.affines, init.affines);
  if (r.report.best_iteration > 0) EXPECT_NE(r.params.local_adjust, init.local_adjust);
}

TEST(Optimize, IsDeterministic) {
  const auto scene = perturbed_scene(1.0, 0.9);
  const auto ev = evaluator(scene);
  OptimConfig cfg;
  cfg.iterations = 8;
  const auto a = optimize_scene(scene.stitch_inputs(), ev, cfg);
  const auto b = optimize_scene(scene.stitch_inputs(), ev, cfg);
  EXPECT_EQ(a.params, b.params);
  ASSERT_EQ(a.report.history.size(), b.report.history.size());
  for (std::size_t i = 0; i < a.report.history.size(); ++i)
    EXPECT_EQ(a.report.history[i].total, b.report.history[i].total);
}

TEST(Optimize, NonFiniteLossIsReported) {
  auto scene = perturbed_scene(0.0, 1.0);
  const auto ev = evaluator(scene);
  auto in = scene.stitch_inputs();
  in.images[0].fill(std::numeric_limits<float>::quiet_NaN());
  OptimConfig cfg;
  cfg.iterations = 3;
  try {
    optimize_scene(in, ev, cfg);
    FAIL() << "expected NonFiniteLossError";
  } catch (const NonFiniteLossError& e) {
    EXPECT_EQ(e.report().history.size(), 1u);
    EXPECT_NE(std::string(e.what()).find("iteration 0"), std::string::npos);
  }
}
