#include "panostitch/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <string>

namespace panostitch::optimizer {

std::map<ParamGroup, double> OptimConfig::default_group_scales() {
  return {{ParamGroup::kPreColor, 50.0},
          {ParamGroup::kAffine, 50.0},
          {ParamGroup::kLocalAdjust, 50.0},
          {ParamGroup::kWeightLogits, 50.0},
          {ParamGroup::kPostColor, 50.0}};
}

double OptimConfig::step_size(ParamGroup g) const {
  const auto it = group_scale.find(g);
  return learning_rate * (it == group_scale.end() ? 1.0 : it->second);
}

void OptimConfig::validate() const {
  if (!(learning_rate > 0.0)) throw DomainError("OptimConfig: learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw DomainError("OptimConfig: Adam decays must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw DomainError("OptimConfig: epsilon must be positive");
  if (iterations < 1) throw DomainError("OptimConfig: iterations must be >= 1");
  for (const auto& [g, s] : group_scale)
    if (!(s > 0.0))
      throw DomainError("OptimConfig: step scale for " + std::string(pipeline::group_name(g)) +
                        " must be positive");
}

template <typename T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> first,
                 std::span<T> second, int t, double lr, double beta1, double beta2, double eps) {
  if (grads.size() != params.size() || first.size() != params.size() ||
      second.size() != params.size())
    throw DomainError("adam_update: shape mismatch");
  if (t < 1) throw DomainError("adam_update: step index starts at 1");
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double m = beta1 * first[i] + (1.0 - beta1) * g;
    const double v = beta2 * second[i] + (1.0 - beta2) * g * g;
    first[i] = static_cast<T>(m);
    second[i] = static_cast<T>(v);
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    params[i] = static_cast<T>(params[i] - lr * m_hat / (std::sqrt(v_hat) + eps));
  }
}

template <typename T>
void adam_step(pipeline::SceneParams<T>& params, const pipeline::SceneParams<T>& grads,
               AdamState<T>& state, const OptimConfig& cfg) {
  // Collect the blocks of each structure in the same fixed order.
  std::vector<std::pair<ParamGroup, std::span<T>>> p, m, v;
  std::vector<std::span<const T>> g;
  params.for_each_block([&](ParamGroup grp, std::span<T> s) { p.emplace_back(grp, s); });
  state.first.for_each_block([&](ParamGroup grp, std::span<T> s) { m.emplace_back(grp, s); });
  state.second.for_each_block([&](ParamGroup grp, std::span<T> s) { v.emplace_back(grp, s); });
  grads.for_each_block([&](ParamGroup, std::span<const T> s) { g.push_back(s); });
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
    throw DomainError("adam_step: parameter, gradient and moment layouts differ");
  ++state.step;
  for (std::size_t b = 0; b < p.size(); ++b) {
    const ParamGroup grp = p[b].first;
    if (cfg.frozen.contains(grp)) continue;
    adam_update(p[b].second, g[b], m[b].second, v[b].second, state.step, cfg.step_size(grp),
                cfg.beta1, cfg.beta2, cfg.epsilon);
  }
}

template <typename T>
OptimResult<T> optimize_scene(const pipeline::StitchInputs<T>& inputs,
                              const losses::LossEvaluator<T>& objective, const OptimConfig& cfg,
                              T alpha, int control_divisor, const ProgressFn& progress) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  pipeline::SceneParams<T> params = pipeline::init_params<T>(inputs.shape(control_divisor));
  AdamState<T> state = AdamState<T>::for_params(params);
  OptimResult<T> result{params, {}};
  OptimReport& report = result.report;
  double best = std::numeric_limits<double>::infinity();

  for (int it = 0; it < cfg.iterations; ++it) {
    auto fb = pipeline::forward_backward(inputs, params, objective, alpha);
    const LossRecord rec{fb.loss.total, fb.loss.perceptual, fb.loss.ssim};
    report.history.push_back(rec);
    if (!std::isfinite(rec.total)) {
      report.best_so_far.push_back(best);
      report.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      throw NonFiniteLossError("optimize_scene: non-finite loss at iteration " +
                                   std::to_string(it) + " (perceptual " +
                                   std::to_string(rec.perceptual) + ", ssim " +
                                   std::to_string(rec.ssim) + ")",
                               report);
    }
    if (rec.total < best) {
      best = rec.total;
      report.best_iteration = it;
      result.params = params;
    }
    report.best_so_far.push_back(best);

    double gmax = 0.0;
    fb.grads.for_each_block([&](ParamGroup grp, std::span<const T> s) {
      if (cfg.frozen.contains(grp)) return;
      for (T v : s) gmax = std::max(gmax, std::abs(static_cast<double>(v)));
    });
    report.final_grad_max_norm = gmax;

    if (progress && cfg.log_every > 0 && (it % cfg.log_every == 0 || it + 1 == cfg.iterations))
      progress(it, rec);
    adam_step(params, fb.grads, state, cfg);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

#define PANOSTITCH_INSTANTIATE(T)                                                            \
  template void adam_update<T>(std::span<T>, std::span<const T>, std::span<T>, std::span<T>, \
                               int, double, double, double, double);                        \
  template void adam_step<T>(pipeline::SceneParams<T>&, const pipeline::SceneParams<T>&,     \
                             AdamState<T>&, const OptimConfig&);                             \
  template OptimResult<T> optimize_scene<T>(const pipeline::StitchInputs<T>&,               \
                                            const losses::LossEvaluator<T>&,                \
                                            const OptimConfig&, T, int, const ProgressFn&);

PANOSTITCH_INSTANTIATE(float)
PANOSTITCH_INSTANTIATE(double)

#undef PANOSTITCH_INSTANTIATE

}  // namespace panostitch::optimizer
