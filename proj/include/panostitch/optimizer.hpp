#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "panostitch/losses.hpp"
#include "panostitch/pipeline.hpp"

namespace panostitch::optimizer {

using pipeline::ParamGroup;

struct OptimConfig {
  double learning_rate = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int iterations = 2000;
  int log_every = 100;
  std::uint64_t seed = 0;
  std::set<ParamGroup> frozen;
  /// Step multiplier per group, applied on top of learning_rate.
  std::map<ParamGroup, double> group_scale = default_group_scales();

  static std::map<ParamGroup, double> default_group_scales();
  double step_size(ParamGroup g) const;
  void validate() const;
};

struct LossRecord {
  double total = 0.0;
  double perceptual = 0.0;
  double ssim = 0.0;
};

struct OptimReport {
  std::vector<LossRecord> history;   // loss at the start of each iteration
  std::vector<double> best_so_far;   // running minimum of history[i].total
  int best_iteration = 0;
  double final_grad_max_norm = 0.0;  // max |g| at the last evaluated iterate
  double wall_seconds = 0.0;

  double initial_total() const { return history.empty() ? 0.0 : history.front().total; }
  double best_total() const { return best_so_far.empty() ? 0.0 : best_so_far.back(); }
};

/// First/second moment buffers shaped like the parameters.
template <typename T>
struct AdamState {
  pipeline::SceneParams<T> first;
  pipeline::SceneParams<T> second;
  int step = 0;

  static AdamState for_params(const pipeline::SceneParams<T>& params) {
    return {params.zeros_like(), params.zeros_like(), 0};
  }
};

/// Bias-corrected Adam update of one block, with t the 1-based step index:
/// p -= lr * m_hat / (sqrt(v_hat) + eps).
template <typename T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> first,
                 std::span<T> second, int t, double lr, double beta1, double beta2, double eps);

/// One Adam step on every non-frozen group.
template <typename T>
void adam_step(pipeline::SceneParams<T>& params, const pipeline::SceneParams<T>& grads,
               AdamState<T>& state, const OptimConfig& cfg);

template <typename T>
struct OptimResult {
  pipeline::SceneParams<T> params;  // lowest-loss iterate, not necessarily the last
  OptimReport report;
};

class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const std::string& what, OptimReport report)
      : std::runtime_error(what), report_(std::move(report)) {}
  const OptimReport& report() const { return report_; }

 private:
  OptimReport report_;
};

using ProgressFn = std::function<void(int iteration, const LossRecord&)>;

/// Per-scene training loop: init_params, then `iterations` rounds of
/// forward_backward followed by adam_step.
template <typename T>
OptimResult<T> optimize_scene(const pipeline::StitchInputs<T>& inputs,
                              const losses::LossEvaluator<T>& objective, const OptimConfig& cfg,
                              T alpha = T(pipeline::kDefaultAlpha),
                              int control_divisor = pipeline::kDefaultControlDivisor,
                              const ProgressFn& progress = {});

}  // namespace panostitch::optimizer
