#include "panostitch/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "panostitch/color.hpp"
#include "panostitch/filter.hpp"
#include "panostitch/image_ops.hpp"
#include "panostitch/losses.hpp"
#include "panostitch/pipeline.hpp"
#include "panostitch/rigsim.hpp"

namespace panostitch::gradcheck {
namespace {

using Rng = std::mt19937_64;

ImageD random_image(int h, int w, int c, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  ImageD img(h, w, c);
  for (auto& v : img.storage()) v = u(rng);
  return img;
}

Mask random_blob_mask(int h, int w, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double cx = w * u(rng), cy = h * u(rng), r = 0.35 * w + 0.3 * w * u(rng);
  Mask m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(y, x, std::hypot(x + 0.5 - cx, y + 0.5 - cy) < r);
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

class Collector {
 public:
  Collector(Report& report, const GradcheckOptions& opts, Rng& rng)
      : report_(report), opts_(opts), rng_(rng) {}

  // Adds (or merges into) a named check.
  void probe(const std::string& name, const std::function<double()>& f, std::span<double> x,
             std::span<const double> analytic, double step) {
    probe(name, f, x, analytic, [step](std::size_t) { return step; });
  }
  void probe(const std::string& name, const std::function<double()>& f, std::span<double> x,
             std::span<const double> analytic, const std::function<double(std::size_t)>& step) {
    const auto coords = probe_coords(analytic, opts_.coords_per_block, rng_());
    const double err = max_relative_error(f, x, analytic, coords, step, opts_.abs_floor);
    for (auto& c : report_.checks)
      if (c.name == name) {
        c.max_rel_error = std::max(c.max_rel_error, err);
        c.coords += coords.size();
        return;
      }
    report_.checks.push_back({name, err, coords.size()});
  }

 private:
  Report& report_;
  const GradcheckOptions& opts_;
  Rng& rng_;
};

}  // namespace

double Report::max_error() const {
  double m = 0.0;
  for (const auto& c : checks) m = std::max(m, c.max_rel_error);
  return m;
}

double max_relative_error(const std::function<double()>& f, std::span<double> x,
                          std::span<const double> analytic, const std::vector<std::size_t>& coords,
                          const std::function<double(std::size_t)>& step_for,
                          double abs_floor) {
  double worst = 0.0;
  for (std::size_t i : coords) {
    const double step = step_for(i);
    const double saved = x[i];
    x[i] = saved + step;
    const double fp = f();
    x[i] = saved - step;
    const double fm = f();
    x[i] = saved;
    const double fd = (fp - fm) / (2 * step);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(fd), abs_floor});
    worst = std::max(worst, std::abs(a - fd) / denom);
  }
  return worst;
}

std::vector<std::size_t> probe_coords(std::span<const double> analytic, int count,
                                      std::uint64_t seed) {
  const std::size_t n = analytic.size();
  std::vector<std::size_t> out;
  if (n == 0) return out;
  if (count <= 0 || static_cast<std::size_t>(count) >= n) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(i);
    return out;
  }
  std::size_t arg = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (std::abs(analytic[i]) > std::abs(analytic[arg])) arg = i;
  out.push_back(arg);
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  while (out.size() < static_cast<std::size_t>(count)) out.push_back(pick(rng));
  return out;
}

Report check_ops(std::uint64_t seed, const GradcheckOptions& opts) {
  Report report;
  report.seed = seed;
  Rng rng(seed * 7919 + 1);
  Collector probe(report, opts, rng);
  const double h = 1e-5;

  {  // bilinear warp with zero padding
    ImageD img = random_image(8, 8, 3, rng);
    WarpField<double> field(random_image(8, 8, 2, rng, -1.0, 9.0));
    const ImageD r = random_image(8, 8, 3, rng, -1.0, 1.0);
    auto f = [&] { return dot(warp(img, field).image.values(), r.values()); };
    const auto g = warp_backward(img, field, r);
    probe.probe("warp.image", f, img.values(), g.d_image.values(), h);
    probe.probe("warp.field", f, field.coords().values(), g.d_field.coords().values(), h);
  }
  {  // U = G + alpha L
    WarpField<double> gw(random_image(8, 8, 2, rng, 0.0, 8.0));
    WarpField<double> lw(random_image(8, 8, 2, rng, -1.0, 1.0));
    const ImageD r = random_image(8, 8, 2, rng, -1.0, 1.0);
    auto f = [&] { return dot(compose_warp(gw, lw, 0.3).coords().values(), r.values()); };
    const auto g = compose_warp_backward(WarpField<double>(r), 0.3);
    probe.probe("compose.global", f, gw.coords().values(), g.d_global.coords().values(), h);
    probe.probe("compose.local", f, lw.coords().values(), g.d_local.coords().values(), h);
  }
  {  // softmax across inputs
    std::vector<ImageD> logits, r;
    for (int n = 0; n < 3; ++n) {
      logits.push_back(random_image(8, 8, 1, rng, -2.0, 2.0));
      r.push_back(random_image(8, 8, 1, rng, -1.0, 1.0));
    }
    auto f = [&] {
      const auto w = softmax_weights(logits);
      double s = 0.0;
      for (int n = 0; n < 3; ++n) s += dot(w.maps[n].values(), r[n].values());
      return s;
    };
    const auto d = softmax_weights_backward(softmax_weights(logits), r);
    for (int n = 0; n < 3; ++n) probe.probe("softmax", f, logits[n].values(), d[n].values(), h);
  }
  {  // masked weighted sum
    std::vector<ImageD> images;
    std::vector<Mask> validity;
    BlendWeights<double> weights;
    for (int n = 0; n < 3; ++n) {
      images.push_back(random_image(8, 8, 3, rng));
      weights.maps.push_back(random_image(8, 8, 1, rng, 0.1, 1.0));
      validity.push_back(random_blob_mask(8, 8, rng));
    }
    const ImageD r = random_image(8, 8, 3, rng, -1.0, 1.0);
    auto f = [&] { return dot(weighted_sum(images, weights, validity).values(), r.values()); };
    const auto g = weighted_sum_backward(images, weights, validity,
                                         weighted_sum(images, weights, validity), r);
    for (int n = 0; n < 3; ++n) {
      probe.probe("blend.images", f, images[n].values(), g.d_images[n].values(), h);
      probe.probe("blend.weights", f, weights.maps[n].values(), g.d_weights[n].values(), h);
    }
  }
  {  // control-grid upsampling
    ImageD coarse = random_image(3, 4, 2, rng, -1.0, 1.0);
    const ImageD r = random_image(8, 12, 2, rng, -1.0, 1.0);
    auto f = [&] { return dot(upsample_bilinear(coarse, 8, 12).values(), r.values()); };
    const ImageD g = upsample_bilinear_adjoint(r, 3, 4);
    probe.probe("upsample", f, coarse.values(), g.values(), h);
  }
  {  // x + C x (1 - x)
    ImageD img = random_image(8, 8, 3, rng);
    ImageD curve = random_image(8, 8, 3, rng, -1.0, 1.0);
    const ImageD r = random_image(8, 8, 3, rng, -1.0, 1.0);
    auto f = [&] { return dot(color::apply_curve(img, curve).values(), r.values()); };
    const auto g = color::apply_curve_backward(img, curve, r);
    probe.probe("curve.image", f, img.values(), g.d_image.values(), h);
    probe.probe("curve.coefficient", f, curve.values(), g.d_curve.values(), h);
  }
  {  // separable Gaussian filter
    ImageD img = random_image(8, 8, 3, rng);
    const auto kernel = gaussian_kernel(1.5, 3);
    const ImageD r = random_image(8, 8, 3, rng, -1.0, 1.0);
    auto f = [&] { return dot(filter_separable(img, kernel).values(), r.values()); };
    const ImageD g = filter_separable_adjoint(r, kernel);
    probe.probe("filter", f, img.values(), g.values(), h);
  }
  {  // feature pyramid
    ImageD img = random_image(32, 32, 3, rng);
    const auto& ex = losses::default_extractor<double>();
    const auto pyr = ex.extract(img);
    std::vector<ImageD> r;
    for (const auto& l : pyr.levels)
      r.push_back(random_image(l.height(), l.width(), l.channels(), rng, -1.0, 1.0));
    auto f = [&] {
      const auto p = ex.extract(img);
      double s = 0.0;
      for (std::size_t i = 0; i < r.size(); ++i) s += dot(p.levels[i].values(), r[i].values());
      return s;
    };
    const ImageD g = ex.backward(img, r);
    probe.probe("features", f, img.values(), g.values(), h);
  }
  {  // G = A [base; 1]
    WarpField<double> base(random_image(8, 8, 2, rng, 0.0, 8.0));
    pipeline::AffineTransform<double> a;
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    for (double& v : a.m) v += u(rng);
    const ImageD r = random_image(8, 8, 2, rng, -1.0, 1.0);
    auto f = [&] { return dot(pipeline::global_warp(base, a).coords().values(), r.values()); };
    const auto g = pipeline::global_warp_backward(base, WarpField<double>(r));
    probe.probe("global_warp", f, std::span<double>(a.m), std::span<const double>(g), h);
  }
  {  // both loss terms and their combination
    const int H = 32, W = 64;
    std::vector<ImageD> targets;
    std::vector<Mask> masks;
    for (int n = 0; n < 3; ++n) {
      targets.push_back(random_image(H, W, 3, rng));
      masks.push_back(random_blob_mask(H, W, rng));
    }
    Mask m_hat(H, W);
    for (int y = 4; y < H - 4; ++y)
      for (int x = 8; x < W - 8; ++x) m_hat.set(y, x, true);
    ImageD out = random_image(H, W, 3, rng);
    for (double lambda : {0.0, 1.0, 0.4}) {
      losses::LossConfig cfg;
      cfg.lambda = lambda;
      cfg.ssim_window = opts.ssim_window;
      const losses::LossEvaluator<double> ev(targets, masks, m_hat, cfg);
      ImageD d;
      ev.evaluate(out, &d);
      auto f = [&] { return ev.evaluate(out).total; };
      const std::string name =
          lambda == 0.0 ? "loss.perceptual" : (lambda == 1.0 ? "loss.ssim" : "loss.total");
      probe.probe(name, f, out.values(), d.values(), h);
    }
  }
  return report;
}

Report check_pipeline(std::uint64_t seed, const GradcheckOptions& opts) {
  Report report;
  report.seed = seed;
  Rng rng(seed * 104729 + 3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  geometry::RigConfig rig;
  rig.erp_width = opts.erp_width;
  rig.erp_height = opts.erp_height;
  rig.camera_template = geometry::FisheyeCamera::centered(opts.fisheye_size, 185.0, 0.0);
  rigsim::PerturbationSpec perturb;
  perturb.seed = seed;
  for (int i = 0; i < 3; ++i) {
    rigsim::CameraPerturbation p;
    p.yaw_deg = 2.0 * u(rng);
    p.gain = 1.0 + 0.2 * u(rng);
    perturb.inputs.push_back(p);
  }
  const ImageF source = rigsim::synthetic_panorama(4 * opts.erp_width, 2 * opts.erp_width, seed);
  const auto scene = rigsim::make_scene(source, rig, perturb);
  const auto inputs = scene.stitch_inputs().cast<double>();
  std::vector<ImageD> targets;
  for (const auto& t : scene.supervision_erp) targets.push_back(t.cast<double>());
  losses::LossConfig cfg;
  cfg.ssim_window = opts.ssim_window;
  const losses::LossEvaluator<double> objective(targets, scene.masks, scene.m_hat, cfg);

  auto params = pipeline::init_params<double>(pipeline::SceneShape::from_rig(rig));
  for (auto& m : params.pre_color)
    for (auto& v : m.storage()) v = 0.5 * u(rng);
  for (auto& a : params.affines) {
    a.m[0] += 0.01 * u(rng);
    a.m[1] += 0.01 * u(rng);
    a.m[2] += 1.0 * u(rng);
    a.m[3] += 0.01 * u(rng);
    a.m[4] += 0.01 * u(rng);
    a.m[5] += 1.0 * u(rng);
  }
  for (auto& m : params.local_adjust)
    for (auto& v : m.storage()) v = 1.5 * u(rng);
  for (auto& m : params.weight_logits)
    for (auto& v : m.storage()) v = u(rng);
  for (auto& v : params.post_color.storage()) v = 0.5 * u(rng);

  const auto fb = pipeline::forward_backward(inputs, params, objective);
  report.loss = fb.loss.total;
  auto f = [&] { return pipeline::evaluate_loss(inputs, params, objective).total; };

  std::vector<std::pair<pipeline::ParamGroup, std::span<double>>> blocks;
  params.for_each_block([&](pipeline::ParamGroup g, std::span<double> s) { blocks.push_back({g, s}); });
  std::vector<std::span<const double>> grads;
  fb.grads.for_each_block([&](pipeline::ParamGroup, std::span<const double> s) { grads.push_back(s); });

  // Affine linear entries multiply source coordinates (up to the sensor
  // size), so their step is shrunk to move samples by about opts.step pixels.
  const double step = opts.step;
  const double linear_step = opts.step / opts.fisheye_size;
  auto affine_step = [=](std::size_t i) { return i == 2 || i == 5 ? step : linear_step; };
  Collector probe(report, opts, rng);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string name(pipeline::group_name(blocks[b].first));
    if (blocks[b].first == pipeline::ParamGroup::kAffine)
      probe.probe(name, f, blocks[b].second, grads[b], affine_step);
    else
      probe.probe(name, f, blocks[b].second, grads[b], step);
  }
  return report;
}

}  // namespace panostitch::gradcheck
