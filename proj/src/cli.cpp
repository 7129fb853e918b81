#include "panostitch/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "panostitch/gradcheck.hpp"
#include "panostitch/io.hpp"
#include "panostitch/workflow.hpp"

namespace panostitch::cli {
namespace {

namespace fs = std::filesystem;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "key = value configuration file");
  cmd->add_option("--set", opts.overrides, "override one config key (key=value), repeatable");
}

config::Config load_config(const CommonOptions& opts) {
  config::Config cfg;
  if (!opts.config_path.empty()) cfg = config::Config::load(opts.config_path);
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw DomainError("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw DomainError("cannot write " + path.string());
  f << text;
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

// --- render -------------------------------------------------------------

struct RenderOptions {
  CommonOptions common;
  std::string source;
  std::string out;
  std::string perturb_file;
  std::uint64_t seed = 0;
  double max_yaw = 2.0;
  double gain_min = 0.8;
  double gain_max = 1.25;
  double noise = 0.0;
  bool supervision_gains = false;
  int source_height = 0;
};

int do_render(const RenderOptions& o, std::ostream& out, std::ostream& err) {
  const auto cfg = load_config(o.common);
  const auto rig = cfg.rig();
  ImageF source;
  if (o.source.empty() || o.source == "synthetic") {
    const int h = o.source_height > 0 ? o.source_height : rig.erp_height;
    source = rigsim::synthetic_panorama(2 * h, h, o.seed);
  } else {
    source = io::read_image(o.source);
    if (source.channels() != 3) throw DomainError("render: source panorama must be RGB");
  }
  rigsim::PerturbationSpec perturb;
  if (!o.perturb_file.empty()) {
    perturb = rigsim::read_perturbation(o.perturb_file);
  } else {
    perturb = workflow::random_perturbation(rig, o.seed, o.max_yaw, o.gain_min, o.gain_max,
                                            o.supervision_gains, cfg.consistency().reference_yaw_deg,
                                            o.noise);
  }
  const auto scene = rigsim::make_scene(source, rig, perturb, cfg.consistency());
  rigsim::write_scene(scene, o.out);
  err << "render: wrote scene to " << o.out << "\n";
  out << "scene\t" << o.out << "\n";
  for (std::size_t i = 0; i < perturb.inputs.size(); ++i)
    out << "input_" << i << "\tyaw_error_deg=" << fmt(perturb.inputs[i].yaw_deg)
        << "\tgain=" << fmt(perturb.inputs[i].gain) << "\n";
  return kOk;
}

// --- fit-color ------------------------------------------------------------

struct FitColorOptions {
  CommonOptions common;
  std::string scene;
  std::string out;
};

int do_fit_color(const FitColorOptions& o, std::ostream& out, std::ostream& err) {
  const auto cfg = load_config(o.common);
  auto scene = rigsim::read_scene(o.scene);
  if (scene.supervision_raw.size() != scene.supervision_erp.size())
    throw DomainError("fit-color: scene has no raw supervision images (supervision/raw_<n>.png)");
  const auto opts = cfg.consistency();
  const std::size_t ref = color::reference_index(scene.rig, opts.reference_yaw_deg);
  std::vector<ImageF> queries;
  for (std::size_t i = 0; i < scene.supervision_raw.size(); ++i)
    if (i != ref) queries.push_back(scene.supervision_raw[i]);
  auto fixed = color::correct_weak_supervision(queries, scene.supervision_raw[ref], scene.rig, opts);
  scene.supervision_erp[ref] = apply_mask(scene.supervision_raw[ref], scene.masks[ref]);
  for (std::size_t q = 0; q < fixed.query_indices.size(); ++q)
    scene.supervision_erp[fixed.query_indices[q]] = fixed.corrected[q];

  std::vector<ImageF> raw_masked;
  for (std::size_t i = 0; i < scene.supervision_raw.size(); ++i)
    raw_masked.push_back(apply_mask(scene.supervision_raw[i], scene.masks[i]));
  const double before = rigsim::overlap_disagreement(raw_masked, scene.masks);
  const double after = rigsim::overlap_disagreement(scene.supervision_erp, scene.masks);

  // One line per fitted channel: "a b c residual".
  err << "fit-color: reference view " << ref << "; lines are views";
  for (std::size_t q : fixed.query_indices) err << " " << q;
  err << " x channels r g b\n";
  for (const auto& poly : fixed.polynomials)
    for (const auto& f : poly.channels)
      out << fmt(f.a, 9) << " " << fmt(f.b, 9) << " " << fmt(f.c, 9) << " " << fmt(f.residual, 9)
          << "\n";
  err << "fit-color: overlap disagreement " << fmt(before) << " -> " << fmt(after) << "\n";
  const fs::path target = o.out.empty() ? fs::path(o.scene) : fs::path(o.out);
  if (target != fs::path(o.scene)) rigsim::write_scene(scene, target);
  else
    for (std::size_t i = 0; i < scene.supervision_erp.size(); ++i)
      io::write_png(target / "supervision" / ("supervision_" + std::to_string(i) + ".png"),
                    scene.supervision_erp[i]);
  err << "fit-color: corrected supervision written to " << target.string() << "\n";
  return kOk;
}

// --- stitch ---------------------------------------------------------------

struct StitchOptions {
  CommonOptions common;
  std::string scene;
  std::string out;
  std::string report;
  std::string dump;
  std::string init_out;
  std::vector<std::string> freeze;
  int iters = 0;
  double lr = 0.0;
  double alpha = -1.0;
  double lambda = -1.0;
};

int do_stitch(const StitchOptions& o, std::ostream& out, std::ostream& err) {
  auto cfg = load_config(o.common);
  if (o.iters > 0) cfg.set("optim.iters", std::to_string(o.iters));
  if (o.lr > 0) cfg.set("optim.lr", config::format_double(o.lr));
  if (o.alpha >= 0) cfg.set("loss.alpha", config::format_double(o.alpha));
  if (o.lambda >= 0) cfg.set("loss.lambda", config::format_double(o.lambda));
  if (!o.freeze.empty()) {
    std::string joined;
    for (const auto& f : o.freeze) joined += (joined.empty() ? "" : ",") + f;
    cfg.set("optim.freeze", joined);
  }
  const auto scene = rigsim::read_scene(o.scene);
  const auto outcome = workflow::stitch_scene(scene, cfg, [&](int it, const optimizer::LossRecord& r) {
    err << "iter " << it << "  total " << fmt(r.total) << "  perceptual " << fmt(r.perceptual)
        << "  ssim " << fmt(r.ssim) << "\n";
  });
  io::write_png(o.out, outcome.output);
  if (cfg.get_bool("io.write_wssf"))
    io::write_wssf(fs::path(o.out).replace_extension(".wssf"), outcome.output);
  if (!o.init_out.empty()) io::write_png(o.init_out, outcome.initial);
  const fs::path report =
      o.report.empty() ? fs::path(o.out).replace_extension(".report.csv") : fs::path(o.report);
  write_text(report, workflow::report_csv(outcome.report));
  if (!o.dump.empty()) workflow::dump_intermediates(outcome.state, o.dump);

  const auto& rep = outcome.report;
  err << "stitch: " << rep.history.size() << " iterations in " << fmt(rep.wall_seconds, 3)
      << " s\n";
  out << "initial_loss\t" << fmt(rep.initial_total(), 8) << "\n";
  out << "best_loss\t" << fmt(rep.best_total(), 8) << "\n";
  out << "best_iteration\t" << rep.best_iteration << "\n";
  out << "panorama\t" << o.out << "\n";
  out << "report\t" << report.string() << "\n";
  return kOk;
}

// --- eval -----------------------------------------------------------------

struct EvalOptions {
  CommonOptions common;
  std::string scene;
  std::string panorama;
  std::string kv;
};

int do_eval(const EvalOptions& o, std::ostream& out, std::ostream& err) {
  const auto cfg = load_config(o.common);
  const auto scene = rigsim::read_scene(o.scene);
  const ImageF pano = io::read_image(o.panorama);
  const auto m = workflow::evaluate_panorama(pano, scene, cfg);
  std::ostringstream table, kv;
  table << "metric\tvalue\n";
  table << "P_d\t" << fmt(m.perceptual_distance, 8) << "\n";
  kv << "P_d = " << fmt(m.perceptual_distance, 10) << "\n";
  if (m.psnr) {
    table << "PSNR\t" << fmt(*m.psnr, 8) << "\n";
    table << "SSIM\t" << fmt(*m.ssim, 8) << "\n";
    kv << "PSNR = " << fmt(*m.psnr, 10) << "\nSSIM = " << fmt(*m.ssim, 10) << "\n";
  } else {
    err << "eval: scene has no truth panorama; reporting P_d only\n";
  }
  out << table.str();
  if (!o.kv.empty()) write_text(o.kv, kv.str());
  return kOk;
}

// --- gradcheck --------------------------------------------------------------

struct GradcheckCliOptions {
  std::uint64_t seed = 0;
  int seeds = 1;
  int coords = 24;
  bool ops = true;
};

int do_gradcheck(const GradcheckCliOptions& o, std::ostream& out, std::ostream& err) {
  gradcheck::GradcheckOptions opts;
  opts.coords_per_block = o.coords;
  double worst = 0.0;
  out << "seed\tcheck\tmax_rel_error\tcoords\n";
  for (int k = 0; k < o.seeds; ++k) {
    const std::uint64_t seed = o.seed + static_cast<std::uint64_t>(k);
    std::vector<gradcheck::Report> reports;
    if (o.ops) reports.push_back(gradcheck::check_ops(seed, opts));
    reports.push_back(gradcheck::check_pipeline(seed, opts));
    for (const auto& r : reports)
      for (const auto& c : r.checks) {
        out << seed << "\t" << c.name << "\t" << std::scientific << std::setprecision(3)
            << c.max_rel_error << std::defaultfloat << "\t" << c.coords << "\n";
        worst = std::max(worst, c.max_rel_error);
      }
  }
  const bool ok = worst <= opts.tolerance;
  out << "max\t" << std::scientific << std::setprecision(3) << worst << std::defaultfloat << "\t"
      << (ok ? "PASS" : "FAIL") << "\n";
  if (!ok) {
    err << "gradcheck: max relative error " << worst << " exceeds " << opts.tolerance << "\n";
    return kFailure;
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"panostitch: fisheye-to-panorama stitching by weak supervision"};
  app.require_subcommand(1);
  app.footer("Configuration keys (defaults):\n" + config::Config::describe() +
             "Environment: PANOSTITCH_THREADS caps worker threads (0 = auto).");

  RenderOptions render;
  auto* r = app.add_subcommand("render", "render a synthetic scene (inputs, supervision, masks)");
  add_common(r, render.common);
  r->add_option("--out", render.out, "scene directory")->required();
  r->add_option("--source", render.source, "ERP panorama (PNG or WSSF1) or 'synthetic'");
  r->add_option("--source-height", render.source_height, "synthetic source height (px)");
  r->add_option("--seed", render.seed, "seed for the synthetic source and perturbations");
  r->add_option("--perturb", render.perturb_file, "perturbation manifest (key = value)");
  r->add_option("--max-yaw", render.max_yaw, "max |yaw error| of input cameras (deg)");
  r->add_option("--gain-min", render.gain_min, "lowest input gain");
  r->add_option("--gain-max", render.gain_max, "highest input gain");
  r->add_option("--noise", render.noise, "Gaussian noise sigma");
  r->add_flag("--supervision-gains", render.supervision_gains,
              "also perturb gains of non-reference supervision cameras");

  FitColorOptions fit;
  auto* f = app.add_subcommand("fit-color", "fit color-consistency polynomials on a scene");
  add_common(f, fit.common);
  f->add_option("--scene", fit.scene, "scene directory")->required();
  f->add_option("--out", fit.out, "write the corrected scene here (default: in place)");

  StitchOptions stitch;
  auto* s = app.add_subcommand("stitch", "optimize a scene and write the panorama");
  add_common(s, stitch.common);
  s->add_option("--scene", stitch.scene, "scene directory")->required();
  s->add_option("--out", stitch.out, "output panorama (PNG)")->required();
  s->add_option("--report", stitch.report, "loss history CSV (default: <out>.report.csv)");
  s->add_option("--init-out", stitch.init_out, "also write the init-parameter panorama");
  s->add_option("--dump-intermediates", stitch.dump, "directory for forward intermediates");
  s->add_option("--iters", stitch.iters, "iterations (overrides optim.iters)");
  s->add_option("--lr", stitch.lr, "learning rate (overrides optim.lr)");
  s->add_option("--alpha", stitch.alpha, "local adjustment weight (overrides loss.alpha)");
  s->add_option("--lambda", stitch.lambda, "SSIM weight (overrides loss.lambda)");
  s->add_option("--freeze", stitch.freeze, "groups to freeze: pre_color affine local weights post_color")
      ->delimiter(',');

  EvalOptions eval;
  auto* e = app.add_subcommand("eval", "score a panorama against a scene");
  add_common(e, eval.common);
  e->add_option("--scene", eval.scene, "scene directory")->required();
  e->add_option("--panorama", eval.panorama, "panorama to score (PNG or WSSF1)")->required();
  e->add_option("--kv", eval.kv, "also write key = value metrics here");

  GradcheckCliOptions gc;
  auto* g = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
  g->add_option("--seed", gc.seed, "first seed");
  g->add_option("--seeds", gc.seeds, "number of consecutive seeds")->check(CLI::PositiveNumber);
  g->add_option("--coords", gc.coords, "coordinates probed per block (0 = all)");
  bool chain_only = false;
  g->add_flag("--chain-only", chain_only, "skip the per-op checks");

  auto* v = app.add_subcommand("version", "print the version");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (r->parsed()) return do_render(render, out, err);
    if (f->parsed()) return do_fit_color(fit, out, err);
    if (s->parsed()) return do_stitch(stitch, out, err);
    if (e->parsed()) return do_eval(eval, out, err);
    if (g->parsed()) {
      gc.ops = !chain_only;
      return do_gradcheck(gc, out, err);
    }
    if (v->parsed()) {
      out << "panostitch " << kVersion << "\n";
      return kOk;
    }
  } catch (const optimizer::NonFiniteLossError& ex) {
    err << "error: " << ex.what() << "\n";
    return kFailure;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace panostitch::cli
