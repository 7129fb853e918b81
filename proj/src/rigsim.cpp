#include "panostitch/rigsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "panostitch/config.hpp"
#include "panostitch/io.hpp"
#include "panostitch/parallel.hpp"

namespace panostitch::rigsim {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Bilinear ERP lookup at continuous pixel coords; wraps in x, clamps in y.
void sample_erp(const ImageF& erp, double px, double py, float* out) {
  const int w = erp.width();
  const int h = erp.height();
  const double fx = px - 0.5;
  const double fy = std::clamp(py - 0.5, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const double ax = fx - x0;
  const double ay = fy - y0;
  const int xa = ((x0 % w) + w) % w;
  const int xb = (xa + 1) % w;
  const int ya = y0;
  const int yb = std::min(y0 + 1, h - 1);
  for (int c = 0; c < erp.channels(); ++c) {
    const double v = (1 - ay) * ((1 - ax) * erp.at(ya, xa, c) + ax * erp.at(ya, xb, c)) +
                     ay * ((1 - ax) * erp.at(yb, xa, c) + ax * erp.at(yb, xb, c));
    out[c] = static_cast<float>(v);
  }
}

bool inside_circle(const geometry::FisheyeCamera& cam, double px, double py) {
  return std::hypot(px - cam.cx, py - cam.cy) <= cam.radius_px;
}

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

void check_perturbation_value(bool ok, const std::string& what) {
  if (!ok) throw DomainError("perturbation: " + what);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Resamples a panorama onto another ERP grid (identity when sizes match).
ImageF resample_erp(const ImageF& source, geometry::ErpSize erp) {
  if (source.same_grid(erp.height, erp.width)) return source;
  ImageF out(erp.height, erp.width, source.channels());
  const geometry::ErpSize src{source.width(), source.height()};
  parallel_rows(erp.height, [&](int y) {
    for (int x = 0; x < erp.width; ++x) {
      const auto ray = geometry::erp_pixel_to_ray({x + 0.5, y + 0.5}, erp);
      const auto p = geometry::ray_to_erp_pixel(ray, src);
      sample_erp(source, p.x, p.y, &out.at(y, x, 0));
    }
  });
  return out;
}

}  // namespace

std::string perturbation_text(const PerturbationSpec& p) {
  std::ostringstream out;
  out << "noise_sigma = " << config::format_double(p.noise_sigma) << "\n";
  out << "seed = " << p.seed << "\n";
  auto emit = [&](const std::string& prefix, const std::vector<CameraPerturbation>& cams) {
    for (std::size_t i = 0; i < cams.size(); ++i) {
      const auto& c = cams[i];
      const std::string k = prefix + "." + std::to_string(i) + ".";
      out << k << "yaw = " << config::format_double(c.yaw_deg) << "\n";
      out << k << "pitch = " << config::format_double(c.pitch_deg) << "\n";
      out << k << "roll = " << config::format_double(c.roll_deg) << "\n";
      out << k << "gain = " << config::format_double(c.gain) << "\n";
      out << k << "gamma = " << config::format_double(c.gamma) << "\n";
    }
  };
  emit("input", p.inputs);
  emit("supervision", p.supervision);
  return out.str();
}

PerturbationSpec parse_perturbation(std::string_view text, std::string_view origin) {
  PerturbationSpec p;
  for (const auto& [key, value] : config::parse_key_values(text, origin)) {
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw DomainError(std::string(origin) + ": key '" + key + "' expects a number");
    }
    if (key == "noise_sigma") {
      p.noise_sigma = v;
      continue;
    }
    if (key == "seed") {
      p.seed = static_cast<std::uint64_t>(v);
      continue;
    }
    const auto d1 = key.find('.');
    const auto d2 = key.find('.', d1 == std::string::npos ? 0 : d1 + 1);
    if (d1 == std::string::npos || d2 == std::string::npos)
      throw DomainError(std::string(origin) + ": unknown key '" + key + "'");
    const std::string group = key.substr(0, d1);
    const std::string field = key.substr(d2 + 1);
    std::vector<CameraPerturbation>* cams = nullptr;
    if (group == "input") cams = &p.inputs;
    else if (group == "supervision") cams = &p.supervision;
    else throw DomainError(std::string(origin) + ": unknown key '" + key + "'");
    const int index = std::stoi(key.substr(d1 + 1, d2 - d1 - 1));
    if (index < 0 || index > 64)
      throw DomainError(std::string(origin) + ": bad camera index in '" + key + "'");
    if (cams->size() <= static_cast<std::size_t>(index)) cams->resize(index + 1);
    CameraPerturbation& c = (*cams)[index];
    if (field == "yaw") c.yaw_deg = v;
    else if (field == "pitch") c.pitch_deg = v;
    else if (field == "roll") c.roll_deg = v;
    else if (field == "gain") c.gain = v;
    else if (field == "gamma") c.gamma = v;
    else throw DomainError(std::string(origin) + ": unknown key '" + key + "'");
  }
  p.validate();
  return p;
}

PerturbationSpec read_perturbation(const std::filesystem::path& path) {
  return parse_perturbation(read_text(path), path.string());
}


void CameraPerturbation::validate() const {
  check_perturbation_value(std::isfinite(yaw_deg) && std::isfinite(pitch_deg) &&
                               std::isfinite(roll_deg),
                           "non-finite pose error");
  check_perturbation_value(std::abs(yaw_deg) < 90 && std::abs(pitch_deg) < 90 &&
                               std::abs(roll_deg) < 90,
                           "pose errors must stay below 90 degrees");
  check_perturbation_value(gain > 0 && std::isfinite(gain), "gain must be positive");
  check_perturbation_value(gamma > 0 && std::isfinite(gamma), "gamma must be positive");
}

bool CameraPerturbation::is_identity() const {
  return yaw_deg == 0 && pitch_deg == 0 && roll_deg == 0 && gain == 1 && gamma == 1;
}

void PerturbationSpec::validate() const {
  for (const auto& c : inputs) c.validate();
  for (const auto& c : supervision) c.validate();
  check_perturbation_value(noise_sigma >= 0 && std::isfinite(noise_sigma),
                           "noise_sigma must be non-negative");
}

CameraPerturbation PerturbationSpec::input(std::size_t i) const {
  return i < inputs.size() ? inputs[i] : CameraPerturbation{};
}

CameraPerturbation PerturbationSpec::supervised(std::size_t i) const {
  return i < supervision.size() ? supervision[i] : CameraPerturbation{};
}

ImageF render_fisheye(const ImageF& source_erp, const geometry::FisheyeCamera& cam) {
  return render_fisheye(source_erp, cam, geometry::camera_rotation(cam.yaw_deg));
}

ImageF render_fisheye(const ImageF& source_erp, const geometry::FisheyeCamera& cam,
                      const Eigen::Matrix3d& camera_to_world) {
  cam.validate();
  if (source_erp.empty() || source_erp.width() != 2 * source_erp.height())
    throw DomainError("render_fisheye: source must be a 2:1 panorama");
  const int ch = source_erp.channels();
  const geometry::ErpSize erp{source_erp.width(), source_erp.height()};
  ImageF out(cam.height, cam.width, ch);
  // 2x2 supersampling inside each pixel; samples outside the circle are dropped.
  constexpr double kOffsets[2] = {0.25, 0.75};
  parallel_rows(cam.height, [&](int y) {
    std::vector<float> tap(ch);
    std::vector<double> acc(ch);
    for (int x = 0; x < cam.width; ++x) {
      if (!inside_circle(cam, x + 0.5, y + 0.5)) continue;
      std::fill(acc.begin(), acc.end(), 0.0);
      int n = 0;
      for (double oy : kOffsets)
        for (double ox : kOffsets) {
          const double px = x + ox;
          const double py = y + oy;
          if (!inside_circle(cam, px, py)) continue;
          const Eigen::Vector3d ray =
              (camera_to_world * geometry::unproject_camera_pixel({px, py}, cam)).normalized();
          const auto e = geometry::ray_to_erp_pixel(ray, erp);
          sample_erp(source_erp, e.x, e.y, tap.data());
          for (int c = 0; c < ch; ++c) acc[c] += tap[c];
          ++n;
        }
      for (int c = 0; c < ch; ++c) out.at(y, x, c) = static_cast<float>(acc[c] / n);
    }
  });
  return out;
}

ImageF perturb_colors(const ImageF& image, const geometry::FisheyeCamera& cam,
                      const CameraPerturbation& p, double noise_sigma, std::mt19937_64& rng) {
  p.validate();
  ImageF out = image;
  std::normal_distribution<double> noise(0.0, noise_sigma > 0 ? noise_sigma : 1.0);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      if (!inside_circle(cam, x + 0.5, y + 0.5)) continue;
      for (int c = 0; c < out.channels(); ++c) {
        double v = std::max(0.0, static_cast<double>(out.at(y, x, c)));
        v = p.gain * std::pow(v, p.gamma);
        if (noise_sigma > 0) v += noise(rng);
        out.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  return out;
}

ImageF project_to_erp(const ImageF& fisheye, const geometry::FisheyeCamera& cam,
                      geometry::ErpSize erp) {
  if (!fisheye.same_grid(cam.height, cam.width))
    throw DomainError("project_to_erp: image does not match the camera sensor");
  const auto base = geometry::build_base_warp<double>(cam, erp);
  const int ch = fisheye.channels();
  ImageF out(erp.height, erp.width, ch);
  // Bilinear taps restricted to pixels inside the image circle, renormalized,
  // so the footprint border is not darkened by the black surround.
  parallel_rows(erp.height, [&](int y) {
    for (int x = 0; x < erp.width; ++x) {
      if (!base.mask.at(y, x)) continue;
      const double fx = base.field.sx(y, x) - 0.5;
      const double fy = base.field.sy(y, x) - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      const int y0 = static_cast<int>(std::floor(fy));
      const double ax = fx - x0;
      const double ay = fy - y0;
      double wsum = 0.0;
      double acc[4] = {0, 0, 0, 0};
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const int sx = x0 + dx;
          const int sy = y0 + dy;
          if (sx < 0 || sy < 0 || sx >= cam.width || sy >= cam.height) continue;
          if (!inside_circle(cam, sx + 0.5, sy + 0.5)) continue;
          const double w = (dx ? ax : 1 - ax) * (dy ? ay : 1 - ay);
          if (w <= 0) continue;
          wsum += w;
          for (int c = 0; c < ch && c < 4; ++c) acc[c] += w * fisheye.at(sy, sx, c);
        }
      if (wsum <= 0) continue;
      for (int c = 0; c < ch && c < 4; ++c) out.at(y, x, c) = static_cast<float>(acc[c] / wsum);
    }
  });
  return out;
}

pipeline::StitchInputs<float> SceneBundle::stitch_inputs() const {
  pipeline::StitchInputs<float> s;
  s.images = inputs;
  s.base_fields = base_fields;
  s.base_masks = base_masks;
  s.validate();
  return s;
}

void attach_calibration(SceneBundle& scene) {
  scene.base_fields.clear();
  scene.base_masks.clear();
  for (std::size_t i = 0; i < scene.rig.input_yaws_deg.size(); ++i) {
    auto base = geometry::build_base_warp<float>(scene.rig.input_camera(i), scene.rig.erp_size());
    scene.base_fields.push_back(std::move(base.field));
    scene.base_masks.push_back(std::move(base.mask));
  }
}

SceneBundle make_scene(const ImageF& source_erp, const geometry::RigConfig& rig,
                       const PerturbationSpec& perturb,
                       const color::ConsistencyOptions& consistency) {
  rig.validate();
  perturb.validate();
  if (source_erp.channels() != 3) throw DomainError("make_scene: source must be RGB");
  SceneBundle scene;
  scene.rig = rig;
  scene.perturbation = perturb;
  std::mt19937_64 rng(perturb.seed);
  auto capture = [&](const geometry::FisheyeCamera& cam, const CameraPerturbation& p) {
    const Eigen::Matrix3d r =
        geometry::camera_rotation(cam.yaw_deg + p.yaw_deg, p.pitch_deg, p.roll_deg);
    return perturb_colors(render_fisheye(source_erp, cam, r), cam, p, perturb.noise_sigma, rng);
  };
  for (std::size_t i = 0; i < rig.input_yaws_deg.size(); ++i)
    scene.inputs.push_back(capture(rig.input_camera(i), perturb.input(i)));
  for (std::size_t i = 0; i < rig.supervision_yaws_deg.size(); ++i) {
    const auto cam = rig.supervision_camera(i);
    scene.supervision_raw.push_back(
        project_to_erp(capture(cam, perturb.supervised(i)), cam, rig.erp_size()));
  }

  const auto masks = geometry::weak_supervision_masks(rig);
  scene.masks = masks.footprints;
  scene.m_hat = masks.exclusive;

  const std::size_t ref = color::reference_index(rig, consistency.reference_yaw_deg);
  std::vector<ImageF> queries;
  for (std::size_t i = 0; i < scene.supervision_raw.size(); ++i)
    if (i != ref) queries.push_back(scene.supervision_raw[i]);
  auto fixed = color::correct_weak_supervision(queries, scene.supervision_raw[ref], rig,
                                               consistency);
  scene.supervision_erp.resize(scene.supervision_raw.size());
  scene.supervision_erp[ref] = apply_mask(scene.supervision_raw[ref], scene.masks[ref]);
  for (std::size_t q = 0; q < fixed.query_indices.size(); ++q)
    scene.supervision_erp[fixed.query_indices[q]] = std::move(fixed.corrected[q]);
  scene.polynomials = std::move(fixed.polynomials);

  scene.truth = resample_erp(source_erp, rig.erp_size());
  attach_calibration(scene);
  return scene;
}

ImageF synthetic_panorama(int width, int height, std::uint64_t seed) {
  if (width <= 0 || height <= 0 || width != 2 * height)
    throw DomainError("synthetic_panorama: size must be 2H x H");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto random_dir = [&] {
    const double z = 2 * u01(rng) - 1;
    const double phi = 2 * std::numbers::pi * u01(rng);
    const double s = std::sqrt(1 - z * z);
    return Eigen::Vector3d(s * std::cos(phi), z, s * std::sin(phi));
  };
  auto random_color = [&] { return Eigen::Vector3d(u01(rng), u01(rng), u01(rng)); };

  struct Cap {
    Eigen::Vector3d center;
    double radius;
    double edge;
    Eigen::Vector3d color;
  };
  struct Stripe {
    Eigen::Vector3d axis;
    double freq;
    double phase;
    Eigen::Vector3d color;
  };
  const Eigen::Vector3d sky = random_color();
  const Eigen::Vector3d ground = random_color();
  std::vector<Cap> caps(24);
  for (auto& c : caps) {
    c.center = random_dir();
    c.radius = (6 + 28 * u01(rng)) * kDeg;
    c.edge = (1 + 3 * u01(rng)) * kDeg;
    c.color = random_color();
  }
  std::vector<Stripe> stripes(3);
  for (auto& s : stripes) {
    s.axis = random_dir();
    s.freq = 6 + 14 * u01(rng);
    s.phase = 2 * std::numbers::pi * u01(rng);
    s.color = random_color();
  }

  ImageF out(height, width, 3);
  const geometry::ErpSize erp{width, height};
  parallel_rows(height, [&](int y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector3d d = geometry::erp_pixel_to_ray({x + 0.5, y + 0.5}, erp);
      const double t = 0.5 + 0.5 * d.y();
      Eigen::Vector3d v = (1 - t) * ground + t * sky;
      for (const auto& s : stripes) {
        const double a = 0.25 * (0.5 + 0.5 * std::sin(s.freq * d.dot(s.axis) + s.phase));
        v = (1 - a) * v + a * s.color;
      }
      for (const auto& c : caps) {
        const double ang = std::acos(std::clamp(d.dot(c.center), -1.0, 1.0));
        const double a = 1 - smoothstep(c.radius - c.edge, c.radius + c.edge, ang);
        v = (1 - 0.85 * a) * v + 0.85 * a * c.color;
      }
      for (int k = 0; k < 3; ++k)
        out.at(y, x, k) = static_cast<float>(0.05 + 0.9 * std::clamp(v[k], 0.0, 1.0));
    }
  });
  return out;
}

double overlap_disagreement(const std::vector<ImageF>& views, const std::vector<Mask>& masks) {
  if (views.size() != masks.size()) throw DomainError("overlap_disagreement: count mismatch");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < views.size(); ++i)
    for (std::size_t j = i + 1; j < views.size(); ++j) {
      if (!views[i].same_shape(views[j])) throw DomainError("overlap_disagreement: shape mismatch");
      const Mask both = masks[i] & masks[j];
      const int ch = views[i].channels();
      for (std::size_t p = 0; p < both.size(); ++p) {
        if (!both[p]) continue;
        for (int c = 0; c < ch; ++c)
          sum += std::abs(views[i].storage()[p * ch + c] - views[j].storage()[p * ch + c]);
        n += ch;
      }
    }
  if (n == 0) throw DomainError("overlap_disagreement: views do not overlap");
  return sum / static_cast<double>(n);
}

void write_scene(const SceneBundle& scene, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "inputs");
  fs::create_directories(dir / "supervision");
  fs::create_directories(dir / "masks");
  config::Config cfg;
  cfg.set_rig(scene.rig);
  {
    std::ofstream f(dir / "scene.cfg");
    f << cfg.serialize();
  }
  {
    std::ofstream f(dir / "manifest.txt");
    f << "# artifacts: scene.cfg truth.png masks/m_hat.png";
    for (std::size_t i = 0; i < scene.inputs.size(); ++i) f << " inputs/input_" << i << ".png";
    for (std::size_t i = 0; i < scene.supervision_erp.size(); ++i)
      f << " supervision/supervision_" << i << ".png supervision/raw_" << i << ".png masks/mask_"
        << i << ".png";
    f << "\n" << perturbation_text(scene.perturbation);
  }
  if (!scene.truth.empty()) io::write_png(dir / "truth.png", scene.truth);
  for (std::size_t i = 0; i < scene.inputs.size(); ++i)
    io::write_png(dir / "inputs" / ("input_" + std::to_string(i) + ".png"), scene.inputs[i]);
  for (std::size_t i = 0; i < scene.supervision_erp.size(); ++i) {
    io::write_png(dir / "supervision" / ("supervision_" + std::to_string(i) + ".png"),
                  scene.supervision_erp[i]);
    if (i < scene.supervision_raw.size())
      io::write_png(dir / "supervision" / ("raw_" + std::to_string(i) + ".png"),
                    scene.supervision_raw[i]);
  }
  for (std::size_t i = 0; i < scene.masks.size(); ++i)
    io::write_mask_png(dir / "masks" / ("mask_" + std::to_string(i) + ".png"), scene.masks[i]);
  io::write_mask_png(dir / "masks" / "m_hat.png", scene.m_hat);
}

SceneBundle read_scene(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DomainError("scene directory not found: " + dir.string());
  SceneBundle scene;
  const auto cfg = config::Config::parse(read_text(dir / "scene.cfg"), (dir / "scene.cfg").string());
  scene.rig = cfg.rig();
  if (fs::exists(dir / "manifest.txt"))
    scene.perturbation =
        parse_perturbation(read_text(dir / "manifest.txt"), (dir / "manifest.txt").string());
  const auto erp = scene.rig.erp_size();
  for (std::size_t i = 0; i < scene.rig.input_yaws_deg.size(); ++i) {
    ImageF img = io::read_png(dir / "inputs" / ("input_" + std::to_string(i) + ".png"));
    const auto cam = scene.rig.input_camera(i);
    if (!img.same_grid(cam.height, cam.width) || img.channels() != 3)
      throw DomainError("read_scene: input " + std::to_string(i) + " has the wrong size");
    scene.inputs.push_back(std::move(img));
  }
  for (std::size_t i = 0; i < scene.rig.supervision_yaws_deg.size(); ++i) {
    const std::string n = std::to_string(i);
    ImageF sup = io::read_png(dir / "supervision" / ("supervision_" + n + ".png"));
    if (!sup.same_grid(erp.height, erp.width) || sup.channels() != 3)
      throw DomainError("read_scene: supervision " + n + " has the wrong size");
    scene.supervision_erp.push_back(std::move(sup));
    const fs::path raw = dir / "supervision" / ("raw_" + n + ".png");
    if (fs::exists(raw)) scene.supervision_raw.push_back(io::read_png(raw));
    scene.masks.push_back(io::read_mask_png(dir / "masks" / ("mask_" + n + ".png")));
    if (!scene.masks.back().same_grid(erp.height, erp.width))
      throw DomainError("read_scene: mask " + n + " has the wrong size");
  }
  scene.m_hat = io::read_mask_png(dir / "masks" / "m_hat.png");
  if (fs::exists(dir / "truth.png")) scene.truth = io::read_png(dir / "truth.png");
  attach_calibration(scene);
  return scene;
}

}  // namespace panostitch::rigsim
