#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "panostitch/cli.hpp"
#include "panostitch/config.hpp"
#include "panostitch/gradcheck.hpp"
#include "panostitch/io.hpp"
#include "panostitch/losses.hpp"
#include "panostitch/rigsim.hpp"
#include "panostitch/workflow.hpp"

namespace py = pybind11;
using namespace panostitch;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// HxWxC float32 array, copied.
FloatArray to_numpy(const ImageF& img) {
  FloatArray out({img.height(), img.width(), img.channels()});
  std::memcpy(out.mutable_data(), img.storage().data(), img.size() * sizeof(float));
  return out;
}

ImageF from_numpy(const FloatArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw DomainError("expected an HxW or HxWxC array");
  const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  ImageF img(h, w, c);
  std::memcpy(img.storage().data(), a.data(), img.size() * sizeof(float));
  return img;
}

py::array_t<bool> mask_to_numpy(const Mask& m) {
  py::array_t<bool> out({m.height(), m.width()});
  auto* d = out.mutable_data();
  for (std::size_t i = 0; i < m.size(); ++i) d[i] = m[i] != 0;
  return out;
}

config::Config make_config(const std::map<std::string, std::string>& overrides) {
  config::Config cfg;
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  return cfg;
}

py::dict metrics_dict(const workflow::Metrics& m) {
  py::dict d;
  d["perceptual_distance"] = m.perceptual_distance;
  if (m.psnr) d["psnr"] = *m.psnr;
  if (m.ssim) d["ssim"] = *m.ssim;
  return d;
}

}  // namespace

PYBIND11_MODULE(_panostitch, m) {
  m.doc() = "Differentiable fisheye panorama stitching";
  m.attr("__version__") = cli::kVersion;

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);

  m.def("read_image", [](const std::filesystem::path& p) { return to_numpy(io::read_image(p)); },
        py::arg("path"), "Reads a PNG or WSSF1 file as an HxWxC float32 array in [0,1].");
  m.def("write_png", [](const std::filesystem::path& p, const FloatArray& a) {
    io::write_png(p, from_numpy(a));
  }, py::arg("path"), py::arg("image"));
  m.def("write_wssf", [](const std::filesystem::path& p, const FloatArray& a) {
    io::write_wssf(p, from_numpy(a));
  }, py::arg("path"), py::arg("image"));

  m.def("synthetic_panorama", [](int width, int height, std::uint64_t seed) {
    return to_numpy(rigsim::synthetic_panorama(width, height, seed));
  }, py::arg("width"), py::arg("height"), py::arg("seed") = 0);

  m.def("config_defaults", [] {
    std::map<std::string, std::string> out;
    for (const auto& k : config::Config::schema()) out[k.key] = k.default_value;
    return out;
  }, "Every configuration key with its default value.");

  py::class_<rigsim::SceneBundle>(m, "Scene")
      .def_property_readonly("inputs", [](const rigsim::SceneBundle& s) {
        py::list l;
        for (const auto& i : s.inputs) l.append(to_numpy(i));
        return l;
      })
      .def_property_readonly("supervision", [](const rigsim::SceneBundle& s) {
        py::list l;
        for (const auto& i : s.supervision_erp) l.append(to_numpy(i));
        return l;
      })
      .def_property_readonly("masks", [](const rigsim::SceneBundle& s) {
        py::list l;
        for (const auto& i : s.masks) l.append(mask_to_numpy(i));
        return l;
      })
      .def_property_readonly("m_hat", [](const rigsim::SceneBundle& s) { return mask_to_numpy(s.m_hat); })
      .def_property_readonly("truth", [](const rigsim::SceneBundle& s) { return to_numpy(s.truth); })
      .def("write", [](const rigsim::SceneBundle& s, const std::filesystem::path& dir) {
        rigsim::write_scene(s, dir);
      }, py::arg("directory"));

  m.def("make_scene", [](const FloatArray& source, const std::map<std::string, std::string>& cfg,
                         std::uint64_t seed, double max_yaw, double gain_min, double gain_max,
                         bool supervision_gains, double noise) {
    const auto c = make_config(cfg);
    const auto rig = c.rig();
    const auto p = workflow::random_perturbation(rig, seed, max_yaw, gain_min, gain_max,
                                                 supervision_gains,
                                                 c.get_double("color.reference_yaw"), noise);
    return rigsim::make_scene(from_numpy(source), rig, p, c.consistency());
  }, py::arg("source"), py::arg("config") = std::map<std::string, std::string>{},
     py::arg("seed") = 0, py::arg("max_yaw") = 0.0, py::arg("gain_min") = 1.0,
     py::arg("gain_max") = 1.0, py::arg("supervision_gains") = false, py::arg("noise") = 0.0,
     "Renders a perturbed rig from an ERP source and prepares the weak supervision.");

  m.def("read_scene", [](const std::filesystem::path& dir) { return rigsim::read_scene(dir); },
        py::arg("directory"));

  m.def("stitch", [](const rigsim::SceneBundle& scene, const std::map<std::string, std::string>& cfg) {
    workflow::StitchOutcome out;
    {
      py::gil_scoped_release release;
      out = workflow::stitch_scene(scene, make_config(cfg));
    }
    py::dict d;
    d["panorama"] = to_numpy(out.output);
    d["initial"] = to_numpy(out.initial);
    py::list hist;
    for (const auto& r : out.report.history) hist.append(py::make_tuple(r.total, r.perceptual, r.ssim));
    d["history"] = hist;
    d["best_iteration"] = out.report.best_iteration;
    d["best_loss"] = out.report.best_total();
    return d;
  }, py::arg("scene"), py::arg("config") = std::map<std::string, std::string>{},
     "Optimizes a scene; returns the panorama, the init panorama and the loss history.");

  m.def("evaluate", [](const FloatArray& pano, const rigsim::SceneBundle& scene,
                       const std::map<std::string, std::string>& cfg) {
    return metrics_dict(workflow::evaluate_panorama(from_numpy(pano), scene, make_config(cfg)));
  }, py::arg("panorama"), py::arg("scene"), py::arg("config") = std::map<std::string, std::string>{});

  m.def("ssim", [](const FloatArray& x, const FloatArray& y) {
    const ImageF a = from_numpy(x), b = from_numpy(y);
    return losses::mean_ssim(a, b, Mask(a.height(), a.width(), 1));
  }, py::arg("x"), py::arg("y"));

  m.def("gradcheck", [](std::uint64_t seed, bool chain_only) {
    py::gil_scoped_release release;
    std::vector<std::pair<std::string, double>> out;
    auto add = [&](const gradcheck::Report& r) {
      for (const auto& c : r.checks) out.emplace_back(c.name, c.max_rel_error);
    };
    if (!chain_only) add(gradcheck::check_ops(seed));
    add(gradcheck::check_pipeline(seed));
    return out;
  }, py::arg("seed") = 0, py::arg("chain_only") = false,
     "Max relative finite-difference error per op and parameter group.");

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Runs one CLI subcommand in-process; returns (code, stdout, stderr).");
}
