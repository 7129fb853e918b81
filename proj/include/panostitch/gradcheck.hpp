#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace panostitch::gradcheck {

struct GradcheckOptions {
  int erp_height = 32;
  int erp_width = 64;
  int fisheye_size = 48;
  int ssim_window = 5;         // an 11-px window leaves almost no exclusive region at 32x64
  double step = 1e-5;          // central-difference step; affine linear terms use step / fisheye_size
  double tolerance = 1e-3;     // max relative error
  double abs_floor = 1e-6;     // denominators never drop below this (FD roundoff is ~1e-10)
  int coords_per_block = 24;   // 0 = every coordinate
};

/// Largest relative error seen for one named gradient (an op input or a
/// parameter group).
struct Check {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coords = 0;
};

struct Report {
  std::uint64_t seed = 0;
  double loss = 0.0;
  std::vector<Check> checks;

  double max_error() const;
  bool passed(double tolerance) const { return max_error() <= tolerance; }
};

/// Central-difference check of `analytic` against f, which must read the
/// current contents of x. Probes the listed coordinates and restores x.
/// `step(i)` gives the central-difference step for coordinate i.
double max_relative_error(const std::function<double()>& f, std::span<double> x,
                          std::span<const double> analytic, const std::vector<std::size_t>& coords,
                          const std::function<double(std::size_t)>& step, double abs_floor);

/// Coordinates to probe: the largest-|g| entry plus random picks (all when
/// count is 0 or exceeds the size).
std::vector<std::size_t> probe_coords(std::span<const double> analytic, int count,
                                      std::uint64_t seed);

/// Every differentiable building block (warp, composition, softmax, blend,
/// upsampling, curves, features, filters, global warp, both losses).
Report check_ops(std::uint64_t seed, const GradcheckOptions& opts = {});

/// The full forward_backward chain on a rendered scene with random
/// parameters, one check per parameter group.
Report check_pipeline(std::uint64_t seed, const GradcheckOptions& opts = {});

}  // namespace panostitch::gradcheck
