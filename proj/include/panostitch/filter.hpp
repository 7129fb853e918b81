#pragma once

#include <vector>

#include "panostitch/image.hpp"

namespace panostitch {

/// Reflect-101 border index (…2 1 | 0 1 2 … n-2 n-1 | n-2 …).
int reflect_index(int i, int n);

/// Normalized 1-D Gaussian with 2*radius+1 taps.
std::vector<double> gaussian_kernel(double sigma, int radius);

/// Separable correlation with a (2r+1)-tap kernel on both axes, reflect-101
/// borders, applied per channel.
template <typename T>
Image<T> filter_separable(const Image<T>& in, const std::vector<double>& kernel);

/// Exact adjoint of filter_separable (transposed scatter, same borders).
template <typename T>
Image<T> filter_separable_adjoint(const Image<T>& d_out, const std::vector<double>& kernel);

/// Pixels whose whole (2r+1)^2 reflected window lies inside `mask`.
Mask erode_window(const Mask& mask, int radius);

}  // namespace panostitch
