#include "panostitch/filter.hpp"

#include <cmath>

#include "panostitch/parallel.hpp"

namespace panostitch {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
  if (!(sigma > 0.0) || radius < 0) throw DomainError("gaussian_kernel: invalid sigma or radius");
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

template <typename T>
Image<T> filter_separable(const Image<T>& in, const std::vector<double>& kernel) {
  const int h = in.height(), w = in.width(), c = in.channels();
  const int r = static_cast<int>(kernel.size() / 2);
  std::vector<T> k(kernel.begin(), kernel.end());
  Image<T> tmp(h, w, c);
  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        T acc = 0;
        for (int t = -r; t <= r; ++t) acc += k[t + r] * in.at(y, reflect_index(x + t, w), ch);
        tmp.at(y, x, ch) = acc;
      }
  });
  Image<T> out(h, w, c);
  parallel_rows(h, [&](int y) {
    for (int t = -r; t <= r; ++t) {
      const T kt = k[t + r];
      const T* src = tmp.row(reflect_index(y + t, h));
      T* dst = out.row(y);
      for (int i = 0; i < w * c; ++i) dst[i] += kt * src[i];
    }
  });
  return out;
}

template <typename T>
Image<T> filter_separable_adjoint(const Image<T>& d_out, const std::vector<double>& kernel) {
  const int h = d_out.height(), w = d_out.width(), c = d_out.channels();
  const int r = static_cast<int>(kernel.size() / 2);
  std::vector<T> k(kernel.begin(), kernel.end());
  // Transposed vertical pass, then transposed horizontal pass. Scatter
  // targets cross rows, so these run sequentially.
  Image<T> tmp(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int t = -r; t <= r; ++t) {
      const T kt = k[t + r];
      const T* src = d_out.row(y);
      T* dst = tmp.row(reflect_index(y + t, h));
      for (int i = 0; i < w * c; ++i) dst[i] += kt * src[i];
    }
  Image<T> out(h, w, c);
  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x)
      for (int t = -r; t <= r; ++t) {
        const int xs = reflect_index(x + t, w);
        for (int ch = 0; ch < c; ++ch) out.at(y, xs, ch) += k[t + r] * tmp.at(y, x, ch);
      }
  });
  return out;
}

Mask erode_window(const Mask& mask, int radius) {
  const int h = mask.height(), w = mask.width();
  Mask horiz(h, w), out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool all = true;
      for (int t = -radius; t <= radius && all; ++t) all = mask.at(y, reflect_index(x + t, w));
      horiz.set(y, x, all);
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool all = true;
      for (int t = -radius; t <= radius && all; ++t) all = horiz.at(reflect_index(y + t, h), x);
      out.set(y, x, all);
    }
  return out;
}

template Image<float> filter_separable<float>(const Image<float>&, const std::vector<double>&);
template Image<double> filter_separable<double>(const Image<double>&, const std::vector<double>&);
template Image<float> filter_separable_adjoint<float>(const Image<float>&,
                                                      const std::vector<double>&);
template Image<double> filter_separable_adjoint<double>(const Image<double>&,
                                                        const std::vector<double>&);

}  // namespace panostitch
