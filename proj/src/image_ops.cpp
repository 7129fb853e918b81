#include "panostitch/image_ops.hpp"

#include <cmath>
#include <string>

#include "panostitch/parallel.hpp"

namespace panostitch {
namespace {

template <typename T>
struct Taps {
  int x0 = 0;
  int y0 = 0;
  T ax = 0;
  T ay = 0;
  bool usable = false;
};

// Beyond this distance every tap is far outside any raster we handle.
constexpr double kFarAway = 1e7;

template <typename T>
Taps<T> bilinear_taps(T sx, T sy) {
  Taps<T> t;
  const T fx = sx - T(0.5);
  const T fy = sy - T(0.5);
  if (!std::isfinite(fx) || !std::isfinite(fy) || std::abs(fx) > kFarAway ||
      std::abs(fy) > kFarAway)
    return t;
  const T flx = std::floor(fx);
  const T fly = std::floor(fy);
  t.x0 = static_cast<int>(flx);
  t.y0 = static_cast<int>(fly);
  t.ax = fx - flx;
  t.ay = fy - fly;
  t.usable = true;
  return t;
}

inline bool inside(int x, int y, int w, int h) { return x >= 0 && y >= 0 && x < w && y < h; }

template <typename T>
void check_same(const Image<T>& a, const Image<T>& b, const char* where) {
  if (!a.same_shape(b)) throw DomainError(std::string(where) + ": dimension mismatch");
}

struct AxisTaps {
  std::vector<int> i0, i1;
  std::vector<double> a;
};

AxisTaps axis_taps(int out, int in) {
  AxisTaps t;
  t.i0.resize(out);
  t.i1.resize(out);
  t.a.resize(out);
  for (int x = 0; x < out; ++x) {
    double s = (x + 0.5) * in / out - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(s));
    t.i0[x] = i0;
    t.i1[x] = std::min(i0 + 1, in - 1);
    t.a[x] = s - i0;
  }
  return t;
}

}  // namespace

int control_size(int size, int divisor) {
  if (divisor <= 0) throw DomainError("control_size: divisor must be positive");
  return std::max(1, (size + divisor - 1) / divisor);
}

template <typename T>
WarpResult<T> warp(const Image<T>& image, const WarpField<T>& field) {
  const int h = field.height(), w = field.width(), c = image.channels();
  const int ih = image.height(), iw = image.width();
  WarpResult<T> out{Image<T>(h, w, c), Mask(h, w)};
  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const Taps<T> t = bilinear_taps(field.sx(y, x), field.sy(y, x));
      if (!t.usable) continue;
      const int xs[2] = {t.x0, t.x0 + 1};
      const int ys[2] = {t.y0, t.y0 + 1};
      const T wx[2] = {T(1) - t.ax, t.ax};
      const T wy[2] = {T(1) - t.ay, t.ay};
      bool all_in = true;
      T* dst = &out.image.at(y, x, 0);
      for (int j = 0; j < 2; ++j)
        for (int i = 0; i < 2; ++i) {
          const T wt = wx[i] * wy[j];
          if (wt == T(0)) continue;
          if (!inside(xs[i], ys[j], iw, ih)) {
            all_in = false;
            continue;
          }
          const T* src = &image.at(ys[j], xs[i], 0);
          for (int k = 0; k < c; ++k) dst[k] += wt * src[k];
        }
      out.mask.set(y, x, all_in);
    }
  });
  return out;
}

template <typename T>
WarpGrad<T> warp_backward(const Image<T>& image, const WarpField<T>& field,
                          const Image<T>& d_out) {
  const int h = field.height(), w = field.width(), c = image.channels();
  const int ih = image.height(), iw = image.width();
  if (!d_out.same_grid(h, w) || d_out.channels() != c)
    throw DomainError("warp_backward: cotangent shape mismatch");
  WarpGrad<T> g{Image<T>(ih, iw, c), WarpField<T>(h, w)};

  auto tap_value = [&](int xi, int yi, int k) -> T {
    return inside(xi, yi, iw, ih) ? image.at(yi, xi, k) : T(0);
  };

  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const Taps<T> t = bilinear_taps(field.sx(y, x), field.sy(y, x));
      if (!t.usable) continue;
      T gx = 0, gy = 0;
      for (int k = 0; k < c; ++k) {
        const T up = d_out.at(y, x, k);
        const T v00 = tap_value(t.x0, t.y0, k), v10 = tap_value(t.x0 + 1, t.y0, k);
        const T v01 = tap_value(t.x0, t.y0 + 1, k), v11 = tap_value(t.x0 + 1, t.y0 + 1, k);
        gx += up * ((T(1) - t.ay) * (v10 - v00) + t.ay * (v11 - v01));
        gy += up * ((T(1) - t.ax) * (v01 - v00) + t.ax * (v11 - v10));
      }
      g.d_field.sx(y, x) = gx;
      g.d_field.sy(y, x) = gy;
    }
  });

  // Scatter into the source image; sequential so the summation order is fixed.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Taps<T> t = bilinear_taps(field.sx(y, x), field.sy(y, x));
      if (!t.usable) continue;
      const int xs[2] = {t.x0, t.x0 + 1};
      const int ys[2] = {t.y0, t.y0 + 1};
      const T wx[2] = {T(1) - t.ax, t.ax};
      const T wy[2] = {T(1) - t.ay, t.ay};
      const T* up = &d_out.at(y, x, 0);
      for (int j = 0; j < 2; ++j)
        for (int i = 0; i < 2; ++i) {
          if (!inside(xs[i], ys[j], iw, ih)) continue;
          const T wt = wx[i] * wy[j];
          T* dst = &g.d_image.at(ys[j], xs[i], 0);
          for (int k = 0; k < c; ++k) dst[k] += wt * up[k];
        }
    }
  return g;
}

template <typename T>
WarpField<T> compose_warp(const WarpField<T>& global, const WarpField<T>& local, T alpha) {
  if (!global.same_grid(local)) throw DomainError("compose_warp: dimension mismatch");
  WarpField<T> out = global;
  auto& dst = out.coords().storage();
  const auto& src = local.coords().storage();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * src[i];
  return out;
}

template <typename T>
ComposeGrad<T> compose_warp_backward(const WarpField<T>& d_out, T alpha) {
  ComposeGrad<T> g{d_out, d_out};
  for (auto& v : g.d_local.coords().storage()) v *= alpha;
  return g;
}

template <typename T>
double BlendWeights<T>::max_partition_error(const std::vector<Mask>& validity) const {
  const BlendWeights<T> eff = renormalize_weights(*this, validity);
  double worst = 0.0;
  const int h = maps.front().height(), w = maps.front().width();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool any = false;
      double sum = 0.0;
      for (std::size_t n = 0; n < maps.size(); ++n) {
        any = any || validity[n].at(y, x);
        sum += eff.maps[n].at(y, x);
      }
      if (any) worst = std::max(worst, std::abs(sum - 1.0));
    }
  return worst;
}

template <typename T>
BlendWeights<T> softmax_weights(const std::vector<Image<T>>& logits) {
  if (logits.empty()) throw DomainError("softmax_weights: no inputs");
  for (const auto& l : logits) {
    check_same(l, logits.front(), "softmax_weights");
    if (l.channels() != 1) throw DomainError("softmax_weights: logits must be single-channel");
  }
  const std::size_t n_maps = logits.size();
  BlendWeights<T> out;
  out.maps.assign(n_maps, Image<T>(logits[0].height(), logits[0].width(), 1));
  const std::size_t pixels = logits[0].size();
  for (std::size_t p = 0; p < pixels; ++p) {
    T peak = logits[0].storage()[p];
    for (std::size_t n = 1; n < n_maps; ++n) peak = std::max(peak, logits[n].storage()[p]);
    T sum = 0;
    for (std::size_t n = 0; n < n_maps; ++n) {
      const T e = std::exp(logits[n].storage()[p] - peak);
      out.maps[n].storage()[p] = e;
      sum += e;
    }
    for (std::size_t n = 0; n < n_maps; ++n) out.maps[n].storage()[p] /= sum;
  }
  return out;
}

template <typename T>
std::vector<Image<T>> softmax_weights_backward(const BlendWeights<T>& weights,
                                               const std::vector<Image<T>>& d_weights) {
  const std::size_t n_maps = weights.maps.size();
  if (d_weights.size() != n_maps) throw DomainError("softmax_weights_backward: count mismatch");
  std::vector<Image<T>> d_logits(n_maps, Image<T>(weights.maps[0].height(),
                                                  weights.maps[0].width(), 1));
  const std::size_t pixels = weights.maps[0].size();
  for (std::size_t p = 0; p < pixels; ++p) {
    T dot = 0;
    for (std::size_t n = 0; n < n_maps; ++n)
      dot += weights.maps[n].storage()[p] * d_weights[n].storage()[p];
    for (std::size_t n = 0; n < n_maps; ++n)
      d_logits[n].storage()[p] =
          weights.maps[n].storage()[p] * (d_weights[n].storage()[p] - dot);
  }
  return d_logits;
}

template <typename T>
BlendWeights<T> renormalize_weights(const BlendWeights<T>& weights,
                                    const std::vector<Mask>& validity) {
  const std::size_t n_maps = weights.maps.size();
  if (validity.size() != n_maps) throw DomainError("renormalize_weights: count mismatch");
  BlendWeights<T> out = weights;
  const std::size_t pixels = weights.maps[0].size();
  for (std::size_t p = 0; p < pixels; ++p) {
    T sum = 0;
    for (std::size_t n = 0; n < n_maps; ++n)
      if (validity[n][p]) sum += weights.maps[n].storage()[p];
    for (std::size_t n = 0; n < n_maps; ++n)
      out.maps[n].storage()[p] =
          (validity[n][p] && sum > T(0)) ? weights.maps[n].storage()[p] / sum : T(0);
  }
  return out;
}

template <typename T>
Image<T> weighted_sum(const std::vector<Image<T>>& images, const BlendWeights<T>& weights,
                      const std::vector<Mask>& validity) {
  const std::size_t n_maps = images.size();
  if (n_maps == 0 || weights.maps.size() != n_maps || validity.size() != n_maps)
    throw DomainError("weighted_sum: input counts differ");
  const int h = images[0].height(), w = images[0].width(), c = images[0].channels();
  for (std::size_t n = 0; n < n_maps; ++n) {
    check_same(images[n], images[0], "weighted_sum");
    if (!weights.maps[n].same_grid(h, w) || weights.maps[n].channels() != 1 ||
        !validity[n].same_grid(h, w))
      throw DomainError("weighted_sum: dimension mismatch");
  }
  Image<T> out(h, w, c);
  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      T sum = 0;
      for (std::size_t n = 0; n < n_maps; ++n)
        if (validity[n].at(y, x)) sum += weights.maps[n].at(y, x);
      if (!(sum > T(0))) continue;
      T* dst = &out.at(y, x, 0);
      for (std::size_t n = 0; n < n_maps; ++n) {
        if (!validity[n].at(y, x)) continue;
        const T wn = weights.maps[n].at(y, x) / sum;
        const T* src = &images[n].at(y, x, 0);
        for (int k = 0; k < c; ++k) dst[k] += wn * src[k];
      }
    }
  });
  return out;
}

template <typename T>
WeightedSumGrad<T> weighted_sum_backward(const std::vector<Image<T>>& images,
                                         const BlendWeights<T>& weights,
                                         const std::vector<Mask>& validity,
                                         const Image<T>& output, const Image<T>& d_out) {
  const std::size_t n_maps = images.size();
  const int h = output.height(), w = output.width(), c = output.channels();
  check_same(d_out, output, "weighted_sum_backward");
  WeightedSumGrad<T> g;
  g.d_images.assign(n_maps, Image<T>(h, w, c));
  g.d_weights.assign(n_maps, Image<T>(h, w, 1));
  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      T sum = 0;
      for (std::size_t n = 0; n < n_maps; ++n)
        if (validity[n].at(y, x)) sum += weights.maps[n].at(y, x);
      if (!(sum > T(0))) continue;
      const T* up = &d_out.at(y, x, 0);
      const T* p = &output.at(y, x, 0);
      for (std::size_t n = 0; n < n_maps; ++n) {
        if (!validity[n].at(y, x)) continue;
        const T wn = weights.maps[n].at(y, x) / sum;
        const T* src = &images[n].at(y, x, 0);
        T* di = &g.d_images[n].at(y, x, 0);
        T dw = 0;
        for (int k = 0; k < c; ++k) {
          di[k] = wn * up[k];
          dw += up[k] * (src[k] - p[k]);
        }
        g.d_weights[n].at(y, x) = dw / sum;
      }
    }
  });
  return g;
}

template <typename T>
Image<T> upsample_bilinear(const Image<T>& coarse, int height, int width) {
  const AxisTaps tx = axis_taps(width, coarse.width());
  const AxisTaps ty = axis_taps(height, coarse.height());
  const int c = coarse.channels();
  Image<T> out(height, width, c);
  parallel_rows(height, [&](int y) {
    const T ay = static_cast<T>(ty.a[y]);
    for (int x = 0; x < width; ++x) {
      const T ax = static_cast<T>(tx.a[x]);
      for (int k = 0; k < c; ++k) {
        const T top = (T(1) - ax) * coarse.at(ty.i0[y], tx.i0[x], k) +
                      ax * coarse.at(ty.i0[y], tx.i1[x], k);
        const T bottom = (T(1) - ax) * coarse.at(ty.i1[y], tx.i0[x], k) +
                         ax * coarse.at(ty.i1[y], tx.i1[x], k);
        out.at(y, x, k) = (T(1) - ay) * top + ay * bottom;
      }
    }
  });
  return out;
}

template <typename T>
Image<T> upsample_bilinear_adjoint(const Image<T>& d_full, int coarse_height, int coarse_width) {
  const AxisTaps tx = axis_taps(d_full.width(), coarse_width);
  const AxisTaps ty = axis_taps(d_full.height(), coarse_height);
  const int c = d_full.channels();
  Image<T> out(coarse_height, coarse_width, c);
  for (int y = 0; y < d_full.height(); ++y) {
    const T ay = static_cast<T>(ty.a[y]);
    for (int x = 0; x < d_full.width(); ++x) {
      const T ax = static_cast<T>(tx.a[x]);
      for (int k = 0; k < c; ++k) {
        const T g = d_full.at(y, x, k);
        out.at(ty.i0[y], tx.i0[x], k) += (T(1) - ay) * (T(1) - ax) * g;
        out.at(ty.i0[y], tx.i1[x], k) += (T(1) - ay) * ax * g;
        out.at(ty.i1[y], tx.i0[x], k) += ay * (T(1) - ax) * g;
        out.at(ty.i1[y], tx.i1[x], k) += ay * ax * g;
      }
    }
  }
  return out;
}

#define PANOSTITCH_INSTANTIATE(T)                                                             \
  template WarpResult<T> warp<T>(const Image<T>&, const WarpField<T>&);                       \
  template WarpGrad<T> warp_backward<T>(const Image<T>&, const WarpField<T>&, const Image<T>&); \
  template WarpField<T> compose_warp<T>(const WarpField<T>&, const WarpField<T>&, T);         \
  template ComposeGrad<T> compose_warp_backward<T>(const WarpField<T>&, T);                   \
  template struct BlendWeights<T>;                                                            \
  template BlendWeights<T> softmax_weights<T>(const std::vector<Image<T>>&);                  \
  template std::vector<Image<T>> softmax_weights_backward<T>(const BlendWeights<T>&,          \
                                                             const std::vector<Image<T>>&);   \
  template BlendWeights<T> renormalize_weights<T>(const BlendWeights<T>&,                     \
                                                  const std::vector<Mask>&);                  \
  template Image<T> weighted_sum<T>(const std::vector<Image<T>>&, const BlendWeights<T>&,     \
                                    const std::vector<Mask>&);                                \
  template WeightedSumGrad<T> weighted_sum_backward<T>(                                       \
      const std::vector<Image<T>>&, const BlendWeights<T>&, const std::vector<Mask>&,         \
      const Image<T>&, const Image<T>&);                                                      \
  template Image<T> upsample_bilinear<T>(const Image<T>&, int, int);                          \
  template Image<T> upsample_bilinear_adjoint<T>(const Image<T>&, int, int);

PANOSTITCH_INSTANTIATE(float)
PANOSTITCH_INSTANTIATE(double)

#undef PANOSTITCH_INSTANTIATE

}  // namespace panostitch
