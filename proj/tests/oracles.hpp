#pragma once

// Straight-line reference implementations used as test oracles. These stay
// independent of the library's compute paths: plain loops, no Eigen, no
// shared helpers.

#include <cmath>
#include <cstddef>
#include <vector>

#include "poselift/rng.hpp"

namespace oracles {

// y[B,O] = x[B,I] . w[I,O] + b[O], triple loop.
inline std::vector<double> matmul_bias(const std::vector<double>& x,
                                       const std::vector<double>& w,
                                       const std::vector<double>& b,
                                       std::size_t B, std::size_t I, std::size_t O) {
  std::vector<double> y(B * O, 0.0);
  for (std::size_t r = 0; r < B; ++r)
    for (std::size_t c = 0; c < O; ++c) {
      double acc = b[c];
      for (std::size_t k = 0; k < I; ++k) acc += x[r * I + k] * w[k * O + c];
      y[r * O + c] = acc;
    }
  return y;
}

// Direct 6-nested-loop cross-correlation with zero padding.
inline std::vector<double> conv2d_direct(const std::vector<double>& x,
                                         const std::vector<double>& k,
                                         std::size_t B, std::size_t C,
                                         std::size_t H, std::size_t W,
                                         std::size_t F, std::size_t kh,
                                         std::size_t kw, std::size_t stride,
                                         std::size_t pad) {
  const std::size_t Ho = (H + 2 * pad - kh) / stride + 1;
  const std::size_t Wo = (W + 2 * pad - kw) / stride + 1;
  std::vector<double> y(B * F * Ho * Wo, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox) {
          double acc = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) {
                const std::ptrdiff_t iy =
                    static_cast<std::ptrdiff_t>(oy * stride + i) -
                    static_cast<std::ptrdiff_t>(pad);
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox * stride + j) -
                    static_cast<std::ptrdiff_t>(pad);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H) || ix < 0 ||
                    ix >= static_cast<std::ptrdiff_t>(W))
                  continue;
                acc += x[((b * C + c) * H + iy) * W + ix] *
                       k[((f * C + c) * kh + i) * kw + j];
              }
          y[((b * F + f) * Ho + oy) * Wo + ox] = acc;
        }
  return y;
}

inline double mse_loop(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

// One Adadelta step on a scalar, evaluated exactly as written in the
// recurrence. Returns the new parameter and mutates the accumulators.
inline double adadelta_scalar_step(double p, double g, double& eg, double& eu,
                                   double rho, double eps, double lr) {
  eg = rho * eg + (1.0 - rho) * g * g;
  const double d = -std::sqrt(eu + eps) / std::sqrt(eg + eps) * g;
  eu = rho * eu + (1.0 - rho) * d * d;
  return p + lr * d;
}

inline std::vector<double> random_vector(poselift::Rng& rng, std::size_t n,
                                         double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace oracles
