#include "poselift/ops.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>

namespace poselift::gradcore {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

using Buffer = std::shared_ptr<std::vector<double>>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeMismatch(std::string(op) + ": " + shape_str(a.shape()) +
                        " vs " + shape_str(b.shape()));
}

// im2col for one image: x[C,H,W] -> col[C*kh*kw, Ho*Wo].
void im2col(const double* x, std::size_t C, std::size_t H, std::size_t W,
            std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad,
            std::size_t Ho, std::size_t Wo, double* col) {
  const std::size_t P = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        double* row = col + ((c * kh + i) * kw + j) * P;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + i) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) {
            std::memset(row + oy * Wo, 0, Wo * sizeof(double));
            continue;
          }
          const double* xrow = x + (c * H + iy) * W;
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + j) -
                                      static_cast<std::ptrdiff_t>(pad);
            row[oy * Wo + ox] =
                (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) ? 0.0 : xrow[ix];
          }
        }
      }
    }
  }
}

// Scatter-add of a column buffer back into one image's gradient.
void col2im_add(const double* col, std::size_t C, std::size_t H, std::size_t W,
                std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad,
                std::size_t Ho, std::size_t Wo, double* gx) {
  const std::size_t P = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        const double* row = col + ((c * kh + i) * kw + j) * P;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + i) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          double* grow = gx + (c * H + iy) * W;
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + j) -
                                      static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
            grow[ix] += row[oy * Wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor relu(const Tensor& x) {
  const std::size_t n = x.size();
  Buffer y = pool::acquire(n);
  const double* xp = x.values().data();
  double* yp = y->data();
  for (std::size_t i = 0; i < n; ++i) yp[i] = xp[i] > 0.0 ? xp[i] : 0.0;

  auto xd = x.storage();
  auto xn = x.node();
  return make_op(x.shape(), std::move(y), {&x},
                 [xd, xn](const std::vector<double>& g, GradientMap& gm) {
                   if (!xn) return;
                   auto& gx = gm.get_or_zero(xn->id, xd->size());
                   const double* xp = xd->data();
                   for (std::size_t i = 0; i < gx.size(); ++i)
                     if (xp[i] > 0.0) gx[i] += g[i];
                 });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1)
    throw ShapeMismatch("linear expects x:[B,I], w:[I,O], b:[O]");
  const std::size_t B = x.dim(0), I = x.dim(1), O = w.dim(1);
  if (w.dim(0) != I)
    throw ShapeMismatch("linear inner extents differ: x " + shape_str(x.shape()) +
                        ", w " + shape_str(w.shape()));
  if (b.dim(0) != O)
    throw ShapeMismatch("linear bias length " + std::to_string(b.dim(0)) +
                        " for output width " + std::to_string(O));

  Buffer y = pool::acquire(B * O);
  {
    ConstMap xm(x.values().data(), B, I);
    ConstMap wm(w.values().data(), I, O);
    MutMap ym(y->data(), B, O);
    ym.noalias() = xm * wm;
    const double* bv = b.values().data();
    double* yp = y->data();
    for (std::size_t r = 0; r < B; ++r)
      for (std::size_t c = 0; c < O; ++c) yp[r * O + c] += bv[c];
  }

  auto xd = x.storage(); auto wd = w.storage();
  auto xn = x.node(); auto wn = w.node(); auto bn = b.node();
  return make_op({B, O}, std::move(y), {&x, &w, &b},
                 [=](const std::vector<double>& g, GradientMap& gm) {
                   ConstMap gy(g.data(), B, O);
                   if (xn) {
                     MutMap gx(gm.get_or_zero(xn->id, B * I).data(), B, I);
                     gx.noalias() += gy * ConstMap(wd->data(), I, O).transpose();
                   }
                   if (wn) {
                     MutMap gw(gm.get_or_zero(wn->id, I * O).data(), I, O);
                     gw.noalias() += ConstMap(xd->data(), B, I).transpose() * gy;
                   }
                   if (bn) {
                     auto& gb = gm.get_or_zero(bn->id, O);
                     for (std::size_t r = 0; r < B; ++r)
                       for (std::size_t c = 0; c < O; ++c) gb[c] += g[r * O + c];
                   }
                 });
}

Tensor conv2d(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad) {
  if (x.rank() != 4 || k.rank() != 4)
    throw ShapeMismatch("conv2d expects x:[B,C,H,W], k:[F,C,kh,kw]");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t F = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  if (k.dim(1) != C)
    throw ShapeMismatch("conv2d channels disagree: input has " + std::to_string(C) +
                        ", kernel expects " + std::to_string(k.dim(1)));
  if (stride == 0) throw InvalidConfig("conv2d stride must be positive");
  if (kh > H + 2 * pad || kw > W + 2 * pad)
    throw ShapeMismatch("conv2d kernel larger than padded input");

  const std::size_t Ho = (H + 2 * pad - kh) / stride + 1;
  const std::size_t Wo = (W + 2 * pad - kw) / stride + 1;
  const std::size_t P = Ho * Wo, CKK = C * kh * kw;

  Buffer y = pool::acquire(B * F * P);
  {
    Buffer col = pool::acquire(CKK * P);
    ConstMap km(k.values().data(), F, CKK);
    for (std::size_t b = 0; b < B; ++b) {
      im2col(x.values().data() + b * C * H * W, C, H, W, kh, kw, stride, pad,
             Ho, Wo, col->data());
      MutMap ym(y->data() + b * F * P, F, P);
      ym.noalias() = km * ConstMap(col->data(), CKK, P);
    }
  }

  auto xd = x.storage(); auto kd = k.storage();
  auto xn = x.node(); auto kn = k.node();
  return make_op({B, F, Ho, Wo}, std::move(y), {&x, &k},
                 [=](const std::vector<double>& g, GradientMap& gm) {
                   Buffer col = pool::acquire(CKK * P);
                   ConstMap km(kd->data(), F, CKK);
                   double* gxp = xn ? gm.get_or_zero(xn->id, B * C * H * W).data() : nullptr;
                   double* gkp = kn ? gm.get_or_zero(kn->id, F * CKK).data() : nullptr;
                   for (std::size_t b = 0; b < B; ++b) {
                     ConstMap gy(g.data() + b * F * P, F, P);
                     if (gkp) {
                       im2col(xd->data() + b * C * H * W, C, H, W, kh, kw, stride,
                              pad, Ho, Wo, col->data());
                       MutMap gk(gkp, F, CKK);
                       gk.noalias() += gy * ConstMap(col->data(), CKK, P).transpose();
                     }
                     if (gxp) {
                       MutMap gcol(col->data(), CKK, P);
                       gcol.noalias() = km.transpose() * gy;
                       col2im_add(col->data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                                  gxp + b * C * H * W);
                     }
                   }
                 });
}

Tensor bias_channels(const Tensor& x, const Tensor& b) {
  if (x.rank() != 4 || b.rank() != 1 || b.dim(0) != x.dim(1))
    throw ShapeMismatch("bias_channels expects x:[B,C,H,W], b:[C]");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);

  Buffer y = pool::acquire(x.size());
  const double* xp = x.values().data();
  const double* bv = b.values().data();
  double* yp = y->data();
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const double bias = bv[c];
      const std::size_t base = (n * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) yp[base + i] = xp[base + i] + bias;
    }

  auto xn = x.node(); auto bn = b.node();
  return make_op(x.shape(), std::move(y), {&x, &b},
                 [=](const std::vector<double>& g, GradientMap& gm) {
                   if (xn) {
                     auto& gx = gm.get_or_zero(xn->id, g.size());
                     for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                   }
                   if (bn) {
                     auto& gb = gm.get_or_zero(bn->id, C);
                     for (std::size_t n = 0; n < B; ++n)
                       for (std::size_t c = 0; c < C; ++c) {
                         const double* p = g.data() + (n * C + c) * HW;
                         double s = 0;
                         for (std::size_t i = 0; i < HW; ++i) s += p[i];
                         gb[c] += s;
                       }
                   }
                 });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  const std::size_t n = a.size();
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = av[i] - bv[i];
    acc += d * d;
  }
  auto ad = a.storage(); auto bd = b.storage();
  auto an = a.node(); auto bn = b.node();
  return make_op({1}, std::vector<double>{acc / static_cast<double>(n)}, {&a, &b},
                 [=](const std::vector<double>& g, GradientMap& gm) {
                   const double c = 2.0 * g[0] / static_cast<double>(n);
                   const double* ap = ad->data();
                   const double* bp = bd->data();
                   if (an) {
                     auto& ga = gm.get_or_zero(an->id, n);
                     for (std::size_t i = 0; i < n; ++i) ga[i] += c * (ap[i] - bp[i]);
                   }
                   if (bn) {
                     auto& gb = gm.get_or_zero(bn->id, n);
                     for (std::size_t i = 0; i < n; ++i) gb[i] -= c * (ap[i] - bp[i]);
                   }
                 });
}

namespace {
Tensor ewise2(const Tensor& a, const Tensor& b, const char* name,
              double (*fwd)(double, double),
              void (*bwd)(double av, double bv, double g, double& ga, double& gb)) {
  require_same_shape(a, b, name);
  const std::size_t n = a.size();
  Buffer y = pool::acquire(n);
  const double* ap = a.values().data();
  const double* bp = b.values().data();
  double* yp = y->data();
  for (std::size_t i = 0; i < n; ++i) yp[i] = fwd(ap[i], bp[i]);
  auto ad = a.storage(); auto bd = b.storage();
  auto an = a.node(); auto bn = b.node();
  return make_op(a.shape(), std::move(y), {&a, &b},
                 [=](const std::vector<double>& g, GradientMap& gm) {
                   std::vector<double>* ga = an ? &gm.get_or_zero(an->id, n) : nullptr;
                   std::vector<double>* gb = bn ? &gm.get_or_zero(bn->id, n) : nullptr;
                   double dummy = 0;
                   const double* ap = ad->data();
                   const double* bp = bd->data();
                   for (std::size_t i = 0; i < n; ++i) {
                     double& ra = ga ? (*ga)[i] : dummy;
                     double& rb = gb ? (*gb)[i] : dummy;
                     bwd(ap[i], bp[i], g[i], ra, rb);
                   }
                 });
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return ewise2(a, b, "add", [](double x, double y) { return x + y; },
                [](double, double, double g, double& ga, double& gb) {
                  ga += g;
                  gb += g;
                });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return ewise2(a, b, "sub", [](double x, double y) { return x - y; },
                [](double, double, double g, double& ga, double& gb) {
                  ga += g;
                  gb -= g;
                });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return ewise2(a, b, "mul", [](double x, double y) { return x * y; },
                [](double av, double bv, double g, double& ga, double& gb) {
                  ga += g * bv;
                  gb += g * av;
                });
}

Tensor scale(const Tensor& x, double c) {
  const std::size_t n = x.size();
  Buffer y = pool::acquire(n);
  const double* xp = x.values().data();
  double* yp = y->data();
  for (std::size_t i = 0; i < n; ++i) yp[i] = c * xp[i];
  auto xn = x.node();
  return make_op(x.shape(), std::move(y), {&x},
                 [=](const std::vector<double>& g, GradientMap& gm) {
                   if (!xn) return;
                   auto& gx = gm.get_or_zero(xn->id, g.size());
                   for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
                 });
}

Tensor sum(const Tensor& x) {
  double acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
  auto xn = x.node();
  const std::size_t n = x.size();
  return make_op({1}, std::vector<double>{acc}, {&x},
                 [=](const std::vector<double>& g, GradientMap& gm) {
                   if (!xn) return;
                   auto& gx = gm.get_or_zero(xn->id, n);
                   for (std::size_t i = 0; i < n; ++i) gx[i] += g[0];
                 });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeMismatch("reshape to " + shape_str(shape) + " from " +
                        shape_str(x.shape()));
  auto xn = x.node();
  // Shares the storage; only the shape changes.
  Tensor t = Tensor::constant_view(std::move(shape), x.storage());
  if (!xn) return t;
  return make_op(t.shape(), x.storage(), {&x},
                 [=](const std::vector<double>& g, GradientMap& gm) {
                   auto& gx = gm.get_or_zero(xn->id, g.size());
                   for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                 });
}

Tensor slice_channels(const Tensor& x, std::size_t c0, std::size_t c1) {
  if (x.rank() != 4) throw ShapeMismatch("slice_channels expects [B,C,H,W]");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (c0 >= c1 || c1 > C)
    throw ShapeMismatch("channel range [" + std::to_string(c0) + "," +
                        std::to_string(c1) + ") of " + std::to_string(C));
  const std::size_t Cs = c1 - c0;
  Buffer y = pool::acquire(B * Cs * HW);
  for (std::size_t b = 0; b < B; ++b)
    std::memcpy(y->data() + b * Cs * HW, x.values().data() + (b * C + c0) * HW,
                Cs * HW * sizeof(double));
  auto xn = x.node();
  const std::size_t n = x.size();
  return make_op({B, Cs, x.dim(2), x.dim(3)}, std::move(y), {&x},
                 [=](const std::vector<double>& g, GradientMap& gm) {
                   if (!xn) return;
                   auto& gx = gm.get_or_zero(xn->id, n);
                   for (std::size_t b = 0; b < B; ++b) {
                     double* dst = gx.data() + (b * C + c0) * HW;
                     const double* src = g.data() + b * Cs * HW;
                     for (std::size_t i = 0; i < Cs * HW; ++i) dst[i] += src[i];
                   }
                 });
}

Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1) {
  if (x.rank() < 1) throw ShapeMismatch("slice_rows needs rank >= 1");
  const std::size_t R = x.dim(0);
  if (r0 >= r1 || r1 > R)
    throw ShapeMismatch("row range [" + std::to_string(r0) + "," +
                        std::to_string(r1) + ") of " + std::to_string(R));
  const std::size_t rowlen = x.size() / R;
  Shape out_shape = x.shape();
  out_shape[0] = r1 - r0;
  Buffer y = pool::acquire((r1 - r0) * rowlen);
  std::memcpy(y->data(), x.values().data() + r0 * rowlen,
              (r1 - r0) * rowlen * sizeof(double));
  auto xn = x.node();
  const std::size_t n = x.size();
  return make_op(std::move(out_shape), std::move(y), {&x},
                 [=](const std::vector<double>& g, GradientMap& gm) {
                   if (!xn) return;
                   auto& gx = gm.get_or_zero(xn->id, n);
                   for (std::size_t i = 0; i < g.size(); ++i)
                     gx[r0 * rowlen + i] += g[i];
                 });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw ShapeMismatch("concat_channels: " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  const std::size_t B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1),
                    HW = a.dim(2) * a.dim(3);
  Buffer y = pool::acquire(B * (Ca + Cb) * HW);
  for (std::size_t n = 0; n < B; ++n) {
    std::memcpy(y->data() + n * (Ca + Cb) * HW, a.values().data() + n * Ca * HW,
                Ca * HW * sizeof(double));
    std::memcpy(y->data() + (n * (Ca + Cb) + Ca) * HW,
                b.values().data() + n * Cb * HW, Cb * HW * sizeof(double));
  }
  auto an = a.node(); auto bn = b.node();
  const std::size_t na = a.size(), nb = b.size();
  return make_op({B, Ca + Cb, a.dim(2), a.dim(3)}, std::move(y), {&a, &b},
                 [=](const std::vector<double>& g, GradientMap& gm) {
                   for (std::size_t n = 0; n < B; ++n) {
                     if (an) {
                       auto& ga = gm.get_or_zero(an->id, na);
                       const double* src = g.data() + n * (Ca + Cb) * HW;
                       double* dst = ga.data() + n * Ca * HW;
                       for (std::size_t i = 0; i < Ca * HW; ++i) dst[i] += src[i];
                     }
                     if (bn) {
                       auto& gb = gm.get_or_zero(bn->id, nb);
                       const double* src = g.data() + (n * (Ca + Cb) + Ca) * HW;
                       double* dst = gb.data() + n * Cb * HW;
                       for (std::size_t i = 0; i < Cb * HW; ++i) dst[i] += src[i];
                     }
                   }
                 });
}

Tensor project_points(const Tensor& p3d, const Tensor& cam) {
  if (p3d.rank() != 2 || p3d.dim(1) % 3 != 0)
    throw ShapeMismatch("project_points expects p3d:[B,3K]");
  if (cam.rank() != 2 || cam.dim(1) != 4 || cam.dim(0) != p3d.dim(0))
    throw ShapeMismatch("project_points expects cam:[B,4]");
  const std::size_t B = p3d.dim(0), K = p3d.dim(1) / 3;

  Buffer y = pool::acquire(B * 2 * K);
  {
    const double* pv = p3d.values().data();
    const double* cv = cam.values().data();
    double* yp = y->data();
    for (std::size_t b = 0; b < B; ++b) {
      const double ax = cv[b * 4 + 0], ay = cv[b * 4 + 1];
      const double cx = cv[b * 4 + 2], cy = cv[b * 4 + 3];
      for (std::size_t k = 0; k < K; ++k) {
        yp[(b * K + k) * 2 + 0] = ax * pv[(b * K + k) * 3 + 0] + cx;
        yp[(b * K + k) * 2 + 1] = ay * pv[(b * K + k) * 3 + 1] + cy;
      }
    }
  }

  auto pd = p3d.storage(); auto cd = cam.storage();
  auto pn = p3d.node(); auto cn = cam.node();
  return make_op({B, 2 * K}, std::move(y), {&p3d, &cam},
                 [=](const std::vector<double>& g, GradientMap& gm) {
                   std::vector<double>* gp = pn ? &gm.get_or_zero(pn->id, B * 3 * K) : nullptr;
                   std::vector<double>* gc = cn ? &gm.get_or_zero(cn->id, B * 4) : nullptr;
                   for (std::size_t b = 0; b < B; ++b) {
                     const double ax = (*cd)[b * 4 + 0], ay = (*cd)[b * 4 + 1];
                     for (std::size_t k = 0; k < K; ++k) {
                       const double gx = g[(b * K + k) * 2 + 0];
                       const double gy = g[(b * K + k) * 2 + 1];
                       const double px = (*pd)[(b * K + k) * 3 + 0];
                       const double py = (*pd)[(b * K + k) * 3 + 1];
                       if (gp) {
                         (*gp)[(b * K + k) * 3 + 0] += gx * ax;
                         (*gp)[(b * K + k) * 3 + 1] += gy * ay;
                       }
                       if (gc) {
                         (*gc)[b * 4 + 0] += gx * px;
                         (*gc)[b * 4 + 1] += gy * py;
                         (*gc)[b * 4 + 2] += gx;
                         (*gc)[b * 4 + 3] += gy;
                       }
                     }
                   }
                 });
}

Tensor bone_deltas(const Tensor& p3d, const std::vector<std::size_t>& parents,
                   std::size_t root) {
  if (p3d.rank() != 2 || p3d.dim(1) % 3 != 0)
    throw ShapeMismatch("bone_deltas expects p3d:[B,3K]");
  const std::size_t B = p3d.dim(0), K = p3d.dim(1) / 3;
  if (parents.size() != K)
    throw ShapeMismatch("bone_deltas parent table has " +
                        std::to_string(parents.size()) + " entries for K=" +
                        std::to_string(K));
  const std::size_t M = K - 1;

  std::vector<std::size_t> joints;  // non-root joints, ascending
  joints.reserve(M);
  for (std::size_t j = 0; j < K; ++j)
    if (j != root) joints.push_back(j);

  Buffer y = pool::acquire(B * 3 * M);
  {
    const double* pv = p3d.values().data();
    double* yp = y->data();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t m = 0; m < M; ++m) {
        const std::size_t j = joints[m], p = parents[j];
        for (std::size_t d = 0; d < 3; ++d)
          yp[(b * M + m) * 3 + d] =
              pv[(b * K + j) * 3 + d] - pv[(b * K + p) * 3 + d];
      }
  }

  auto pn = p3d.node();
  auto parents_copy = parents;
  return make_op({B, 3 * M}, std::move(y), {&p3d},
                 [=, joints = std::move(joints)](const std::vector<double>& g,
                                                 GradientMap& gm) {
                   if (!pn) return;
                   auto& gp = gm.get_or_zero(pn->id, B * 3 * K);
                   for (std::size_t b = 0; b < B; ++b)
                     for (std::size_t m = 0; m < M; ++m) {
                       const std::size_t j = joints[m], p = parents_copy[j];
                       for (std::size_t d = 0; d < 3; ++d) {
                         const double gv = g[(b * M + m) * 3 + d];
                         gp[(b * K + j) * 3 + d] += gv;
                         gp[(b * K + p) * 3 + d] -= gv;
                       }
                     }
                 });
}

Tensor norms3(const Tensor& v) {
  if (v.rank() != 2 || v.dim(1) % 3 != 0)
    throw ShapeMismatch("norms3 expects [B,3M]");
  const std::size_t B = v.dim(0), M = v.dim(1) / 3;
  Buffer y = pool::acquire(B * M);
  {
    const double* vv = v.values().data();
    double* yp = y->data();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t m = 0; m < M; ++m) {
        const double* p = vv + (b * M + m) * 3;
        yp[b * M + m] = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
      }
  }
  auto vd = v.storage();
  auto vn = v.node();
  return make_op({B, M}, std::move(y), {&v},
                 [=](const std::vector<double>& g, GradientMap& gm) {
                   if (!vn) return;
                   auto& gv = gm.get_or_zero(vn->id, B * 3 * M);
                   for (std::size_t b = 0; b < B; ++b)
                     for (std::size_t m = 0; m < M; ++m) {
                       const double* p = (*vd).data() + (b * M + m) * 3;
                       const double L =
                           std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
                       if (L < 1e-12) continue;  // subgradient 0 at the kink
                       const double c = g[b * M + m] / L;
                       gv[(b * M + m) * 3 + 0] += c * p[0];
                       gv[(b * M + m) * 3 + 1] += c * p[1];
                       gv[(b * M + m) * 3 + 2] += c * p[2];
                     }
                 });
}

}  // namespace poselift::gradcore
