#pragma once

#include "poselift/tensor.hpp"

namespace poselift::gradcore {

/// Elementwise max(0, x). Subgradient at 0 is 0.
Tensor relu(const Tensor& x);

/// y = x.w + b with x:[B,I], w:[I,O], b:[O].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Cross-correlation with zero padding. x:[B,C,H,W], k:[F,C,kh,kw].
/// H' = floor((H + 2 pad - kh) / stride) + 1.
Tensor conv2d(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad);

/// Adds b[c] to every pixel of channel c. x:[B,C,H,W], b:[C].
Tensor bias_channels(const Tensor& x, const Tensor& b);

/// Mean of squared elementwise differences (scalar).
Tensor mse(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor sum(const Tensor& x);

/// Same data, new shape (element count must match).
Tensor reshape(const Tensor& x, Shape shape);

/// Channel range [c0, c1) of a [B,C,H,W] tensor.
Tensor slice_channels(const Tensor& x, std::size_t c0, std::size_t c1);

/// Leading-dimension range [r0, r1); works for any rank >= 1.
Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1);

/// Concatenation along the channel axis of two [B,C,H,W] tensors.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Weak-perspective projection inside the graph. p3d:[B,3K] as
/// (x,y,z) triples, cam:[B,4] as (ax, ay, cx, cy); output [B,2K] of
/// (ax*x + cx, ay*y + cy) pairs. Differentiable in both inputs.
Tensor project_points(const Tensor& p3d, const Tensor& cam);

/// Parent-to-joint difference vectors for every non-root joint, in
/// ascending joint order. p3d:[B,3K] -> [B,3(K-1)].
Tensor bone_deltas(const Tensor& p3d, const std::vector<std::size_t>& parents,
                   std::size_t root);

/// Euclidean norms of consecutive 3-vectors: [B,3M] -> [B,M].
/// Gradient at a zero vector is 0.
Tensor norms3(const Tensor& v);

}  // namespace poselift::gradcore
