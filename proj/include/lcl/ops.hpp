#pragma once

#include <functional>

#include "lcl/tensor.hpp"

namespace lcl {

// Forward primitives. Shapes follow the usual conventions:
//   conv2d: input [C_in,H,W], kernel [C_out,C_in,k,k], zero padding.
//   maxpool2: 2x2 window, stride 2, odd trailing row/column truncated.
//   affine: x [n], W [m,n], b [m] -> [m].
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad);
Tensor relu(const Tensor& x);
Tensor maxpool2(const Tensor& x);
Tensor global_avg_pool(const Tensor& x);            // [C,H,W] -> [C]
Tensor affine(const Tensor& x, const Tensor& W, const Tensor& b);
Tensor l2_normalize(const Tensor& v);               // throws on zero vector

// Central finite differences of a scalar function, step h per element.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h);

double max_rel_error(const Tensor& a, const Tensor& b, double floor = 1e-8);

}  // namespace lcl
