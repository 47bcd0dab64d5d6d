#pragma once

#include <cstddef>
#include <vector>

#include "mcsttm/tensor.hpp"

// Differentiable operations on Tensor. Every function records a backward
// rule when at least one input requires gradients and recording is enabled.
namespace mcsttm {

// a[..., m, k] x b[..., k, n] -> [..., m, n]; leading extents broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

enum class ElementwiseOp { kAdd, kSub, kMul };

// Numpy-style broadcasting on trailing dimensions.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b);
Tensor elementwise(ElementwiseOp op, const Tensor& a, double b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double f) { return scale(a, f); }
inline Tensor operator*(double f, const Tensor& a) { return scale(a, f); }

enum class Activation { kRelu, kSigmoid, kTanh };

Tensor activation(Activation kind, const Tensor& x);
inline Tensor relu(const Tensor& x) { return activation(Activation::kRelu, x); }
inline Tensor sigmoid(const Tensor& x) { return activation(Activation::kSigmoid, x); }
inline Tensor tanh(const Tensor& x) { return activation(Activation::kTanh, x); }

Tensor abs(const Tensor& x);

// Max-subtracted softmax over the last axis.
Tensor softmax_lastdim(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor transpose_last2(const Tensor& x);

// Rows of table[R, F] picked by index -> [indices.size(), F].
Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& indices);

// Per-node dense map of the trailing (time x feature) block:
// x[..., t_in, f_in] with kernel[t_in * f_in, t_out * f_out] -> [..., t_out, f_out].
Tensor temporal_conv(const Tensor& x, const Tensor& kernel, std::size_t t_out,
                     std::size_t f_out);

}  // namespace mcsttm
