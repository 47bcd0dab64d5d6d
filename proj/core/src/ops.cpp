#include "mcsttm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <utility>

#include <Eigen/Core>

#include "mcsttm/errors.hpp"

namespace mcsttm {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

constexpr double kFaultFactor = 1.5;

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Builds the output node; attaches inputs and the backward rule only when
// gradients are needed.
Tensor make_output(Shape shape, std::vector<double> data,
                   std::initializer_list<const Tensor*> inputs, const char* op,
                   std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  if (should_record(inputs)) {
    node->requires_grad = true;
    for (const auto* t : inputs) node->inputs.push_back(t->node());
    node->backward = std::move(backward);
  }
  return Tensor::from_node(std::move(node));
}

double fault(const char* op) { return backward_fault_active(op) ? kFaultFactor : 1.0; }

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

// C[m,n] += A[m,k] B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ki = static_cast<Eigen::Index>(k);
  const auto ni = static_cast<Eigen::Index>(n);
  MutMap(c, mi, ni).noalias() += ConstMap(a, mi, ki) * ConstMap(b, ki, ni);
}

// C[m,k] += G[m,n] B[k,n]^T
void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ki = static_cast<Eigen::Index>(k);
  const auto ni = static_cast<Eigen::Index>(n);
  MutMap(c, mi, ki).noalias() += ConstMap(g, mi, ni) * ConstMap(b, ki, ni).transpose();
}

// C[k,n] += A[m,k]^T G[m,n]
void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ki = static_cast<Eigen::Index>(k);
  const auto ni = static_cast<Eigen::Index>(n);
  MutMap(c, ki, ni).noalias() += ConstMap(a, mi, ki).transpose() * ConstMap(g, mi, ni);
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

// Broadcast result shape by the trailing-dimension rule, or nullopt-like
// failure signalled through the flag.
bool broadcast_shape(const Shape& a, const Shape& b, Shape& out) {
  const std::size_t r = std::max(a.size(), b.size());
  out.assign(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t ea = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t eb = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (ea != eb && ea != 1 && eb != 1) return false;
    out[i] = std::max(ea, eb);
  }
  return true;
}

// For every flat index of `out`, the flat offset into an input of shape `in`
// broadcast to `out`.
std::vector<std::size_t> broadcast_offsets(const Shape& in, const Shape& out) {
  const std::size_t r = out.size();
  const std::size_t pad = r - in.size();
  const auto in_strides = strides_of(in);
  std::vector<std::size_t> step(r, 0);
  for (std::size_t i = pad; i < r; ++i) {
    if (in[i - pad] != 1) step[i] = in_strides[i - pad];
  }
  const std::size_t n = shape_numel(out);
  std::vector<std::size_t> offsets(n);
  std::vector<std::size_t> counter(r, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    offsets[flat] = offset;
    for (std::size_t axis = r; axis-- > 0;) {
      if (++counter[axis] < out[axis]) {
        offset += step[axis];
        break;
      }
      offset -= step[axis] * (out[axis] - 1);
      counter[axis] = 0;
    }
  }
  return offsets;
}

void require_rank_at_least(const Tensor& t, std::size_t r, const char* op) {
  if (t.rank() < r) {
    throw DimensionError(std::string(op) + ": expected rank >= " + std::to_string(r) +
                         ", got shape " + shape_str(t.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank_at_least(a, 2, "matmul");
  require_rank_at_least(b, 2, "matmul");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as.back();
  const std::size_t n = bs.back();
  if (bs[bs.size() - 2] != k) {
    throw DimensionError("matmul: inner extents differ for " + shape_str(as) + " x " +
                         shape_str(bs));
  }
  const Shape a_lead(as.begin(), as.end() - 2);
  const Shape b_lead(bs.begin(), bs.end() - 2);
  Shape lead;
  if (!broadcast_shape(a_lead, b_lead, lead)) {
    throw DimensionError("matmul: batch extents not broadcastable for " + shape_str(as) +
                         " x " + shape_str(bs));
  }
  Shape out_shape = lead;
  out_shape.push_back(m);
  out_shape.push_back(n);

  const std::size_t batches = shape_numel(lead);
  std::vector<double> out(batches * m * n, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();

  // Common case: a plain right-hand matrix folds all leading axes into m.
  if (b_lead.empty() || shape_numel(b_lead) == 1) {
    if (shape_numel(a_lead) == batches) {
      gemm_nn(ad, bd, out.data(), batches * m, k, n);
      auto a_node = a.node();
      auto b_node = b.node();
      return make_output(std::move(out_shape), std::move(out), {&a, &b}, "matmul",
                         [a_node, b_node, batches, m, k, n](Node& self) {
                           const double f = fault("matmul");
                           const double* g = self.grad.data();
                           if (a_node->requires_grad) {
                             std::vector<double> tmp(batches * m * k, 0.0);
                             gemm_nt(g, b_node->data.data(), tmp.data(), batches * m, k, n);
                             auto& ga = a_node->grad_buffer();
                             for (std::size_t i = 0; i < tmp.size(); ++i) ga[i] += f * tmp[i];
                           }
                           if (b_node->requires_grad) {
                             auto& gb = b_node->grad_buffer();
                             std::vector<double> tmp(k * n, 0.0);
                             gemm_tn(a_node->data.data(), g, tmp.data(), batches * m, k, n);
                             for (std::size_t i = 0; i < tmp.size(); ++i) gb[i] += f * tmp[i];
                           }
                         });
    }
  }

  auto a_off = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(a_lead, lead));
  auto b_off = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(b_lead, lead));
  for (std::size_t bi = 0; bi < batches; ++bi) {
    gemm_nn(ad + (*a_off)[bi] * m * k, bd + (*b_off)[bi] * k * n, out.data() + bi * m * n, m,
            k, n);
  }
  auto a_node = a.node();
  auto b_node = b.node();
  return make_output(
      std::move(out_shape), std::move(out), {&a, &b}, "matmul",
      [a_node, b_node, a_off, b_off, batches, m, k, n](Node& self) {
        const double f = fault("matmul");
        const double* g = self.grad.data();
        if (a_node->requires_grad) {
          std::vector<double> tmp(a_node->data.size(), 0.0);
          for (std::size_t bi = 0; bi < batches; ++bi) {
            gemm_nt(g + bi * m * n, b_node->data.data() + (*b_off)[bi] * k * n,
                    tmp.data() + (*a_off)[bi] * m * k, m, k, n);
          }
          auto& ga = a_node->grad_buffer();
          for (std::size_t i = 0; i < tmp.size(); ++i) ga[i] += f * tmp[i];
        }
        if (b_node->requires_grad) {
          std::vector<double> tmp(b_node->data.size(), 0.0);
          for (std::size_t bi = 0; bi < batches; ++bi) {
            gemm_tn(a_node->data.data() + (*a_off)[bi] * m * k, g + bi * m * n,
                    tmp.data() + (*b_off)[bi] * k * n, m, k, n);
          }
          auto& gb = b_node->grad_buffer();
          for (std::size_t i = 0; i < tmp.size(); ++i) gb[i] += f * tmp[i];
        }
      });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  Shape out_shape;
  if (!broadcast_shape(a.shape(), b.shape(), out_shape)) {
    throw DimensionError("elementwise: shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " are not broadcastable");
  }
  const std::size_t n = shape_numel(out_shape);
  const bool same = a.shape() == out_shape && b.shape() == out_shape;
  std::shared_ptr<std::vector<std::size_t>> a_off;
  std::shared_ptr<std::vector<std::size_t>> b_off;
  if (!same) {
    a_off = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(a.shape(), out_shape));
    b_off = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(b.shape(), out_shape));
  }
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ad[same ? i : (*a_off)[i]];
    const double y = bd[same ? i : (*b_off)[i]];
    switch (op) {
      case ElementwiseOp::kAdd: out[i] = x + y; break;
      case ElementwiseOp::kSub: out[i] = x - y; break;
      case ElementwiseOp::kMul: out[i] = x * y; break;
    }
  }
  static constexpr const char* kNames[] = {"add", "sub", "mul"};
  const char* name = kNames[static_cast<int>(op)];
  auto a_node = a.node();
  auto b_node = b.node();
  return make_output(
      std::move(out_shape), std::move(out), {&a, &b}, name,
      [op, a_node, b_node, a_off, b_off, same, n, name](Node& self) {
        const double f = fault(name);
        const double* g = self.grad.data();
        if (a_node->requires_grad) {
          auto& ga = a_node->grad_buffer();
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t ia = same ? i : (*a_off)[i];
            double d = g[i];
            if (op == ElementwiseOp::kMul) d *= b_node->data[same ? i : (*b_off)[i]];
            ga[ia] += f * d;
          }
        }
        if (b_node->requires_grad) {
          auto& gb = b_node->grad_buffer();
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t ib = same ? i : (*b_off)[i];
            double d = g[i];
            if (op == ElementwiseOp::kSub) d = -d;
            if (op == ElementwiseOp::kMul) d *= a_node->data[same ? i : (*a_off)[i]];
            gb[ib] += f * d;
          }
        }
      });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, double b) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) {
    switch (op) {
      case ElementwiseOp::kAdd: v += b; break;
      case ElementwiseOp::kSub: v -= b; break;
      case ElementwiseOp::kMul: v *= b; break;
    }
  }
  const double slope = op == ElementwiseOp::kMul ? b : 1.0;
  auto a_node = a.node();
  return make_output(a.shape(), std::move(out), {&a}, "scalar_op",
                     [a_node, slope](Node& self) {
                       const double f = fault("scalar_op");
                       auto& ga = a_node->grad_buffer();
                       for (std::size_t i = 0; i < ga.size(); ++i) {
                         ga[i] += f * slope * self.grad[i];
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::kMul, a, b); }
Tensor scale(const Tensor& a, double factor) {
  return elementwise(ElementwiseOp::kMul, a, factor);
}
Tensor add_scalar(const Tensor& a, double value) {
  return elementwise(ElementwiseOp::kAdd, a, value);
}

Tensor activation(Activation kind, const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  const char* name = "relu";
  switch (kind) {
    case Activation::kRelu:
      for (auto& v : out) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::kSigmoid:
      name = "sigmoid";
      for (auto& v : out) {
        // Split by sign so exp never overflows.
        if (v >= 0.0) {
          v = 1.0 / (1.0 + std::exp(-v));
        } else {
          const double e = std::exp(v);
          v = e / (1.0 + e);
        }
      }
      break;
    case Activation::kTanh:
      name = "tanh";
      for (auto& v : out) v = std::tanh(v);
      break;
  }
  auto x_node = x.node();
  return make_output(x.shape(), std::move(out), {&x}, name, [x_node, kind, name](Node& self) {
    const double f = fault(name);
    auto& gx = x_node->grad_buffer();
    const auto& y = self.data;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      double d = 0.0;
      switch (kind) {
        case Activation::kRelu: d = x_node->data[i] > 0.0 ? 1.0 : 0.0; break;
        case Activation::kSigmoid: d = y[i] * (1.0 - y[i]); break;
        case Activation::kTanh: d = 1.0 - y[i] * y[i]; break;
      }
      gx[i] += f * d * self.grad[i];
    }
  });
}

Tensor abs(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = std::fabs(v);
  auto x_node = x.node();
  return make_output(x.shape(), std::move(out), {&x}, "abs", [x_node](Node& self) {
    const double f = fault("abs");
    auto& gx = x_node->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double v = x_node->data[i];
      const double s = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
      gx[i] += f * s * self.grad[i];
    }
  });
}

Tensor softmax_lastdim(const Tensor& x) {
  require_rank_at_least(x, 1, "softmax_lastdim");
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.numel() / cols;
  std::vector<double> out(x.numel());
  const double* xd = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  auto x_node = x.node();
  return make_output(x.shape(), std::move(out), {&x}, "softmax",
                     [x_node, rows, cols](Node& self) {
                       const double f = fault("softmax");
                       auto& gx = x_node->grad_buffer();
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* y = self.data.data() + r * cols;
                         const double* g = self.grad.data() + r * cols;
                         double dot = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) dot += y[c] * g[c];
                         for (std::size_t c = 0; c < cols; ++c) {
                           gx[r * cols + c] += f * y[c] * (g[c] - dot);
                         }
                       }
                     });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  auto x_node = x.node();
  return make_output(Shape{}, {total}, {&x}, "sum", [x_node](Node& self) {
    const double g = fault("sum") * self.grad[0];
    for (auto& v : x_node->grad_buffer()) v += g;
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto x_node = x.node();
  return make_output(std::move(shape), std::move(out), {&x}, "reshape", [x_node](Node& self) {
    auto& gx = x_node->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const Shape& in_shape = x.shape();
  const std::size_t r = in_shape.size();
  if (axes.size() != r) {
    throw DimensionError("permute: axis list length does not match shape " +
                         shape_str(in_shape));
  }
  std::vector<bool> seen(r, false);
  for (auto a : axes) {
    if (a >= r || seen[a]) throw DimensionError("permute: invalid axis list");
    seen[a] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = in_shape[axes[i]];
  const auto in_strides = strides_of(in_shape);
  Shape step(r);
  for (std::size_t i = 0; i < r; ++i) step[i] = in_strides[axes[i]];

  const std::size_t n = x.numel();
  auto src = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> counter(r, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    (*src)[flat] = offset;
    for (std::size_t axis = r; axis-- > 0;) {
      if (++counter[axis] < out_shape[axis]) {
        offset += step[axis];
        break;
      }
      offset -= step[axis] * (out_shape[axis] - 1);
      counter[axis] = 0;
    }
  }
  std::vector<double> out(n);
  const double* xd = x.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = xd[(*src)[i]];
  auto x_node = x.node();
  return make_output(std::move(out_shape), std::move(out), {&x}, "permute",
                     [x_node, src](Node& self) {
                       auto& gx = x_node->grad_buffer();
                       for (std::size_t i = 0; i < src->size(); ++i) {
                         gx[(*src)[i]] += self.grad[i];
                       }
                     });
}

Tensor transpose_last2(const Tensor& x) {
  require_rank_at_least(x, 2, "transpose_last2");
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
  return permute(x, axes);
}

Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& indices) {
  if (table.rank() != 2) {
    throw DimensionError("gather_rows: table must be 2-D, got " + shape_str(table.shape()));
  }
  if (indices.empty()) throw DimensionError("gather_rows: empty index list");
  const std::size_t rows = table.dim(0);
  const std::size_t cols = table.dim(1);
  std::vector<double> out(indices.size() * cols);
  const double* td = table.data().data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) {
      throw DimensionError("gather_rows: row " + std::to_string(indices[i]) +
                           " out of range for table " + shape_str(table.shape()));
    }
    std::copy(td + indices[i] * cols, td + (indices[i] + 1) * cols, out.begin() + i * cols);
  }
  auto t_node = table.node();
  return make_output(Shape{indices.size(), cols}, std::move(out), {&table}, "gather_rows",
                     [t_node, indices, cols](Node& self) {
                       const double f = fault("gather_rows");
                       auto& gt = t_node->grad_buffer();
                       for (std::size_t i = 0; i < indices.size(); ++i) {
                         for (std::size_t c = 0; c < cols; ++c) {
                           gt[indices[i] * cols + c] += f * self.grad[i * cols + c];
                         }
                       }
                     });
}

Tensor temporal_conv(const Tensor& x, const Tensor& kernel, std::size_t t_out,
                     std::size_t f_out) {
  require_rank_at_least(x, 2, "temporal_conv");
  const Shape& xs = x.shape();
  const std::size_t t_in = xs[xs.size() - 2];
  const std::size_t f_in = xs.back();
  const Shape expected{t_in * f_in, t_out * f_out};
  if (kernel.shape() != expected) {
    throw DimensionError("temporal_conv: kernel " + shape_str(kernel.shape()) +
                         " does not map (" + std::to_string(t_in) + ", " + std::to_string(f_in) +
                         ") to (" + std::to_string(t_out) + ", " + std::to_string(f_out) +
                         "); expected " + shape_str(expected));
  }
  Shape flat(xs.begin(), xs.end() - 2);
  flat.push_back(t_in * f_in);
  Shape result(xs.begin(), xs.end() - 2);
  result.push_back(t_out);
  result.push_back(f_out);
  if (flat.size() == 1) {
    // A single node block: lift to a row vector for matmul.
    flat.insert(flat.begin(), 1);
  }
  return reshape(matmul(reshape(x, flat), kernel), result);
}

}  // namespace mcsttm
